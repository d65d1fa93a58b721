"""Emergency-department prediction benchmark pipeline."""

from ._edbench import (
    DataError,
    DivergenceError,
    UsageError,
    __version__,
    auroc,
    build,
    evaluate,
    fixture,
    propagate_code,
    relative_improvement,
    report,
    train,
    trend_statistics,
)

__all__ = [
    "DataError",
    "DivergenceError",
    "UsageError",
    "__version__",
    "auroc",
    "build",
    "evaluate",
    "fixture",
    "propagate_code",
    "relative_improvement",
    "report",
    "train",
    "trend_statistics",
]
