#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edbench/core.hpp"
#include "edbench/labels.hpp"

namespace edbench::eval {

/// Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie).
/// Throws DataError when a class is absent.
double auroc(const std::vector<double>& scores, const std::vector<int>& binary_labels);

/// Scores and ternary labels for a set of rows; MASKED entries are skipped
/// per label, single-class labels are skipped from the macro mean.
struct ScoreMatrix {
    std::size_t n_labels = 0;
    std::vector<double> scores;        // row-major rows x labels
    std::vector<labels::Ternary> y;    // row-major rows x labels

    std::size_t rows() const { return n_labels == 0 ? 0 : scores.size() / n_labels; }
};

/// Per-label AUROC; empty optional when the label lacks a class.
std::vector<std::optional<double>> per_label_auroc(const ScoreMatrix& m,
                                                   const std::vector<std::size_t>& rows);

/// Unweighted mean of defined per-label AUROCs. Throws when none defined.
double macro_auroc(const ScoreMatrix& m, const std::vector<std::size_t>& rows);

struct BootstrapResult {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentile bootstrap over rows: resample with replacement n_iter times,
/// lo/hi at (1-level)/2 and 1-(1-level)/2 quantiles. The metric receives the
/// resampled row indices.
BootstrapResult bootstrap_ci(const std::function<double(const std::vector<std::size_t>&)>& metric,
                             const std::vector<std::size_t>& rows, int n_iter, double level,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct LabelResult {
    std::string name;
    std::optional<double> auroc;  // empty = undefined (single class)
    double ci_lo = kMissing;
    double ci_hi = kMissing;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

struct ChapterRow {
    std::string chapter;       // roman numeral
    std::string name;          // chapter title
    double mean_auroc = 0.0;
    std::size_t n_labels = 0;
    std::size_t n_above_080 = 0;  // labels whose CI lower bound exceeds 0.80
};

class ChapterMap {
  public:
    static ChapterMap load(const std::string& path);
    /// Chapter roman numeral for a diagnosis code; error naming the code
    /// when no range covers it.
    std::string chapter_of(const std::string& code) const;
    std::string name_of(const std::string& chapter) const;
    const std::vector<std::string>& order() const { return order_; }

  private:
    struct Range {
        std::string chapter;
        std::string lo;
        std::string hi;
        std::string name;
    };
    std::vector<Range> ranges_;
    std::vector<std::string> order_;
};

/// Per-chapter unweighted mean over defined diagnosis-label AUROCs.
std::vector<ChapterRow> chapter_report(const std::vector<LabelResult>& diagnosis_results,
                                       const ChapterMap& chapters);

struct DeteriorationReport {
    double clinical_deterioration = 0.0;  // 6 targets
    double icu = 0.0;                     // 2 targets
    double mortality = 0.0;               // 7 targets
};

/// Category means over the fixed memberships; every target must be present
/// and defined.
DeteriorationReport deterioration_report(const std::map<std::string, double>& auroc_by_target,
                                         const labels::DeteriorationSpec& spec);

/// 100 * (a - b) / b rounded to 2 decimals. b must be positive.
double relative_improvement(double a, double b);

struct EvalReport {
    std::string scenario;
    std::size_t n_rows = 0;  // first-of-visit test rows
    std::vector<LabelResult> per_label;
    double macro = 0.0;
    double macro_lo = 0.0;
    double macro_hi = 0.0;
    std::vector<ChapterRow> chapters;
    std::optional<DeteriorationReport> deterioration;

    void save_json(const std::string& path) const;
    static EvalReport load_json(const std::string& path);
    std::string text() const;
};

}  // namespace edbench::eval
