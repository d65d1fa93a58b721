#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edbench/eval.hpp"
#include "edbench/train.hpp"

namespace edbench::pipeline {

/// One experiment, fully described by one JSON file. Relative data-file
/// paths (registry, mapping tables) resolve against EDBENCH_DATA_ROOT when
/// that variable is set.
struct ExperimentConfig {
    std::string data_dir;    // source tables + waveform store
    std::string output_dir;  // build artifacts, checkpoints, reports

    std::string scenario = "routine_tree";
    std::string profile = "desk";
    std::uint64_t seed = 1;
    bool mask_columns = true;
    std::optional<int> epochs;
    std::vector<std::string> label_filter;

    int n_folds = 20;
    int val_fold = 18;
    int test_fold = 19;
    std::int64_t min_count = 25;
    std::string vocab_file;  // optional: fixed vocabulary instead of counting
    std::string fold_file;   // optional: externally supplied folds

    std::string registry_path = "data/variable_registry.json";
    std::string gem_path = "data/icd9_to_icd10.csv";
    std::string deterioration_path = "data/deterioration_targets.json";
    std::string chapters_path = "data/icd_chapters.json";

    int bootstrap_iters = 1000;
    double ci_level = 0.95;
    std::uint64_t eval_seed = 17;
    std::string checkpoint_path;  // optional override

    static ExperimentConfig load(const std::string& path);
    /// Resolves a data-file path against EDBENCH_DATA_ROOT when relative.
    std::string resolve(const std::string& path) const;
    /// Default checkpoint path for the configured scenario and seed.
    std::string default_checkpoint_path() const;
};

/// Builds all dataset artifacts under output_dir and writes
/// build_manifest.json with a content hash per artifact.
void cmd_build(const ExperimentConfig& config);

/// Trains the configured scenario; writes the checkpoint and a per-epoch
/// training log. Returns the checkpoint path.
std::string cmd_train(const ExperimentConfig& config);

/// Scores first-of-visit test rows, bootstraps CIs, writes
/// eval_report.json/.txt next to the checkpoint. Returns the JSON path.
std::string cmd_eval(const ExperimentConfig& config, const std::string& checkpoint_path);

/// Comparison table across evaluation reports (in argument order). With two
/// or more reports a relative-improvement column (last over first) is added.
void cmd_report(const std::vector<std::string>& report_paths, const std::string& out_prefix,
                const ExperimentConfig& config);

}  // namespace edbench::pipeline
