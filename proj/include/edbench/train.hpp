#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "edbench/cohort.hpp"
#include "edbench/eval.hpp"
#include "edbench/features.hpp"
#include "edbench/gbdt.hpp"
#include "edbench/ingest.hpp"
#include "edbench/labels.hpp"
#include "edbench/nn.hpp"
#include "edbench/splits.hpp"

namespace edbench::train {

/// The five input scenarios of the benchmark table.
enum class Scenario {
    RoutineTree,          // clinical routine data (tree)
    EcgFeatTree,          // ECG machine features (tree)
    WaveDeep,             // ECG waveforms (deep)
    EcgFeatRoutineTree,   // ECG features + routine (tree)
    WaveRoutineDeep,      // ECG waveforms + routine (deep, fusion)
};

Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);
bool scenario_is_tree(Scenario s);
bool scenario_uses_waveform(Scenario s);
bool scenario_uses_routine(Scenario s);
bool scenario_uses_ecg_features(Scenario s);

struct ModelProfile {
    std::string name;  // desk | paper
    int n_blocks = 2;
    int d_model = 64;
    int d_state = 8;
    int epochs = 4;
    int batch_size = 64;
    double lr = 0.001;
    double weight_decay = 0.001;
    int embed_dim = 8;
    double sampling_rate_target = 50.0;
    gbdt::TreeConfig tree;

    static ModelProfile desk();
    static ModelProfile paper();
    static ModelProfile by_name(const std::string& name);
};

/// Build artifacts loaded back for training/evaluation.
struct Dataset {
    std::vector<cohort::Sample> samples;
    features::FeatureMatrix features;
    labels::LabelSpace label_space;
    labels::LabelMatrix label_matrix;
    std::string waveform_dir;

    static Dataset load(const std::string& artifact_dir, const std::string& waveform_dir);
};

/// Column subset of the label space used for training/eval (defaults all).
std::vector<std::size_t> label_subset(const labels::LabelSpace& space,
                                      const std::vector<std::string>& filter);

// ---------------------------------------------------------------------------
// Waveform preparation
// ---------------------------------------------------------------------------

/// Anti-aliased integer-factor decimation (windowed-sinc FIR). Identity when
/// rates match; non-integer ratios are an error.
std::vector<std::vector<double>> resample_waveform(const WaveformRecord& record,
                                                   double target_rate);

/// Sample waveforms resampled once up front, stored as float to halve
/// memory. When `rows` is given only those sample indices are materialized.
struct WaveBank {
    Eigen::Index t_len = 0;
    std::vector<Eigen::MatrixXf> waves;  // indexed by sample row; empty if unloaded

    static WaveBank load(const ingest::WaveformStore& store,
                         const std::vector<cohort::Sample>& samples, double target_rate,
                         const std::vector<std::size_t>* rows = nullptr);
    /// Z-scored T x 12 matrix for one sample row.
    nn::Matrix sample(std::size_t i, const std::vector<double>& lead_mean,
                      const std::vector<double>& lead_std) const;
};

// ---------------------------------------------------------------------------
// Deep model bundle
// ---------------------------------------------------------------------------

struct DeepConfig {
    bool use_wave = false;
    bool use_tab = false;
    bool mask_columns = true;
    int n_labels = 0;
    nn::WaveEncoderConfig wave;
    nn::TabEncoderConfig tab;
};

/// Optional wave/tab encoders feeding a linear head over their
/// concatenation.
struct DeepModel {
    DeepConfig config;
    std::optional<nn::WaveEncoder> wave;
    std::optional<nn::TabEncoder> tab;
    nn::Linear head;

    void init(const DeepConfig& config, Rng& rng);
    std::vector<nn::Param*> params();

    struct Caches {
        nn::WaveEncoder::Cache wave;
        nn::TabEncoder::Cache tab;
        Eigen::RowVectorXd concat;
    };

    /// Per-sample logits (1 x n_labels). Null inputs allowed for unused
    /// branches.
    Eigen::RowVectorXd forward(const nn::Matrix* wave_input,
                               const Eigen::RowVectorXd* tab_numeric,
                               const std::vector<int>* tab_cats, Caches* caches) const;
    void backward(const Caches& caches, const Eigen::RowVectorXd& dlogits,
                  const nn::Matrix* wave_input);
};

// ---------------------------------------------------------------------------
// Normalization statistics (train split only)
// ---------------------------------------------------------------------------

struct NormStats {
    std::vector<double> lead_mean, lead_std;      // per waveform lead
    std::vector<double> tab_mean, tab_std;        // per deep tabular numeric input
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainLogRow {
    int epoch = 0;
    double loss = 0.0;
    double val_macro = 0.0;
};

struct Checkpoint {
    std::string scenario;
    std::string profile;
    std::uint64_t seed = 0;
    bool mask_columns = true;
    double sampling_rate_target = 0.0;
    std::string label_space_hash;
    std::string feature_schema_hash;
    std::vector<std::string> label_names;  // trained subset, in head order
    int best_epoch = -1;
    double best_val_macro = 0.0;

    // deep
    std::optional<DeepConfig> deep_config;
    std::map<std::string, std::pair<std::vector<double>, std::pair<int, int>>> weights;
    NormStats norms;
    splits::Imputer imputer;

    // tree
    std::vector<std::optional<gbdt::GbdtModel>> tree_models;  // per label, empty = skipped
    std::vector<std::string> skipped_labels;

    std::vector<TrainLogRow> log;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

struct TrainOptions {
    Scenario scenario = Scenario::RoutineTree;
    ModelProfile profile = ModelProfile::desk();
    std::uint64_t seed = 1;
    bool mask_columns = true;
    int val_fold = 0;
    int test_fold = 0;
    std::vector<std::string> label_filter;  // empty = all labels
    std::optional<int> epochs_override;
};

/// Trains the scenario's model; deep scenarios select the checkpoint with
/// the best validation macro AUROC over first-of-visit rows.
Checkpoint train_scenario(const Dataset& dataset, const TrainOptions& options);

/// Unimodal tabular deep model (ablation harness; not one of the five CLI
/// scenarios). Same checkpoint contract.
Checkpoint train_tabular_deep(const Dataset& dataset, const TrainOptions& options);

/// Scores rows with a checkpoint; refuses mismatched label-space or feature
/// hashes. Probabilities in [0,1].
eval::ScoreMatrix score_with_checkpoint(const Checkpoint& checkpoint, const Dataset& dataset,
                                        const std::vector<std::size_t>& rows);

}  // namespace edbench::train
