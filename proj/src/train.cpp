#include "edbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace edbench::train {

using nlohmann::json;

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

// ---------------------------------------------------------------------------
// Scenarios and profiles
// ---------------------------------------------------------------------------

Scenario parse_scenario(const std::string& name) {
    if (name == "routine_tree") return Scenario::RoutineTree;
    if (name == "ecgfeat_tree") return Scenario::EcgFeatTree;
    if (name == "wave_deep") return Scenario::WaveDeep;
    if (name == "ecgfeat_routine_tree") return Scenario::EcgFeatRoutineTree;
    if (name == "wave_routine_deep") return Scenario::WaveRoutineDeep;
    throw UsageError("unknown scenario: " + name);
}

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::RoutineTree: return "routine_tree";
        case Scenario::EcgFeatTree: return "ecgfeat_tree";
        case Scenario::WaveDeep: return "wave_deep";
        case Scenario::EcgFeatRoutineTree: return "ecgfeat_routine_tree";
        case Scenario::WaveRoutineDeep: return "wave_routine_deep";
    }
    throw UsageError("unknown scenario value");
}

bool scenario_is_tree(Scenario s) {
    return s == Scenario::RoutineTree || s == Scenario::EcgFeatTree ||
           s == Scenario::EcgFeatRoutineTree;
}

bool scenario_uses_waveform(Scenario s) {
    return s == Scenario::WaveDeep || s == Scenario::WaveRoutineDeep;
}

bool scenario_uses_routine(Scenario s) {
    return s == Scenario::RoutineTree || s == Scenario::EcgFeatRoutineTree ||
           s == Scenario::WaveRoutineDeep;
}

bool scenario_uses_ecg_features(Scenario s) {
    return s == Scenario::EcgFeatTree || s == Scenario::EcgFeatRoutineTree;
}

ModelProfile ModelProfile::desk() {
    ModelProfile p;
    p.name = "desk";
    p.n_blocks = 2;
    p.d_model = 32;
    p.d_state = 8;
    p.epochs = 4;
    p.sampling_rate_target = 50.0;
    return p;
}

ModelProfile ModelProfile::paper() {
    ModelProfile p;
    p.name = "paper";
    p.n_blocks = 4;
    p.d_model = 512;
    p.d_state = 8;
    p.epochs = 20;
    p.sampling_rate_target = 100.0;
    return p;
}

ModelProfile ModelProfile::by_name(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw UsageError("unknown profile: " + name + " (expected desk or paper)");
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

Dataset Dataset::load(const std::string& artifact_dir, const std::string& waveform_dir) {
    Dataset d;
    d.samples = cohort::read_sample_index(artifact_dir + "/samples.csv");
    auto schema = features::FeatureSchema::load(artifact_dir + "/feature_schema.json");
    d.features = features::read_feature_matrix(artifact_dir + "/features.csv", schema);
    d.label_space = labels::LabelSpace::load(artifact_dir + "/label_space.json");
    std::vector<std::string> ids;
    ids.reserve(d.samples.size());
    for (const auto& s : d.samples) ids.push_back(s.sample_id);
    d.label_matrix = labels::read_label_matrix(artifact_dir + "/labels.csv", d.label_space, ids);
    d.waveform_dir = waveform_dir;
    if (d.features.sample_ids != ids)
        throw DataError("feature matrix rows do not match the sample index");
    return d;
}

std::vector<std::size_t> label_subset(const labels::LabelSpace& space,
                                      const std::vector<std::string>& filter) {
    std::vector<std::size_t> out;
    if (filter.empty()) {
        out.resize(space.size());
        std::iota(out.begin(), out.end(), std::size_t{0});
        return out;
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < space.names.size(); ++i) index[space.names[i]] = i;
    for (const auto& name : filter) {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("label filter names an unknown label: " + name);
        out.push_back(it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Waveform resampling
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> resample_waveform(const WaveformRecord& record,
                                                   double target_rate) {
    if (target_rate <= 0.0) throw UsageError("target sampling rate must be positive");
    const double ratio = record.sampling_rate / target_rate;
    if (ratio < 1.0 - 1e-9)
        throw DataError("record " + record.record_id + " sampled below the target rate");
    const int factor = static_cast<int>(std::llround(ratio));
    if (std::abs(ratio - factor) > 1e-9)
        throw DataError("record " + record.record_id +
                        " needs a non-integer resampling factor; only integer decimation is supported");
    if (factor == 1) return record.samples;

    // Windowed-sinc low-pass at 0.45 of the target Nyquist band, Hamming
    // window, unity DC gain; zero padding at the edges.
    const int half = 10 * factor;
    const int n_taps = 2 * half + 1;
    std::vector<double> h(static_cast<std::size_t>(n_taps));
    const double fc = 0.45 / factor;  // cycles per source sample
    double sum = 0.0;
    for (int n = 0; n < n_taps; ++n) {
        const int k = n - half;
        double v;
        if (k == 0) {
            v = 2.0 * fc;
        } else {
            const double x = 2.0 * fc * k;
            v = 2.0 * fc * std::sin(kPi * x) / (kPi * x);
        }
        const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (n_taps - 1));
        h[static_cast<std::size_t>(n)] = v * w;
        sum += v * w;
    }
    for (double& v : h) v /= sum;

    const std::size_t t_in = record.length();
    const std::size_t t_out = t_in / static_cast<std::size_t>(factor);
    std::vector<std::vector<double>> out(record.samples.size());
    for (std::size_t lead = 0; lead < record.samples.size(); ++lead) {
        const auto& x = record.samples[lead];
        auto& y = out[lead];
        y.resize(t_out, 0.0);
        for (std::size_t t = 0; t < t_out; ++t) {
            const std::int64_t center = static_cast<std::int64_t>(t) * factor;
            double acc = 0.0;
            for (int n = 0; n < n_taps; ++n) {
                const std::int64_t src = center + (n - half);
                if (src < 0 || src >= static_cast<std::int64_t>(t_in)) continue;
                acc += h[static_cast<std::size_t>(n)] * x[static_cast<std::size_t>(src)];
            }
            y[t] = acc;
        }
    }
    return out;
}

WaveBank WaveBank::load(const ingest::WaveformStore& store,
                        const std::vector<cohort::Sample>& samples, double target_rate,
                        const std::vector<std::size_t>* rows) {
    WaveBank bank;
    bank.waves.resize(samples.size());
    std::vector<std::size_t> all;
    if (rows == nullptr) {
        all.resize(samples.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        rows = &all;
    }
    for (std::size_t i : *rows) {
        const auto record = store.load(samples[i].record_id);
        const auto leads = resample_waveform(record, target_rate);
        const auto t = static_cast<Eigen::Index>(leads.empty() ? 0 : leads[0].size());
        if (bank.t_len == 0) bank.t_len = t;
        if (t != bank.t_len)
            throw DataError("record " + record.record_id + " resamples to an inconsistent length");
        Eigen::MatrixXf m(t, static_cast<Eigen::Index>(leads.size()));
        for (std::size_t lead = 0; lead < leads.size(); ++lead)
            for (Eigen::Index tt = 0; tt < t; ++tt)
                m(tt, static_cast<Eigen::Index>(lead)) =
                    static_cast<float>(leads[lead][static_cast<std::size_t>(tt)]);
        bank.waves[i] = std::move(m);
    }
    return bank;
}

nn::Matrix WaveBank::sample(std::size_t i, const std::vector<double>& lead_mean,
                            const std::vector<double>& lead_std) const {
    const Eigen::MatrixXf& src = waves.at(i);
    if (src.size() == 0) throw DataError("waveform for sample row was not loaded");
    nn::Matrix out(src.rows(), src.cols());
    for (Eigen::Index c = 0; c < src.cols(); ++c) {
        const double mu = lead_mean.at(static_cast<std::size_t>(c));
        const double sd = lead_std.at(static_cast<std::size_t>(c));
        for (Eigen::Index r = 0; r < src.rows(); ++r)
            out(r, c) = (static_cast<double>(src(r, c)) - mu) / sd;
    }
    return out;
}

namespace {

/// Per-lead mean/std over the train rows of a bank.
void lead_stats(const WaveBank& bank, const std::vector<std::size_t>& rows,
                std::vector<double>* mean, std::vector<double>* std_out) {
    const std::size_t n_leads = kEcgLeads;
    std::vector<double> sum(n_leads, 0.0), sumsq(n_leads, 0.0);
    std::size_t count = 0;
    for (std::size_t i : rows) {
        const auto& m = bank.waves.at(i);
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                const double v = m(r, c);
                sum[static_cast<std::size_t>(c)] += v;
                sumsq[static_cast<std::size_t>(c)] += v * v;
            }
        }
        count += static_cast<std::size_t>(m.rows());
    }
    mean->assign(n_leads, 0.0);
    std_out->assign(n_leads, 1.0);
    if (count == 0) return;
    for (std::size_t c = 0; c < n_leads; ++c) {
        const double mu = sum[c] / static_cast<double>(count);
        const double var = std::max(sumsq[c] / static_cast<double>(count) - mu * mu, 0.0);
        (*mean)[c] = mu;
        const double sd = std::sqrt(var);
        (*std_out)[c] = sd > 1e-12 ? sd : 1.0;
    }
}

/// Which columns feed a tabular model.
struct TabularDesign {
    bool routine = false;
    bool ecg_feats = false;
    bool masks = true;
};

TabularDesign design_for(Scenario s, bool mask_columns) {
    TabularDesign d;
    d.routine = scenario_uses_routine(s);
    d.ecg_feats = scenario_uses_ecg_features(s);
    d.masks = mask_columns;
    return d;
}

struct TreeMatrix {
    std::vector<double> X;  // row-major, all dataset rows
    std::size_t dim = 0;
    std::vector<std::string> names;
};

/// Tree input: selected raw columns (missing stays NaN) plus categorical
/// indices; in mask mode values are imputed and mask bits appended.
TreeMatrix build_tree_inputs(const Dataset& data, const TabularDesign& design,
                             const splits::Imputer* imputer) {
    const auto& schema = data.features.schema;
    const std::size_t n = data.features.rows();
    const std::size_t n_num = schema.numeric_names.size();
    const std::size_t n_ecg = schema.ecg_names.size();
    if (design.masks && imputer == nullptr)
        throw UsageError("mask-column tree inputs need a fitted imputer");

    TreeMatrix out;
    if (design.routine) {
        for (const auto& name : schema.numeric_names) out.names.push_back(name);
        if (design.masks)
            for (const auto& name : schema.numeric_names) out.names.push_back(name + "_missing");
    }
    if (design.ecg_feats) {
        for (const auto& name : schema.ecg_names) out.names.push_back("ecg_" + name);
        if (design.masks)
            for (const auto& name : schema.ecg_names)
                out.names.push_back("ecg_" + name + "_missing");
    }
    for (const auto& name : schema.categorical_names) out.names.push_back(name);
    out.dim = out.names.size();
    out.X.assign(n * out.dim, 0.0);

    for (std::size_t r = 0; r < n; ++r) {
        double* row = out.X.data() + r * out.dim;
        std::size_t k = 0;
        if (design.routine) {
            const double* num = data.features.numeric_row(r);
            for (std::size_t j = 0; j < n_num; ++j) {
                const double v = num[j];
                if (design.masks) {
                    row[k] = is_missing(v) ? imputer->numeric_medians[j] : v;
                    row[n_num + k] = is_missing(v) ? 1.0 : 0.0;
                } else {
                    row[k] = v;
                }
                ++k;
            }
            if (design.masks) k += n_num;
        }
        if (design.ecg_feats) {
            const double* ecg = data.features.ecg_row(r);
            const std::size_t base = k;
            for (std::size_t j = 0; j < n_ecg; ++j) {
                const double v = ecg[j];
                if (design.masks) {
                    row[base + j] = is_missing(v) ? imputer->ecg_medians[j] : v;
                    row[base + n_ecg + j] = is_missing(v) ? 1.0 : 0.0;
                } else {
                    row[base + j] = v;
                }
            }
            k += design.masks ? 2 * n_ecg : n_ecg;
        }
        const int* cats = data.features.categorical_row(r);
        for (std::size_t j = 0; j < schema.categorical_names.size(); ++j)
            row[k + j] = static_cast<double>(cats[j]);
    }
    return out;
}

/// Deep numeric input: imputed + z-scored routine values, then the mask
/// bits when enabled. Rows cover the whole dataset.
Eigen::MatrixXd build_deep_numeric(const Dataset& data, const splits::Imputer& imputer,
                                   const NormStats& norms, bool mask_columns) {
    const std::size_t n = data.features.rows();
    const std::size_t n_num = data.features.schema.numeric_names.size();
    if (norms.tab_mean.size() != n_num || norms.tab_std.size() != n_num)
        throw DataError("tabular normalization stats do not match the feature schema");
    const std::size_t dim = mask_columns ? 2 * n_num : n_num;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < n; ++r) {
        const double* num = data.features.numeric_row(r);
        for (std::size_t j = 0; j < n_num; ++j) {
            const bool miss = is_missing(num[j]);
            const double filled = miss ? imputer.numeric_medians[j] : num[j];
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                (filled - norms.tab_mean[j]) / norms.tab_std[j];
            if (mask_columns)
                X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n_num + j)) =
                    miss ? 1.0 : 0.0;
        }
    }
    return X;
}

/// Mean/std of the imputed numeric columns over the train rows.
void tab_stats(const Dataset& data, const splits::Imputer& imputer,
               const std::vector<std::size_t>& rows, std::vector<double>* mean,
               std::vector<double>* std_out) {
    const std::size_t n_num = data.features.schema.numeric_names.size();
    mean->assign(n_num, 0.0);
    std_out->assign(n_num, 1.0);
    if (rows.empty()) return;
    std::vector<double> sum(n_num, 0.0), sumsq(n_num, 0.0);
    for (std::size_t r : rows) {
        const double* num = data.features.numeric_row(r);
        for (std::size_t j = 0; j < n_num; ++j) {
            const double v = is_missing(num[j]) ? imputer.numeric_medians[j] : num[j];
            sum[j] += v;
            sumsq[j] += v * v;
        }
    }
    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < n_num; ++j) {
        const double mu = sum[j] / n;
        const double var = std::max(sumsq[j] / n - mu * mu, 0.0);
        (*mean)[j] = mu;
        const double sd = std::sqrt(var);
        (*std_out)[j] = sd > 1e-12 ? sd : 1.0;
    }
}

std::vector<int> cat_row(const features::FeatureMatrix& m, std::size_t r) {
    const int* c = m.categorical_row(r);
    return std::vector<int>(c, c + m.schema.categorical_names.size());
}

std::vector<std::size_t> first_of_visit(const std::vector<cohort::Sample>& samples,
                                        const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> out;
    for (std::size_t r : rows)
        if (samples[r].is_first_of_visit) out.push_back(r);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Deep model bundle
// ---------------------------------------------------------------------------

void DeepModel::init(const DeepConfig& config_in, Rng& rng) {
    config = config_in;
    wave.reset();
    tab.reset();
    int head_in = 0;
    if (config.use_wave) {
        wave.emplace();
        wave->init(config.wave, rng);
        head_in += config.wave.d_model;
    }
    if (config.use_tab) {
        tab.emplace();
        tab->init(config.tab, rng);
        head_in += config.tab.d_model;
    }
    if (head_in == 0) throw UsageError("deep model needs at least one encoder");
    head.init("head", head_in, config.n_labels, rng);
}

std::vector<nn::Param*> DeepModel::params() {
    std::vector<nn::Param*> out;
    if (wave) {
        auto p = wave->params();
        out.insert(out.end(), p.begin(), p.end());
    }
    if (tab) {
        auto p = tab->params();
        out.insert(out.end(), p.begin(), p.end());
    }
    auto p = head.params();
    out.insert(out.end(), p.begin(), p.end());
    return out;
}

Eigen::RowVectorXd DeepModel::forward(const nn::Matrix* wave_input,
                                      const Eigen::RowVectorXd* tab_numeric,
                                      const std::vector<int>* tab_cats, Caches* caches) const {
    Eigen::RowVectorXd concat(head.W.value.cols());
    Eigen::Index at = 0;
    if (wave) {
        if (wave_input == nullptr) throw UsageError("scenario expects a waveform input");
        concat.segment(at, config.wave.d_model) =
            wave->forward(*wave_input, caches ? &caches->wave : nullptr);
        at += config.wave.d_model;
    }
    if (tab) {
        if (tab_numeric == nullptr || tab_cats == nullptr)
            throw UsageError("scenario expects tabular inputs");
        concat.segment(at, config.tab.d_model) =
            tab->forward(*tab_numeric, *tab_cats, caches ? &caches->tab : nullptr);
        at += config.tab.d_model;
    }
    nn::Matrix logits = head.forward(concat);
    if (caches) caches->concat = concat;
    return logits.row(0);
}

void DeepModel::backward(const Caches& caches, const Eigen::RowVectorXd& dlogits,
                         const nn::Matrix* wave_input) {
    nn::Matrix dconcat = head.backward(caches.concat, dlogits);
    Eigen::Index at = 0;
    if (wave) {
        if (wave_input == nullptr) throw UsageError("waveform input needed for backward");
        // Recompute the forward caches for this sample, then push gradients.
        nn::WaveEncoder::Cache cache;
        wave->forward(*wave_input, &cache);
        wave->backward(cache, dconcat.row(0).segment(at, config.wave.d_model));
        at += config.wave.d_model;
    }
    if (tab) {
        tab->backward(caches.tab, dconcat.row(0).segment(at, config.tab.d_model));
        at += config.tab.d_model;
    }
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

json deep_config_to_json(const DeepConfig& c) {
    return json{{"use_wave", c.use_wave},
                {"use_tab", c.use_tab},
                {"mask_columns", c.mask_columns},
                {"n_labels", c.n_labels},
                {"wave",
                 {{"n_blocks", c.wave.n_blocks},
                  {"d_model", c.wave.d_model},
                  {"d_state", c.wave.d_state},
                  {"n_leads", c.wave.n_leads}}},
                {"tab",
                 {{"numeric_dim", c.tab.numeric_dim},
                  {"d_model", c.tab.d_model},
                  {"embed_dim", c.tab.embed_dim},
                  {"categorical_cardinalities", c.tab.categorical_cardinalities}}}};
}

DeepConfig deep_config_from_json(const json& j) {
    DeepConfig c;
    c.use_wave = j.at("use_wave").get<bool>();
    c.use_tab = j.at("use_tab").get<bool>();
    c.mask_columns = j.at("mask_columns").get<bool>();
    c.n_labels = j.at("n_labels").get<int>();
    const auto& w = j.at("wave");
    c.wave.n_blocks = w.at("n_blocks").get<int>();
    c.wave.d_model = w.at("d_model").get<int>();
    c.wave.d_state = w.at("d_state").get<int>();
    c.wave.n_leads = w.at("n_leads").get<int>();
    const auto& t = j.at("tab");
    c.tab.numeric_dim = t.at("numeric_dim").get<int>();
    c.tab.d_model = t.at("d_model").get<int>();
    c.tab.embed_dim = t.at("embed_dim").get<int>();
    c.tab.categorical_cardinalities =
        t.at("categorical_cardinalities").get<std::vector<int>>();
    return c;
}

json imputer_to_json(const splits::Imputer& imp) {
    return json{{"numeric_medians", imp.numeric_medians},
                {"ecg_medians", imp.ecg_medians},
                {"warnings", imp.warnings}};
}

splits::Imputer imputer_from_json(const json& j) {
    splits::Imputer imp;
    imp.numeric_medians = j.at("numeric_medians").get<std::vector<double>>();
    imp.ecg_medians = j.at("ecg_medians").get<std::vector<double>>();
    imp.warnings = j.at("warnings").get<std::vector<std::string>>();
    return imp;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    json j;
    j["kind"] = deep_config ? "deep" : "tree";
    j["scenario"] = scenario;
    j["profile"] = profile;
    j["seed"] = seed;
    j["mask_columns"] = mask_columns;
    j["sampling_rate_target"] = sampling_rate_target;
    j["label_space_hash"] = label_space_hash;
    j["feature_schema_hash"] = feature_schema_hash;
    j["label_names"] = label_names;
    j["best_epoch"] = best_epoch;
    j["best_val_macro"] = best_val_macro;
    j["imputer"] = imputer_to_json(imputer);
    j["norms"] = json{{"lead_mean", norms.lead_mean},
                      {"lead_std", norms.lead_std},
                      {"tab_mean", norms.tab_mean},
                      {"tab_std", norms.tab_std}};
    if (deep_config) {
        j["deep_config"] = deep_config_to_json(*deep_config);
        json w = json::object();
        for (const auto& [name, entry] : weights) {
            const auto& [data, shape] = entry;
            w[name] = json{{"rows", shape.first}, {"cols", shape.second}, {"data", data}};
        }
        j["weights"] = std::move(w);
    } else {
        json trees = json::array();
        for (const auto& model : tree_models) {
            if (model)
                trees.push_back(model->to_json());
            else
                trees.push_back(nullptr);
        }
        j["trees"] = std::move(trees);
        j["skipped_labels"] = skipped_labels;
    }
    json log_rows = json::array();
    for (const auto& row : log)
        log_rows.push_back(json{{"epoch", row.epoch}, {"loss", row.loss},
                                {"val_macro", row.val_macro}});
    j["log"] = std::move(log_rows);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << j.dump(1, '\t') << "\n";
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("malformed checkpoint " + path + ": " + e.what());
    }
    Checkpoint c;
    try {
        c.scenario = j.at("scenario").get<std::string>();
        c.profile = j.at("profile").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.mask_columns = j.at("mask_columns").get<bool>();
        c.sampling_rate_target = j.at("sampling_rate_target").get<double>();
        c.label_space_hash = j.at("label_space_hash").get<std::string>();
        c.feature_schema_hash = j.at("feature_schema_hash").get<std::string>();
        c.label_names = j.at("label_names").get<std::vector<std::string>>();
        c.best_epoch = j.at("best_epoch").get<int>();
        c.best_val_macro = j.at("best_val_macro").get<double>();
        c.imputer = imputer_from_json(j.at("imputer"));
        const auto& n = j.at("norms");
        c.norms.lead_mean = n.at("lead_mean").get<std::vector<double>>();
        c.norms.lead_std = n.at("lead_std").get<std::vector<double>>();
        c.norms.tab_mean = n.at("tab_mean").get<std::vector<double>>();
        c.norms.tab_std = n.at("tab_std").get<std::vector<double>>();
        if (j.contains("deep_config") && !j.at("deep_config").is_null()) {
            c.deep_config = deep_config_from_json(j.at("deep_config"));
            for (const auto& [name, entry] : j.at("weights").items()) {
                std::vector<double> data = entry.at("data").get<std::vector<double>>();
                std::pair<int, int> shape{entry.at("rows").get<int>(),
                                          entry.at("cols").get<int>()};
                if (static_cast<std::size_t>(shape.first) *
                        static_cast<std::size_t>(shape.second) != data.size())
                    throw FormatError("weight tensor size mismatch in checkpoint");
                c.weights[name] = {std::move(data), shape};
            }
        } else {
            for (const auto& entry : j.at("trees")) {
                if (entry.is_null())
                    c.tree_models.emplace_back(std::nullopt);
                else
                    c.tree_models.emplace_back(gbdt::GbdtModel::from_json(entry));
            }
            c.skipped_labels = j.at("skipped_labels").get<std::vector<std::string>>();
        }
        for (const auto& row : j.at("log"))
            c.log.push_back(TrainLogRow{row.at("epoch").get<int>(), row.at("loss").get<double>(),
                                        row.at("val_macro").get<double>()});
    } catch (const json::exception& e) {
        throw FormatError("malformed checkpoint " + path + ": " + e.what());
    }
    return c;
}

namespace {

void snapshot_weights(DeepModel& model, Checkpoint* ckpt) {
    ckpt->weights.clear();
    for (nn::Param* p : model.params()) {
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(p->value.size()));
        for (Eigen::Index r = 0; r < p->value.rows(); ++r)
            for (Eigen::Index c = 0; c < p->value.cols(); ++c) data.push_back(p->value(r, c));
        ckpt->weights[p->name] = {std::move(data),
                                  {static_cast<int>(p->value.rows()),
                                   static_cast<int>(p->value.cols())}};
    }
}

void restore_weights(const Checkpoint& ckpt, DeepModel* model) {
    for (nn::Param* p : model->params()) {
        auto it = ckpt.weights.find(p->name);
        if (it == ckpt.weights.end())
            throw FormatError("checkpoint is missing weight tensor " + p->name);
        const auto& [data, shape] = it->second;
        if (shape.first != p->value.rows() || shape.second != p->value.cols())
            throw FormatError("checkpoint weight " + p->name + " has the wrong shape");
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < p->value.rows(); ++r)
            for (Eigen::Index c = 0; c < p->value.cols(); ++c) p->value(r, c) = data[k++];
    }
}

/// Sub-matrix of ternary labels for the selected columns (row-major).
std::vector<std::int8_t> subset_labels(const labels::LabelMatrix& m,
                                       const std::vector<std::size_t>& cols) {
    std::vector<std::int8_t> out(m.sample_ids.size() * cols.size());
    for (std::size_t r = 0; r < m.sample_ids.size(); ++r)
        for (std::size_t k = 0; k < cols.size(); ++k)
            out[r * cols.size() + k] = m.at(r, cols[k]);
    return out;
}

struct DeepInputs {
    Eigen::MatrixXd numeric;            // all rows x numeric input dim
    std::vector<std::vector<int>> cats;  // per row
    WaveBank bank;
    bool use_wave = false;
    bool use_tab = false;
};

/// Scores rows with a model; returns probabilities row-major rows x labels.
std::vector<double> score_rows(const DeepModel& model, const DeepInputs& inputs,
                               const NormStats& norms, const std::vector<std::size_t>& rows,
                               std::size_t n_labels) {
    std::vector<double> out(rows.size() * n_labels);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::size_t r = rows[k];
        nn::Matrix wave_input;
        Eigen::RowVectorXd numeric_row;
        std::vector<int> cats;
        const nn::Matrix* wave_ptr = nullptr;
        const Eigen::RowVectorXd* num_ptr = nullptr;
        const std::vector<int>* cat_ptr = nullptr;
        if (inputs.use_wave) {
            wave_input = inputs.bank.sample(r, norms.lead_mean, norms.lead_std);
            wave_ptr = &wave_input;
        }
        if (inputs.use_tab) {
            numeric_row = inputs.numeric.row(static_cast<Eigen::Index>(r));
            cats = inputs.cats[r];
            num_ptr = &numeric_row;
            cat_ptr = &cats;
        }
        const Eigen::RowVectorXd logits = model.forward(wave_ptr, num_ptr, cat_ptr, nullptr);
        for (std::size_t j = 0; j < n_labels; ++j)
            out[k * n_labels + j] = nn::sigmoid(logits(static_cast<Eigen::Index>(j)));
    }
    return out;
}

eval::ScoreMatrix to_score_matrix(const std::vector<double>& probs,
                                  const std::vector<std::int8_t>& y_sub,
                                  const std::vector<std::size_t>& rows, std::size_t n_labels) {
    eval::ScoreMatrix m;
    m.n_labels = n_labels;
    m.scores = probs;
    m.y.resize(rows.size() * n_labels);
    for (std::size_t k = 0; k < rows.size(); ++k)
        for (std::size_t j = 0; j < n_labels; ++j)
            m.y[k * n_labels + j] = y_sub[rows[k] * n_labels + j];
    return m;
}

Checkpoint train_deep(const Dataset& data, const TrainOptions& options, bool use_wave,
                      bool use_tab) {
    const auto sub = label_subset(data.label_space, options.label_filter);
    const auto split = splits::split_indices(data.samples, options.val_fold, options.test_fold);
    if (split.train.empty()) throw DataError("empty train split");
    const auto val_rows = first_of_visit(data.samples, split.val);
    if (val_rows.empty()) throw DataError("empty validation split");

    const ModelProfile& prof = options.profile;
    const int epochs = options.epochs_override.value_or(prof.epochs);

    Checkpoint ckpt;
    ckpt.scenario = scenario_name(options.scenario);
    ckpt.profile = prof.name;
    ckpt.seed = options.seed;
    ckpt.mask_columns = options.mask_columns;
    ckpt.sampling_rate_target = prof.sampling_rate_target;
    ckpt.label_space_hash = data.label_space.content_hash();
    ckpt.feature_schema_hash = data.features.schema.content_hash();
    for (std::size_t i : sub) ckpt.label_names.push_back(data.label_space.names[i]);

    ckpt.imputer = splits::fit_imputer(data.features, split.train);
    for (const auto& w : ckpt.imputer.warnings) log_warn("imputer: " + w);

    DeepInputs inputs;
    inputs.use_wave = use_wave;
    inputs.use_tab = use_tab;
    if (use_tab) {
        tab_stats(data, ckpt.imputer, split.train, &ckpt.norms.tab_mean, &ckpt.norms.tab_std);
        inputs.numeric = build_deep_numeric(data, ckpt.imputer, ckpt.norms, options.mask_columns);
        inputs.cats.reserve(data.features.rows());
        for (std::size_t r = 0; r < data.features.rows(); ++r)
            inputs.cats.push_back(cat_row(data.features, r));
    }
    if (use_wave) {
        auto store = ingest::WaveformStore::open(data.waveform_dir);
        std::vector<std::size_t> needed = split.train;
        needed.insert(needed.end(), val_rows.begin(), val_rows.end());
        std::sort(needed.begin(), needed.end());
        needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
        inputs.bank = WaveBank::load(store, data.samples, prof.sampling_rate_target, &needed);
        lead_stats(inputs.bank, split.train, &ckpt.norms.lead_mean, &ckpt.norms.lead_std);
    } else {
        ckpt.norms.lead_mean.assign(kEcgLeads, 0.0);
        ckpt.norms.lead_std.assign(kEcgLeads, 1.0);
    }

    DeepConfig config;
    config.use_wave = use_wave;
    config.use_tab = use_tab;
    config.mask_columns = options.mask_columns;
    config.n_labels = static_cast<int>(sub.size());
    config.wave.n_blocks = prof.n_blocks;
    config.wave.d_model = prof.d_model;
    config.wave.d_state = prof.d_state;
    config.tab.numeric_dim = static_cast<int>(inputs.numeric.cols());
    config.tab.d_model = prof.d_model;
    config.tab.embed_dim = prof.embed_dim;
    for (const auto& vocab : data.features.schema.categorical_vocabs)
        config.tab.categorical_cardinalities.push_back(static_cast<int>(vocab.size()));
    ckpt.deep_config = config;

    Rng rng(options.seed);
    DeepModel model;
    model.init(config, rng);
    nn::AdamW optimizer(model.params(), prof.lr, prof.weight_decay);

    const auto y_sub = subset_labels(data.label_matrix, sub);
    const std::size_t n_labels = sub.size();

    auto validate = [&]() {
        const auto probs = score_rows(model, inputs, ckpt.norms, val_rows, n_labels);
        const auto m = to_score_matrix(probs, y_sub, val_rows, n_labels);
        std::vector<std::size_t> all(val_rows.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return eval::macro_auroc(m, all);
    };

    double best_val = -1.0;
    if (epochs == 0) {
        const double val = validate();
        ckpt.log.push_back(TrainLogRow{0, 0.0, val});
        ckpt.best_epoch = 0;
        ckpt.best_val_macro = val;
        snapshot_weights(model, &ckpt);
        return ckpt;
    }

    const std::size_t batch_size = static_cast<std::size_t>(prof.batch_size);
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order = split.train;
        epoch_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t loss_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t stop = std::min(order.size(), start + batch_size);
            const std::size_t b = stop - start;

            // Pass 1: embeddings without waveform caches (tab caches are
            // small and kept); head forward over the whole batch.
            const Eigen::Index head_in = model.head.W.value.cols();
            nn::Matrix concat(static_cast<Eigen::Index>(b), head_in);
            std::vector<nn::TabEncoder::Cache> tab_caches(use_tab ? b : 0);
            for (std::size_t k = 0; k < b; ++k) {
                const std::size_t r = order[start + k];
                Eigen::Index at = 0;
                if (use_wave) {
                    const nn::Matrix x = inputs.bank.sample(r, ckpt.norms.lead_mean,
                                                            ckpt.norms.lead_std);
                    concat.row(static_cast<Eigen::Index>(k)).segment(at, config.wave.d_model) =
                        model.wave->forward(x, nullptr);
                    at += config.wave.d_model;
                }
                if (use_tab) {
                    const Eigen::RowVectorXd numeric_row =
                        inputs.numeric.row(static_cast<Eigen::Index>(r));
                    concat.row(static_cast<Eigen::Index>(k)).segment(at, config.tab.d_model) =
                        model.tab->forward(numeric_row, inputs.cats[r], &tab_caches[k]);
                    at += config.tab.d_model;
                }
            }
            nn::Matrix logits = model.head.forward(concat);

            std::vector<std::int8_t> y_batch(b * n_labels);
            for (std::size_t k = 0; k < b; ++k)
                for (std::size_t j = 0; j < n_labels; ++j)
                    y_batch[k * n_labels + j] = y_sub[order[start + k] * n_labels + j];

            nn::Matrix dlogits;
            const double loss = nn::masked_bce(logits, y_batch, &dlogits);
            if (!std::isfinite(loss))
                throw DivergenceError("training loss became non-finite at epoch " +
                                      std::to_string(epoch));
            loss_sum += loss;
            ++loss_batches;

            nn::Matrix dconcat = model.head.backward(concat, dlogits);

            // Pass 2: re-run each waveform forward with caches and push
            // gradients; tabular caches were kept from pass 1.
            for (std::size_t k = 0; k < b; ++k) {
                const std::size_t r = order[start + k];
                Eigen::Index at = 0;
                if (use_wave) {
                    const nn::Matrix x = inputs.bank.sample(r, ckpt.norms.lead_mean,
                                                            ckpt.norms.lead_std);
                    nn::WaveEncoder::Cache cache;
                    model.wave->forward(x, &cache);
                    model.wave->backward(cache, dconcat.row(static_cast<Eigen::Index>(k))
                                                    .segment(at, config.wave.d_model));
                    at += config.wave.d_model;
                }
                if (use_tab) {
                    model.tab->backward(tab_caches[k], dconcat.row(static_cast<Eigen::Index>(k))
                                                           .segment(at, config.tab.d_model));
                    at += config.tab.d_model;
                }
            }

            optimizer.step();
            optimizer.zero_grad();
        }

        const double val = validate();
        const double mean_loss = loss_batches > 0 ? loss_sum / static_cast<double>(loss_batches)
                                                  : 0.0;
        ckpt.log.push_back(TrainLogRow{epoch, mean_loss, val});
        log_info("epoch " + std::to_string(epoch) + " loss " + fmt_double(mean_loss) +
                 " val_macro " + fmt_double(val));
        if (val > best_val) {
            best_val = val;
            ckpt.best_epoch = epoch;
            ckpt.best_val_macro = val;
            snapshot_weights(model, &ckpt);
        }
    }
    return ckpt;
}

Checkpoint train_tree(const Dataset& data, const TrainOptions& options) {
    const auto sub = label_subset(data.label_space, options.label_filter);
    const auto split = splits::split_indices(data.samples, options.val_fold, options.test_fold);
    if (split.train.empty()) throw DataError("empty train split");

    Checkpoint ckpt;
    ckpt.scenario = scenario_name(options.scenario);
    ckpt.profile = options.profile.name;
    ckpt.seed = options.seed;
    ckpt.mask_columns = options.mask_columns;
    ckpt.sampling_rate_target = options.profile.sampling_rate_target;
    ckpt.label_space_hash = data.label_space.content_hash();
    ckpt.feature_schema_hash = data.features.schema.content_hash();
    for (std::size_t i : sub) ckpt.label_names.push_back(data.label_space.names[i]);
    ckpt.imputer = splits::fit_imputer(data.features, split.train);
    ckpt.norms.lead_mean.assign(kEcgLeads, 0.0);
    ckpt.norms.lead_std.assign(kEcgLeads, 1.0);

    const auto design = design_for(options.scenario, options.mask_columns);
    const auto matrix = build_tree_inputs(data, design, &ckpt.imputer);

    std::size_t trained = 0;
    for (std::size_t k = 0; k < sub.size(); ++k) {
        const std::size_t col = sub[k];
        std::vector<std::int8_t> y(data.label_matrix.sample_ids.size(), 0);
        std::vector<std::size_t> rows;
        std::size_t n_pos = 0, n_neg = 0;
        for (std::size_t r : split.train) {
            const labels::Ternary t = data.label_matrix.at(r, col);
            if (t == labels::kMasked) continue;
            y[r] = t;
            rows.push_back(r);
            if (t == labels::kPositive)
                ++n_pos;
            else
                ++n_neg;
        }
        if (n_pos == 0 || n_neg == 0) {
            ckpt.tree_models.emplace_back(std::nullopt);
            ckpt.skipped_labels.push_back(ckpt.label_names[k]);
            continue;
        }
        ckpt.tree_models.emplace_back(gbdt::train_gbdt(matrix.X.data(), data.features.rows(),
                                                       matrix.dim, y, rows,
                                                       options.profile.tree));
        ++trained;
    }
    if (trained == 0)
        throw DataError("every label was single-class on the train split; nothing to train");
    if (!ckpt.skipped_labels.empty())
        log_warn(std::to_string(ckpt.skipped_labels.size()) +
                 " single-class labels skipped during tree training");
    ckpt.best_epoch = 0;
    ckpt.best_val_macro = 0.0;
    return ckpt;
}

}  // namespace

Checkpoint train_scenario(const Dataset& data, const TrainOptions& options) {
    if (scenario_is_tree(options.scenario)) return train_tree(data, options);
    const bool use_wave = scenario_uses_waveform(options.scenario);
    const bool use_tab = scenario_uses_routine(options.scenario);
    return train_deep(data, options, use_wave, use_tab);
}

Checkpoint train_tabular_deep(const Dataset& data, const TrainOptions& options) {
    return train_deep(data, options, /*use_wave=*/false, /*use_tab=*/true);
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

eval::ScoreMatrix score_with_checkpoint(const Checkpoint& ckpt, const Dataset& data,
                                        const std::vector<std::size_t>& rows) {
    if (ckpt.label_space_hash != data.label_space.content_hash())
        throw DataError("checkpoint was trained against a different label space");
    if (ckpt.feature_schema_hash != data.features.schema.content_hash())
        throw DataError("checkpoint was trained against a different feature schema");

    const auto sub = label_subset(data.label_space, ckpt.label_names);
    const auto y_sub = subset_labels(data.label_matrix, sub);
    const std::size_t n_labels = sub.size();

    if (ckpt.deep_config) {
        DeepInputs inputs;
        inputs.use_wave = ckpt.deep_config->use_wave;
        inputs.use_tab = ckpt.deep_config->use_tab;
        if (inputs.use_tab) {
            inputs.numeric = build_deep_numeric(data, ckpt.imputer, ckpt.norms,
                                                ckpt.deep_config->mask_columns);
            inputs.cats.reserve(data.features.rows());
            for (std::size_t r = 0; r < data.features.rows(); ++r)
                inputs.cats.push_back(cat_row(data.features, r));
        }
        if (inputs.use_wave) {
            auto store = ingest::WaveformStore::open(data.waveform_dir);
            inputs.bank =
                WaveBank::load(store, data.samples, ckpt.sampling_rate_target, &rows);
        }
        Rng rng(0);
        DeepModel model;
        model.init(*ckpt.deep_config, rng);
        restore_weights(ckpt, &model);
        const auto probs = score_rows(model, inputs, ckpt.norms, rows, n_labels);
        return to_score_matrix(probs, y_sub, rows, n_labels);
    }

    // Tree checkpoint.
    if (ckpt.tree_models.size() != n_labels)
        throw FormatError("tree checkpoint has the wrong number of per-label models");
    const auto design = design_for(parse_scenario(ckpt.scenario), ckpt.mask_columns);
    const auto matrix = build_tree_inputs(data, design, &ckpt.imputer);
    std::vector<double> probs(rows.size() * n_labels, 0.5);
    for (std::size_t j = 0; j < n_labels; ++j) {
        if (!ckpt.tree_models[j]) continue;  // skipped label scores 0.5
        const auto& model = *ckpt.tree_models[j];
        for (std::size_t k = 0; k < rows.size(); ++k)
            probs[k * n_labels + j] = model.predict_proba(matrix.X.data() + rows[k] * matrix.dim);
    }
    return to_score_matrix(probs, y_sub, rows, n_labels);
}

}  // namespace edbench::train
