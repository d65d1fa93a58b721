#include "edbench/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "edbench/cohort.hpp"
#include "edbench/core.hpp"
#include "edbench/csv.hpp"
#include "edbench/features.hpp"
#include "edbench/ingest.hpp"
#include "edbench/labels.hpp"
#include "edbench/registry.hpp"
#include "edbench/splits.hpp"

namespace edbench::pipeline {

using nlohmann::json;

namespace {

/// Serialized JSON with sorted keys, one trailing newline; byte-stable for a
/// given content.
void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(1, '\t') << "\n";
}

/// Runs one build stage; data errors gain the stage name so the failing
/// phase is visible in the exit message.
template <typename F>
auto run_stage(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const DataError& e) {
        throw DataError("stage " + name + ": " + e.what());
    }
}

void log_deduped(const std::vector<std::string>& lines) {
    std::set<std::string> seen;
    for (const auto& line : lines) {
        if (seen.insert(line).second) log_info(line);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError("config " + path + ": top level must be an object");

    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "data_dir") {
                c.data_dir = value.get<std::string>();
            } else if (key == "output_dir") {
                c.output_dir = value.get<std::string>();
            } else if (key == "scenario") {
                c.scenario = value.get<std::string>();
            } else if (key == "profile") {
                c.profile = value.get<std::string>();
            } else if (key == "seed") {
                c.seed = value.get<std::uint64_t>();
            } else if (key == "mask_columns") {
                c.mask_columns = value.get<bool>();
            } else if (key == "epochs") {
                c.epochs = value.get<int>();
            } else if (key == "label_filter") {
                c.label_filter = value.get<std::vector<std::string>>();
            } else if (key == "n_folds") {
                c.n_folds = value.get<int>();
            } else if (key == "val_fold") {
                c.val_fold = value.get<int>();
            } else if (key == "test_fold") {
                c.test_fold = value.get<int>();
            } else if (key == "min_count") {
                c.min_count = value.get<std::int64_t>();
            } else if (key == "vocab_file") {
                c.vocab_file = value.get<std::string>();
            } else if (key == "fold_file") {
                c.fold_file = value.get<std::string>();
            } else if (key == "registry_path") {
                c.registry_path = value.get<std::string>();
            } else if (key == "gem_path") {
                c.gem_path = value.get<std::string>();
            } else if (key == "deterioration_path") {
                c.deterioration_path = value.get<std::string>();
            } else if (key == "chapters_path") {
                c.chapters_path = value.get<std::string>();
            } else if (key == "bootstrap_iters") {
                c.bootstrap_iters = value.get<int>();
            } else if (key == "ci_level") {
                c.ci_level = value.get<double>();
            } else if (key == "eval_seed") {
                c.eval_seed = value.get<std::uint64_t>();
            } else if (key == "checkpoint_path") {
                c.checkpoint_path = value.get<std::string>();
            } else {
                throw UsageError("config " + path + ": unknown key \"" + key + "\"");
            }
        } catch (const json::exception& e) {
            throw UsageError("config " + path + ": key \"" + key + "\": " + e.what());
        }
    }
    if (c.data_dir.empty()) throw UsageError("config " + path + ": data_dir is required");
    if (c.output_dir.empty()) throw UsageError("config " + path + ": output_dir is required");
    if (c.n_folds < 3) throw UsageError("config " + path + ": n_folds must be at least 3");
    if (c.val_fold < 0 || c.val_fold >= c.n_folds || c.test_fold < 0 ||
        c.test_fold >= c.n_folds || c.val_fold == c.test_fold) {
        throw UsageError("config " + path + ": val_fold/test_fold must be distinct folds");
    }
    if (c.bootstrap_iters < 1) throw UsageError("config " + path + ": bootstrap_iters must be >= 1");
    if (!(c.ci_level > 0.0 && c.ci_level < 1.0)) {
        throw UsageError("config " + path + ": ci_level must lie in (0, 1)");
    }
    return c;
}

std::string ExperimentConfig::resolve(const std::string& path) const {
    if (path.empty() || path.front() == '/') return path;
    const char* root = std::getenv("EDBENCH_DATA_ROOT");
    if (root != nullptr && root[0] != '\0') return std::string(root) + "/" + path;
    return path;
}

std::string ExperimentConfig::default_checkpoint_path() const {
    return output_dir + "/checkpoint_" + scenario + "_seed" + std::to_string(seed) + ".json";
}

// ---------------------------------------------------------------------------
// cmd_build
// ---------------------------------------------------------------------------

namespace {

/// Per-visit event groupings shared by labels and features.
struct GroupedTables {
    std::map<std::string, const StayRecord*> stay_by_id;
    std::map<std::string, std::vector<EventRecord>> vitals_by_stay;
    std::map<std::string, std::vector<EventRecord>> labs_by_subject;
    std::map<std::string, std::vector<MedEvent>> meds_by_stay;
    std::map<std::string, std::vector<CodedEventRecord>> coded_by_hadm;  // procedures + hosp dx
    std::map<std::string, std::vector<CodedEventRecord>> dx_by_stay;     // ED diagnoses
    std::map<std::string, std::vector<CodedEventRecord>> dx_by_hadm;     // hospital diagnoses
    std::map<std::string, const OutcomeRecord*> outcome_by_hadm;
    std::map<std::string, std::vector<OmrRecord>> omr_by_subject;
};

GroupedTables group_tables(const ingest::SourceTables& tables,
                           const std::vector<EventRecord>& vitals,
                           const std::vector<EventRecord>& labs,
                           const std::vector<OmrRecord>& omr) {
    GroupedTables g;
    for (const auto& s : tables.stays) g.stay_by_id[s.stay_id] = &s;
    for (const auto& e : vitals) g.vitals_by_stay[e.stay_id].push_back(e);
    for (const auto& e : labs) g.labs_by_subject[e.subject_id].push_back(e);
    for (const auto& m : tables.meds) g.meds_by_stay[m.stay_id].push_back(m);
    for (const auto& p : tables.procedures) g.coded_by_hadm[p.hadm_id].push_back(p);
    for (const auto& d : tables.diagnoses_hosp) {
        g.coded_by_hadm[d.hadm_id].push_back(d);
        g.dx_by_hadm[d.hadm_id].push_back(d);
    }
    for (const auto& d : tables.diagnoses_ed) g.dx_by_stay[d.stay_id].push_back(d);
    for (const auto& o : tables.outcomes) g.outcome_by_hadm[o.hadm_id] = &o;
    for (const auto& r : omr) g.omr_by_subject[r.subject_id].push_back(r);
    return g;
}

template <typename K, typename V>
const std::vector<V>& find_or_empty(const std::map<K, std::vector<V>>& m, const K& key) {
    static const std::vector<V> kEmpty;
    auto it = m.find(key);
    return it == m.end() ? kEmpty : it->second;
}

/// Propagated ICD-10 code set of one sample (ED + hospital diagnoses).
std::set<std::string> sample_code_set(const cohort::Sample& sample, const GroupedTables& g,
                                      const labels::Gem& gem, std::vector<std::string>* log,
                                      bool* has_records) {
    std::set<std::string> codes;
    *has_records = false;
    auto add_all = [&](const std::vector<CodedEventRecord>& records) {
        for (const auto& r : records) {
            *has_records = true;
            for (const auto& mapped : labels::normalize_icd(r.icd_code, r.icd_version, gem, log)) {
                auto expanded = labels::truncate_and_propagate(mapped);
                codes.insert(expanded.begin(), expanded.end());
            }
        }
    };
    add_all(find_or_empty(g.dx_by_stay, sample.stay_id));
    if (!sample.hadm_id.empty()) add_all(find_or_empty(g.dx_by_hadm, sample.hadm_id));
    return codes;
}

}  // namespace

void cmd_build(const ExperimentConfig& config) {
    const auto registry = run_stage("registry", [&] {
        return VariableRegistry::load(config.resolve(config.registry_path));
    });
    const auto gem =
        run_stage("icd-map", [&] { return labels::load_gem(config.resolve(config.gem_path)); });
    const auto det_spec = run_stage("deterioration-spec", [&] {
        return labels::DeteriorationSpec::load(config.resolve(config.deterioration_path));
    });

    const auto tables = run_stage("load", [&] {
        return ingest::load_source_tables(config.data_dir, registry);
    });
    for (const auto& d : tables.all_diagnostics) {
        (d.is_error ? log_warn : log_info)("row " + std::to_string(d.row) + ": " + d.message);
    }
    log_info("loaded " + std::to_string(tables.total_parsed_rows) + "/" +
             std::to_string(tables.total_input_rows) + " source rows");

    // Canonicalize every measurement once, up front: source-unit outlier
    // rules, unit conversion, canonical-unit outlier rules.
    std::vector<std::string> unit_log;
    const auto vitals = run_stage("canonicalize", [&] {
        return features::canonicalize_events(tables.vitals, registry, &unit_log);
    });
    const auto labs = run_stage("canonicalize", [&] {
        return features::canonicalize_events(tables.labs, registry, &unit_log);
    });
    const auto omr = run_stage("canonicalize", [&] {
        return features::canonicalize_omr(tables.omr, registry, &unit_log);
    });
    log_deduped(unit_log);

    auto link = run_stage("link", [&] {
        return cohort::link_ecg_to_stays(tables.stays, tables.ecg_manifest);
    });
    log_deduped(link.log);
    auto& samples = link.samples;
    if (samples.empty()) throw DataError("stage link: no samples after cohort linking");

    const GroupedTables grouped = group_tables(tables, vitals, labs, omr);

    // --- Labels ------------------------------------------------------------
    std::vector<std::string> icd_log;
    std::vector<std::set<std::string>> per_sample_codes(samples.size());
    std::vector<char> has_dx_records(samples.size(), 0);
    run_stage("labels", [&] {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            bool has = false;
            per_sample_codes[i] = sample_code_set(samples[i], grouped, gem, &icd_log, &has);
            has_dx_records[i] = has ? 1 : 0;
        }
        return 0;
    });
    log_deduped(icd_log);

    const auto vocab = run_stage("vocab", [&] {
        if (!config.vocab_file.empty()) {
            return labels::load_vocab_file(config.resolve(config.vocab_file));
        }
        return labels::build_vocab(per_sample_codes, config.min_count);
    });
    if (vocab.size() == 0) throw DataError("stage vocab: empty diagnosis vocabulary");
    const auto space = labels::LabelSpace::build(vocab, det_spec);

    labels::LabelMatrix label_matrix;
    label_matrix.n_labels = space.size();
    label_matrix.values.assign(samples.size() * space.size(), labels::kNegative);
    run_stage("labels", [&] {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto& sample = samples[i];
            label_matrix.sample_ids.push_back(sample.sample_id);

            auto dx = labels::diagnosis_labels(per_sample_codes[i], vocab, has_dx_records[i] != 0);
            for (std::size_t j = 0; j < dx.values.size(); ++j) {
                label_matrix.at(i, j) = dx.values[j];
            }

            labels::SampleEvents events;
            if (!sample.hadm_id.empty()) {
                auto it = grouped.outcome_by_hadm.find(sample.hadm_id);
                if (it != grouped.outcome_by_hadm.end()) events.outcome = it->second;
                events.coded_events = find_or_empty(grouped.coded_by_hadm, sample.hadm_id);
            }
            events.meds = find_or_empty(grouped.meds_by_stay, sample.stay_id);
            const auto& ed_dx = find_or_empty(grouped.dx_by_stay, sample.stay_id);
            events.coded_events.insert(events.coded_events.end(), ed_dx.begin(), ed_dx.end());
            events.vitals = find_or_empty(grouped.vitals_by_stay, sample.stay_id);

            auto det = labels::deterioration_labels(sample, events, det_spec);
            for (std::size_t j = 0; j < det.size(); ++j) {
                label_matrix.at(i, space.n_diagnosis + j) = det[j];
            }
        }
        return 0;
    });

    // --- Features ------------------------------------------------------------
    auto schema = features::FeatureSchema::from_registry(registry);
    features::build_categorical_vocabs(schema, samples, grouped.stay_by_id);

    const ingest::WaveformStore store(config.data_dir, tables.ecg_manifest);
    features::FeatureMatrix matrix;
    matrix.schema = schema;
    run_stage("features", [&] {
        for (const auto& sample : samples) {
            features::SampleFeatureInputs inputs;
            auto stay_it = grouped.stay_by_id.find(sample.stay_id);
            if (stay_it == grouped.stay_by_id.end()) {
                throw DataError("sample references unknown stay: " + sample.stay_id);
            }
            inputs.stay = stay_it->second;

            auto in_window = [&](const EventRecord& e) {
                return e.charttime >= sample.arrival && e.charttime <= sample.window_end;
            };
            for (const auto& e : find_or_empty(grouped.vitals_by_stay, sample.stay_id)) {
                if (in_window(e)) inputs.window_events.push_back(e);
            }
            for (const auto& e : find_or_empty(grouped.labs_by_subject, sample.subject_id)) {
                if (in_window(e)) inputs.window_events.push_back(e);
            }
            inputs.biometrics = features::match_biometrics(
                sample.arrival, find_or_empty(grouped.omr_by_subject, sample.subject_id));
            inputs.ecg_machine_features = store.load_machine_features(sample.record_id);

            auto fv = features::assemble_features(sample, inputs, registry, schema);
            matrix.sample_ids.push_back(sample.sample_id);
            matrix.numeric.insert(matrix.numeric.end(), fv.numeric.begin(), fv.numeric.end());
            matrix.categorical.insert(matrix.categorical.end(), fv.categorical.begin(),
                                      fv.categorical.end());
            matrix.ecg.insert(matrix.ecg.end(), fv.ecg.begin(), fv.ecg.end());
        }
        return 0;
    });

    // --- Folds ---------------------------------------------------------------
    const auto folds = run_stage("folds", [&] {
        if (!config.fold_file.empty()) {
            return splits::read_fold_file(config.resolve(config.fold_file));
        }
        auto keys = splits::stratification_keys(samples, grouped.stay_by_id, label_matrix, space);
        return splits::assign_folds(keys, config.n_folds, config.seed);
    });
    run_stage("folds", [&] {
        splits::apply_folds(samples, folds);
        return 0;
    });

    // --- Artifacts -----------------------------------------------------------
    const std::string& out = config.output_dir;
    run_stage("write", [&] {
        cohort::write_sample_index(out + "/samples.csv", samples);
        features::write_feature_matrix(out + "/features.csv", matrix);
        schema.save(out + "/feature_schema.json");
        labels::write_label_matrix(out + "/labels.csv", label_matrix, space);
        space.save(out + "/label_space.json");
        labels::write_vocab_file(out + "/vocab.csv", vocab);
        splits::write_fold_file(out + "/folds.csv", folds);
        return 0;
    });

    const auto stats = cohort::cohort_stats(samples, tables.stays);

    json manifest;
    auto file_hash = [&](const char* name) { return sha256_file_hex(out + "/" + name); };
    manifest["artifacts"]["samples"]["files"] = {{"samples.csv", file_hash("samples.csv")}};
    manifest["artifacts"]["features"]["files"] = {
        {"features.csv", file_hash("features.csv")},
        {"feature_schema.json", file_hash("feature_schema.json")}};
    manifest["artifacts"]["labels"]["files"] = {{"labels.csv", file_hash("labels.csv")},
                                                {"label_space.json", file_hash("label_space.json")},
                                                {"vocab.csv", file_hash("vocab.csv")}};
    manifest["artifacts"]["folds"]["files"] = {{"folds.csv", file_hash("folds.csv")}};
    manifest["counts"] = {{"patients", stats.patients},
                          {"visits", stats.visits},
                          {"samples", stats.samples},
                          {"numeric_features", schema.numeric_names.size()},
                          {"categorical_features", schema.categorical_names.size()},
                          {"ecg_features", schema.ecg_names.size()},
                          {"diagnosis_labels", space.n_diagnosis},
                          {"deterioration_labels", space.size() - space.n_diagnosis},
                          {"folds", folds.n_folds}};
    manifest["feature_schema_hash"] = schema.content_hash();
    manifest["label_space_hash"] = space.content_hash();
    manifest["registry_hash"] = registry.content_hash();
    write_json_file(out + "/build_manifest.json", manifest);

    log_info(stats.text());
    log_info("build complete: " + std::to_string(samples.size()) + " samples, " +
             std::to_string(space.size()) + " labels");
}

// ---------------------------------------------------------------------------
// cmd_train
// ---------------------------------------------------------------------------

namespace {

train::TrainOptions options_from(const ExperimentConfig& config) {
    train::TrainOptions options;
    options.scenario = train::parse_scenario(config.scenario);
    options.profile = train::ModelProfile::by_name(config.profile);
    options.seed = config.seed;
    options.mask_columns = config.mask_columns;
    options.val_fold = config.val_fold;
    options.test_fold = config.test_fold;
    options.label_filter = config.label_filter;
    options.epochs_override = config.epochs;
    return options;
}

std::string run_tag(const std::string& scenario, std::uint64_t seed) {
    return scenario + "_seed" + std::to_string(seed);
}

}  // namespace

std::string cmd_train(const ExperimentConfig& config) {
    const auto dataset = train::Dataset::load(config.output_dir, config.data_dir);
    const auto options = options_from(config);

    auto checkpoint = train::train_scenario(dataset, options);

    std::string path = config.checkpoint_path.empty() ? config.default_checkpoint_path()
                                                      : config.checkpoint_path;
    checkpoint.save(path);

    CsvWriter log_writer({"epoch", "loss", "val_macro_auroc"});
    for (const auto& row : checkpoint.log) {
        log_writer.add_row({std::to_string(row.epoch), fmt_double(row.loss),
                            fmt_double(row.val_macro)});
    }
    log_writer.write_file(config.output_dir + "/training_log_" +
                          run_tag(config.scenario, config.seed) + ".csv");

    log_info("checkpoint written: " + path);
    return path;
}

// ---------------------------------------------------------------------------
// cmd_eval
// ---------------------------------------------------------------------------

namespace {

/// AUROC of one label over given score-matrix rows; nullopt when a class is
/// absent among active entries.
std::optional<double> label_auroc_over(const eval::ScoreMatrix& m, std::size_t label,
                                       const std::vector<std::size_t>& rows) {
    std::vector<double> scores;
    std::vector<int> y;
    for (auto r : rows) {
        labels::Ternary t = m.y[r * m.n_labels + label];
        if (t < 0) continue;
        scores.push_back(m.scores[r * m.n_labels + label]);
        y.push_back(t);
    }
    try {
        return eval::auroc(scores, y);
    } catch (const DataError&) {
        return std::nullopt;
    }
}

}  // namespace

std::string cmd_eval(const ExperimentConfig& config, const std::string& checkpoint_path) {
    const auto dataset = train::Dataset::load(config.output_dir, config.data_dir);
    const std::string ckpt_path =
        checkpoint_path.empty()
            ? (config.checkpoint_path.empty() ? config.default_checkpoint_path()
                                              : config.checkpoint_path)
            : checkpoint_path;
    const auto checkpoint = train::Checkpoint::load(ckpt_path);

    // First record per visit, test fold only.
    std::vector<std::size_t> test_rows;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        if (s.fold == config.test_fold && s.is_first_of_visit) test_rows.push_back(i);
    }
    if (test_rows.empty()) throw DataError("no first-of-visit rows in test fold");

    const auto m = train::score_with_checkpoint(checkpoint, dataset, test_rows);
    std::vector<std::size_t> all_rows(test_rows.size());
    for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;

    eval::EvalReport report;
    report.scenario = checkpoint.scenario;
    report.n_rows = test_rows.size();

    // Per-label point estimates and bootstrap CIs. A resample that loses one
    // of the classes falls back to the point estimate for that iteration.
    for (std::size_t j = 0; j < checkpoint.label_names.size(); ++j) {
        eval::LabelResult r;
        r.name = checkpoint.label_names[j];
        for (auto row : all_rows) {
            labels::Ternary t = m.y[row * m.n_labels + j];
            if (t == labels::kPositive) ++r.n_pos;
            if (t == labels::kNegative) ++r.n_neg;
        }
        r.auroc = label_auroc_over(m, j, all_rows);
        if (r.auroc) {
            double point = *r.auroc;
            auto metric = [&](const std::vector<std::size_t>& rows) {
                auto v = label_auroc_over(m, j, rows);
                return v ? *v : point;
            };
            auto ci = eval::bootstrap_ci(metric, all_rows, config.bootstrap_iters, config.ci_level,
                                         config.eval_seed);
            r.ci_lo = ci.lo;
            r.ci_hi = ci.hi;
        }
        report.per_label.push_back(std::move(r));
    }

    {
        double point = eval::macro_auroc(m, all_rows);
        auto metric = [&](const std::vector<std::size_t>& rows) {
            try {
                return eval::macro_auroc(m, rows);
            } catch (const DataError&) {
                return point;
            }
        };
        auto ci = eval::bootstrap_ci(metric, all_rows, config.bootstrap_iters, config.ci_level,
                                     config.eval_seed);
        report.macro = point;
        report.macro_lo = ci.lo;
        report.macro_hi = ci.hi;
    }

    // Chapter table over the diagnosis labels present in the checkpoint.
    std::map<std::string, std::size_t> space_index;
    for (std::size_t i = 0; i < dataset.label_space.names.size(); ++i) {
        space_index[dataset.label_space.names[i]] = i;
    }
    std::vector<eval::LabelResult> diagnosis_results;
    std::set<std::string> deterioration_names;
    for (const auto& name : labels::DeteriorationSpec::load(
             config.resolve(config.deterioration_path)).names()) {
        deterioration_names.insert(name);
    }
    for (const auto& r : report.per_label) {
        auto it = space_index.find(r.name);
        if (it != space_index.end() && !dataset.label_space.is_deterioration(it->second)) {
            diagnosis_results.push_back(r);
        }
    }
    if (!diagnosis_results.empty()) {
        const auto chapters = eval::ChapterMap::load(config.resolve(config.chapters_path));
        report.chapters = eval::chapter_report(diagnosis_results, chapters);
    }

    // Category means need all 15 targets trained and defined.
    {
        const auto spec =
            labels::DeteriorationSpec::load(config.resolve(config.deterioration_path));
        std::map<std::string, double> by_target;
        for (const auto& r : report.per_label) {
            if (deterioration_names.count(r.name) > 0 && r.auroc) by_target[r.name] = *r.auroc;
        }
        if (by_target.size() == spec.targets.size()) {
            report.deterioration = eval::deterioration_report(by_target, spec);
        } else if (!by_target.empty()) {
            log_warn("deterioration category means omitted: " +
                     std::to_string(by_target.size()) + "/" +
                     std::to_string(spec.targets.size()) + " targets defined");
        }
    }

    const std::string prefix = config.output_dir + "/eval_report_" +
                               run_tag(checkpoint.scenario, checkpoint.seed);
    report.save_json(prefix + ".json");
    {
        std::ofstream out(prefix + ".txt", std::ios::binary);
        if (!out) throw DataError("cannot write " + prefix + ".txt");
        out << report.text();
    }
    log_info("eval report written: " + prefix + ".json");
    return prefix + ".json";
}

// ---------------------------------------------------------------------------
// cmd_report
// ---------------------------------------------------------------------------

namespace {

struct ReportRow {
    std::string name;
    std::vector<std::optional<double>> values;
};

std::optional<double> row_improvement(const ReportRow& row) {
    if (row.values.size() < 2) return std::nullopt;
    const auto& first = row.values.front();
    const auto& last = row.values.back();
    if (!first || !last || *first <= 0.0) return std::nullopt;
    return eval::relative_improvement(*last, *first);
}

std::string fmt_cell(const std::optional<double>& v, int digits) {
    if (!v) return "-";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << *v;
    return os.str();
}

}  // namespace

void cmd_report(const std::vector<std::string>& report_paths, const std::string& out_prefix,
                const ExperimentConfig& config) {
    if (report_paths.empty()) throw UsageError("report needs at least one evaluation report");

    std::vector<eval::EvalReport> reports;
    for (const auto& path : report_paths) reports.push_back(eval::EvalReport::load_json(path));

    std::vector<std::string> columns;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::string name = reports[i].scenario;
        int dup = 0;
        for (std::size_t k = 0; k < i; ++k) {
            if (reports[k].scenario == name) ++dup;
        }
        if (dup > 0) name += "#" + std::to_string(dup + 1);
        columns.push_back(name);
    }

    const auto spec = labels::DeteriorationSpec::load(config.resolve(config.deterioration_path));

    std::vector<ReportRow> rows;
    auto add_row = [&](const std::string& name,
                       const std::function<std::optional<double>(const eval::EvalReport&)>& get) {
        ReportRow row;
        row.name = name;
        bool any = false;
        for (const auto& r : reports) {
            auto v = get(r);
            any = any || v.has_value();
            row.values.push_back(v);
        }
        if (any) rows.push_back(std::move(row));
    };

    add_row("macro_auroc", [](const eval::EvalReport& r) -> std::optional<double> {
        return r.macro;
    });
    add_row("clinical_deterioration", [](const eval::EvalReport& r) -> std::optional<double> {
        if (!r.deterioration) return std::nullopt;
        return r.deterioration->clinical_deterioration;
    });
    add_row("icu", [](const eval::EvalReport& r) -> std::optional<double> {
        if (!r.deterioration) return std::nullopt;
        return r.deterioration->icu;
    });
    add_row("mortality", [](const eval::EvalReport& r) -> std::optional<double> {
        if (!r.deterioration) return std::nullopt;
        return r.deterioration->mortality;
    });
    for (const auto& target : spec.targets) {
        add_row(target.name, [&](const eval::EvalReport& r) -> std::optional<double> {
            for (const auto& lr : r.per_label) {
                if (lr.name == target.name) return lr.auroc;
            }
            return std::nullopt;
        });
    }
    {
        // Chapter order follows the first report that carries chapters.
        std::vector<std::string> chapter_order;
        for (const auto& r : reports) {
            for (const auto& c : r.chapters) {
                if (std::find(chapter_order.begin(), chapter_order.end(), c.chapter) ==
                    chapter_order.end()) {
                    chapter_order.push_back(c.chapter);
                }
            }
        }
        for (const auto& chapter : chapter_order) {
            add_row("chapter_" + chapter, [&](const eval::EvalReport& r) -> std::optional<double> {
                for (const auto& c : r.chapters) {
                    if (c.chapter == chapter) return c.mean_auroc;
                }
                return std::nullopt;
            });
        }
    }

    const bool with_improvement = reports.size() >= 2;

    json j;
    j["columns"] = columns;
    j["rows"] = json::array();
    for (const auto& row : rows) {
        json jr;
        jr["name"] = row.name;
        jr["values"] = json::array();
        for (const auto& v : row.values) {
            if (v) {
                jr["values"].push_back(*v);
            } else {
                jr["values"].push_back(nullptr);
            }
        }
        if (with_improvement) {
            auto imp = row_improvement(row);
            if (imp) {
                jr["improvement_pct"] = *imp;
            } else {
                jr["improvement_pct"] = nullptr;
            }
        }
        j["rows"].push_back(jr);
    }
    write_json_file(out_prefix + ".json", j);

    // Fixed-width text table.
    std::size_t name_w = 4;
    for (const auto& row : rows) name_w = std::max(name_w, row.name.size());
    std::vector<std::size_t> col_w;
    for (const auto& c : columns) col_w.push_back(std::max<std::size_t>(c.size(), 6));

    std::ostringstream os;
    os << std::string(name_w, ' ');
    for (std::size_t i = 0; i < columns.size(); ++i) {
        os << "  " << std::string(col_w[i] - columns[i].size(), ' ') << columns[i];
    }
    if (with_improvement) os << "  improvement%";
    os << "\n";
    for (const auto& row : rows) {
        os << row.name << std::string(name_w - row.name.size(), ' ');
        for (std::size_t i = 0; i < row.values.size(); ++i) {
            std::string cell = fmt_cell(row.values[i], 4);
            os << "  " << std::string(col_w[i] > cell.size() ? col_w[i] - cell.size() : 0, ' ')
               << cell;
        }
        if (with_improvement) {
            std::string cell = fmt_cell(row_improvement(row), 2);
            os << "  " << std::string(cell.size() < 12 ? 12 - cell.size() : 0, ' ') << cell;
        }
        os << "\n";
    }
    std::ofstream out(out_prefix + ".txt", std::ios::binary);
    if (!out) throw DataError("cannot write " + out_prefix + ".txt");
    out << os.str();

    log_info("comparison written: " + out_prefix + ".json");
}

}  // namespace edbench::pipeline
