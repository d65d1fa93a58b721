#include "edbench/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "edbench/csv.hpp"

using nlohmann::json;

namespace edbench::features {

const std::vector<std::string>& trend_stat_names() {
    static const std::vector<std::string> names = {
        "mean", "median", "min", "max", "std", "first", "last", "rate", "slope",
    };
    return names;
}

std::vector<double> TrendAggregate::as_vector() const {
    return {mean, median, min, max, std, first, last, rate, slope};
}

TrendAggregate aggregate_trends(const std::vector<std::pair<double, double>>& series) {
    TrendAggregate out;
    if (series.empty()) return out;
    const std::size_t n = series.size();

    double sum = 0.0;
    out.min = series.front().second;
    out.max = series.front().second;
    for (const auto& [t, v] : series) {
        sum += v;
        out.min = std::min(out.min, v);
        out.max = std::max(out.max, v);
    }
    out.mean = sum / static_cast<double>(n);

    std::vector<double> values;
    values.reserve(n);
    for (const auto& [t, v] : series) values.push_back(v);
    std::sort(values.begin(), values.end());
    out.median = (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);

    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(n));

    out.first = series.front().second;
    out.last = series.back().second;

    double t_first = series.front().first;
    double t_last = series.back().first;
    if (n >= 2 && t_last != t_first) {
        out.rate = (out.last - out.first) / (t_last - t_first);

        double t_mean = 0.0;
        for (const auto& [t, v] : series) t_mean += t;
        t_mean /= static_cast<double>(n);
        double sxx = 0.0;
        double sxy = 0.0;
        for (const auto& [t, v] : series) {
            sxx += (t - t_mean) * (t - t_mean);
            sxy += (t - t_mean) * (v - out.mean);
        }
        if (sxx > 0.0) out.slope = sxy / sxx;
    }
    return out;
}

EventRecord convert_units(EventRecord event, const VariableRegistry& registry,
                          std::vector<std::string>* log) {
    if (!registry.has(event.variable_id)) {
        if (log) log->push_back("unknown variable: " + event.variable_id);
        event.value = kMissing;
        return event;
    }
    const VariableDef& def = registry.get(event.variable_id);
    if (event.unit == def.canonical_unit || event.unit.empty()) {
        event.unit = def.canonical_unit;
        return event;
    }
    for (const auto& conv : def.conversions) {
        if (conv.from_unit != event.unit) continue;
        if (!is_missing(event.value)) {
            event.value = conv.is_f_to_c ? (event.value - 32.0) * 5.0 / 9.0
                                         : event.value * conv.factor;
        }
        event.unit = def.canonical_unit;
        return event;
    }
    if (log) {
        log->push_back("unknown unit '" + event.unit + "' for " + event.variable_id +
                       "; value dropped");
    }
    event.value = kMissing;
    event.unit = def.canonical_unit;
    return event;
}

namespace {

/// Applies a variable's outlier rule when the event unit matches the unit
/// the rule is stated in (canonical unless in_unit names a source unit).
void apply_outlier_rule(EventRecord& event, const VariableDef& def) {
    if (!def.outlier) return;
    const OutlierRule& rule = *def.outlier;
    if (!rule.lower && !rule.upper) return;
    const std::string& rule_unit = rule.in_unit.empty() ? def.canonical_unit : rule.in_unit;
    if (event.unit != rule_unit) return;
    if (is_missing(event.value)) return;
    if (rule.lower && event.value < *rule.lower) event.value = kMissing;
    if (rule.upper && event.value > *rule.upper) event.value = kMissing;
}

}  // namespace

std::vector<EventRecord> filter_outliers(std::vector<EventRecord> events,
                                         const VariableRegistry& registry) {
    for (auto& e : events) {
        if (!registry.has(e.variable_id)) continue;
        apply_outlier_rule(e, registry.get(e.variable_id));
    }
    return events;
}

std::vector<EventRecord> canonicalize_events(std::vector<EventRecord> events,
                                             const VariableRegistry& registry,
                                             std::vector<std::string>* log) {
    events = filter_outliers(std::move(events), registry);  // source-unit rules
    for (auto& e : events) e = convert_units(std::move(e), registry, log);
    events = filter_outliers(std::move(events), registry);  // canonical-unit rules
    return events;
}

std::vector<OmrRecord> canonicalize_omr(std::vector<OmrRecord> records,
                                        const VariableRegistry& registry,
                                        std::vector<std::string>* log) {
    for (auto& r : records) {
        EventRecord e;
        e.subject_id = r.subject_id;
        e.variable_id = r.variable_id;
        e.value = r.value;
        e.unit = r.unit;
        e.charttime = r.chartdate;
        std::vector<EventRecord> one = {std::move(e)};
        one = canonicalize_events(std::move(one), registry, log);
        r.value = one[0].value;
        r.unit = one[0].unit;
    }
    return records;
}

Biometrics match_biometrics(Timestamp arrival, const std::vector<OmrRecord>& omr) {
    constexpr Timestamp kMaxDistance = 30 * kSecondsPerDay;
    auto pick = [&](const std::string& variable) {
        double best_value = kMissing;
        Timestamp best_distance = kMaxDistance + 1;
        Timestamp best_time = 0;
        for (const auto& r : omr) {
            if (r.variable_id != variable || is_missing(r.value)) continue;
            Timestamp distance = r.chartdate >= arrival ? r.chartdate - arrival
                                                        : arrival - r.chartdate;
            if (distance > kMaxDistance) continue;
            if (distance < best_distance ||
                (distance == best_distance && r.chartdate < best_time)) {
                best_distance = distance;
                best_time = r.chartdate;
                best_value = r.value;
            }
        }
        return best_value;
    };
    Biometrics b;
    b.height = pick("height");
    b.weight = pick("weight");
    b.bmi = pick("bmi");
    return b;
}

std::vector<double> extract_ecg_features(const std::map<std::string, double>& machine_features) {
    std::vector<double> out;
    const auto& names = ecg_machine_feature_names();
    out.reserve(names.size());
    for (const auto& name : names) {
        auto it = machine_features.find(name);
        out.push_back(it == machine_features.end() ? kMissing : it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

FeatureSchema FeatureSchema::from_registry(const VariableRegistry& registry) {
    FeatureSchema s;
    s.registry_hash = registry.content_hash();
    s.numeric_names.push_back("age");
    for (const auto& biometric : registry.biometrics()) s.numeric_names.push_back(biometric.id);
    for (const auto& vital : registry.vitals()) {
        for (const auto& stat : trend_stat_names()) {
            s.numeric_names.push_back(vital.id + "_" + stat);
        }
    }
    for (const auto& lab : registry.labs()) {
        for (const auto& stat : trend_stat_names()) {
            s.numeric_names.push_back(lab.id + "_" + stat);
        }
    }
    s.categorical_names = {"gender", "race", "acuity"};
    s.categorical_vocabs.assign(3, {});
    s.ecg_names = ecg_machine_feature_names();
    return s;
}

std::string FeatureSchema::content_hash() const {
    std::string blob = registry_hash;
    for (const auto& n : numeric_names) blob += "\n" + n;
    for (std::size_t i = 0; i < categorical_names.size(); ++i) {
        blob += "\n" + categorical_names[i] + ":";
        for (const auto& v : categorical_vocabs[i]) blob += v + "|";
    }
    for (const auto& n : ecg_names) blob += "\n" + n;
    return sha256_hex(blob);
}

void FeatureSchema::save(const std::string& path) const {
    json j;
    j["numeric"] = numeric_names;
    json cats = json::array();
    for (std::size_t i = 0; i < categorical_names.size(); ++i) {
        cats.push_back({{"name", categorical_names[i]}, {"vocab", categorical_vocabs[i]}});
    }
    j["categorical"] = cats;
    j["ecg"] = ecg_names;
    j["registry_hash"] = registry_hash;
    j["hash"] = content_hash();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write feature schema: " + path);
    out << j.dump(2) << "\n";
}

FeatureSchema FeatureSchema::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature schema: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("invalid feature schema json: " + std::string(e.what()));
    }
    FeatureSchema s;
    s.numeric_names = j.at("numeric").get<std::vector<std::string>>();
    for (const auto& cat : j.at("categorical")) {
        s.categorical_names.push_back(cat.at("name").get<std::string>());
        s.categorical_vocabs.push_back(cat.at("vocab").get<std::vector<std::string>>());
    }
    s.ecg_names = j.at("ecg").get<std::vector<std::string>>();
    s.registry_hash = j.at("registry_hash").get<std::string>();
    return s;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

void build_categorical_vocabs(FeatureSchema& schema, const std::vector<cohort::Sample>& samples,
                              const std::map<std::string, const StayRecord*>& stay_by_id) {
    std::set<std::string> genders;
    std::set<std::string> races;
    std::set<std::string> acuities;
    for (const auto& s : samples) {
        auto it = stay_by_id.find(s.stay_id);
        if (it == stay_by_id.end()) continue;
        const StayRecord& stay = *it->second;
        if (!stay.gender.empty()) genders.insert(stay.gender);
        if (!stay.race.empty()) races.insert(stay.race);
        if (stay.acuity) acuities.insert(std::to_string(*stay.acuity));
    }
    schema.categorical_vocabs = {
        std::vector<std::string>(genders.begin(), genders.end()),
        std::vector<std::string>(races.begin(), races.end()),
        std::vector<std::string>(acuities.begin(), acuities.end()),
    };
}

namespace {

int vocab_index(const std::vector<std::string>& vocab, const std::string& value) {
    if (value.empty()) return 0;
    auto it = std::find(vocab.begin(), vocab.end(), value);
    return it == vocab.end() ? 0 : static_cast<int>(it - vocab.begin()) + 1;
}

}  // namespace

FeatureVector assemble_features(const cohort::Sample& sample, const SampleFeatureInputs& inputs,
                                const VariableRegistry& registry, const FeatureSchema& schema) {
    if (inputs.stay == nullptr) {
        throw DataError("assemble_features: sample " + sample.sample_id + " has no stay record");
    }

    // Bucket window events by variable as (minutes, value) series.
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& e : inputs.window_events) {
        if (is_missing(e.value)) continue;
        if (e.charttime < sample.arrival || e.charttime > sample.window_end) continue;
        double minutes = static_cast<double>(e.charttime - sample.arrival) /
                         static_cast<double>(kSecondsPerMinute);
        series[e.variable_id].emplace_back(minutes, e.value);
    }
    for (auto& [_, points] : series) {
        std::sort(points.begin(), points.end());
    }

    FeatureVector out;
    out.numeric.reserve(schema.numeric_names.size());
    out.numeric.push_back(inputs.stay->age);
    for (const auto& biometric : registry.biometrics()) {
        if (biometric.id == "height") {
            out.numeric.push_back(inputs.biometrics.height);
        } else if (biometric.id == "weight") {
            out.numeric.push_back(inputs.biometrics.weight);
        } else if (biometric.id == "bmi") {
            out.numeric.push_back(inputs.biometrics.bmi);
        } else {
            throw DataError("assemble_features: unhandled biometric " + biometric.id);
        }
    }
    auto push_stats = [&](const std::string& variable) {
        auto it = series.find(variable);
        TrendAggregate agg = it == series.end()
                                 ? TrendAggregate{}
                                 : aggregate_trends(it->second);
        for (double v : agg.as_vector()) out.numeric.push_back(v);
    };
    for (const auto& vital : registry.vitals()) push_stats(vital.id);
    for (const auto& lab : registry.labs()) push_stats(lab.id);

    if (out.numeric.size() != schema.numeric_names.size()) {
        throw DataError("assemble_features: numeric width " + std::to_string(out.numeric.size()) +
                        " does not match schema " + std::to_string(schema.numeric_names.size()));
    }

    out.categorical = {
        vocab_index(schema.categorical_vocabs[0], inputs.stay->gender),
        vocab_index(schema.categorical_vocabs[1], inputs.stay->race),
        vocab_index(schema.categorical_vocabs[2],
                    inputs.stay->acuity ? std::to_string(*inputs.stay->acuity) : std::string()),
    };
    out.ecg = extract_ecg_features(inputs.ecg_machine_features);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void write_feature_matrix(const std::string& path, const FeatureMatrix& matrix) {
    std::vector<std::string> header = {"sample_id"};
    for (const auto& n : matrix.schema.numeric_names) header.push_back(n);
    for (const auto& n : matrix.schema.categorical_names) header.push_back(n);
    for (const auto& n : matrix.schema.ecg_names) header.push_back("ecg_" + n);

    CsvWriter w(header);
    const std::size_t n_num = matrix.schema.numeric_names.size();
    const std::size_t n_cat = matrix.schema.categorical_names.size();
    const std::size_t n_ecg = matrix.schema.ecg_names.size();
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        std::vector<std::string> row;
        row.reserve(header.size());
        row.push_back(matrix.sample_ids[r]);
        const double* num = matrix.numeric_row(r);
        for (std::size_t c = 0; c < n_num; ++c) {
            row.push_back(is_missing(num[c]) ? "" : fmt_double(num[c]));
        }
        const int* cat = matrix.categorical_row(r);
        for (std::size_t c = 0; c < n_cat; ++c) row.push_back(std::to_string(cat[c]));
        const double* ecg = matrix.ecg_row(r);
        for (std::size_t c = 0; c < n_ecg; ++c) {
            row.push_back(is_missing(ecg[c]) ? "" : fmt_double(ecg[c]));
        }
        w.add_row(row);
    }
    w.write_file(path);
}

FeatureMatrix read_feature_matrix(const std::string& path, const FeatureSchema& schema) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_sample = t.column("sample_id");
    std::vector<std::size_t> num_cols;
    for (const auto& n : schema.numeric_names) num_cols.push_back(t.column(n));
    std::vector<std::size_t> cat_cols;
    for (const auto& n : schema.categorical_names) cat_cols.push_back(t.column(n));
    std::vector<std::size_t> ecg_cols;
    for (const auto& n : schema.ecg_names) ecg_cols.push_back(t.column("ecg_" + n));

    FeatureMatrix m;
    m.schema = schema;
    m.sample_ids.reserve(t.row_count());
    m.numeric.reserve(t.row_count() * num_cols.size());
    m.categorical.reserve(t.row_count() * cat_cols.size());
    m.ecg.reserve(t.row_count() * ecg_cols.size());
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        m.sample_ids.push_back(t.cell(i, c_sample));
        for (std::size_t c : num_cols) {
            const std::string& cell = t.cell(i, c);
            if (cell.empty()) {
                m.numeric.push_back(kMissing);
            } else {
                auto v = try_parse_double(cell);
                if (!v) throw FormatError("non-numeric feature cell in " + path);
                m.numeric.push_back(*v);
            }
        }
        for (std::size_t c : cat_cols) {
            auto v = try_parse_int(t.cell(i, c));
            if (!v) throw FormatError("non-integer categorical cell in " + path);
            m.categorical.push_back(static_cast<int>(*v));
        }
        for (std::size_t c : ecg_cols) {
            const std::string& cell = t.cell(i, c);
            if (cell.empty()) {
                m.ecg.push_back(kMissing);
            } else {
                auto v = try_parse_double(cell);
                if (!v) throw FormatError("non-numeric ecg feature cell in " + path);
                m.ecg.push_back(*v);
            }
        }
    }
    return m;
}

}  // namespace edbench::features
