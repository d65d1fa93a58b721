#include "edbench/labels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "edbench/csv.hpp"

using nlohmann::json;

namespace edbench::labels {

std::string normalize_code(const std::string& code) {
    std::string out;
    out.reserve(code.size());
    for (char c : code) {
        if (c == '.' || c == ' ') continue;
        out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    return out;
}

Gem load_gem(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c9 = t.column("icd9");
    std::size_t c10 = t.column("icd10");
    Gem gem;
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        std::string from = normalize_code(trim(t.cell(i, c9)));
        std::string to = normalize_code(trim(t.cell(i, c10)));
        if (from.empty() || to.empty()) {
            throw FormatError("gem file " + path + " row " + std::to_string(i) + " incomplete");
        }
        gem[from].push_back(to);
    }
    return gem;
}

std::vector<std::string> normalize_icd(const std::string& code, int version, const Gem& map9to10,
                                       std::vector<std::string>* log) {
    std::string normalized = normalize_code(code);
    if (version == 10) return {normalized};
    auto it = map9to10.find(normalized);
    if (it == map9to10.end()) {
        if (log) log->push_back("unmappable icd9 code dropped: " + normalized);
        return {};
    }
    return it->second;
}

std::set<std::string> truncate_and_propagate(const std::string& code) {
    std::string normalized = normalize_code(code);
    if (normalized.size() < 3) {
        throw DataError("icd code shorter than 3 characters: '" + code + "'");
    }
    if (normalized.size() > 5) normalized.resize(5);
    std::set<std::string> out;
    for (std::size_t len = 3; len <= normalized.size(); ++len) {
        out.insert(normalized.substr(0, len));
    }
    return out;
}

DiagnosisVocab DiagnosisVocab::from_codes(std::vector<std::string> codes,
                                          std::vector<std::int64_t> counts) {
    DiagnosisVocab v;
    v.codes = std::move(codes);
    v.counts = std::move(counts);
    if (v.counts.size() != v.codes.size()) v.counts.assign(v.codes.size(), 0);
    for (std::size_t i = 0; i < v.codes.size(); ++i) v.index[v.codes[i]] = i;
    if (v.index.size() != v.codes.size()) throw DataError("duplicate codes in vocabulary");
    return v;
}

DiagnosisVocab build_vocab(const std::vector<std::set<std::string>>& per_sample_codes,
                           std::int64_t min_count) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& sample : per_sample_codes) {
        for (const auto& code : sample) counts[code]++;
    }
    std::vector<std::string> codes;
    std::vector<std::int64_t> kept_counts;
    for (const auto& [code, n] : counts) {
        if (n >= min_count) {
            codes.push_back(code);
            kept_counts.push_back(n);
        }
    }
    if (codes.empty()) throw DataError("empty diagnosis vocabulary (min_count too high?)");
    return DiagnosisVocab::from_codes(std::move(codes), std::move(kept_counts));
}

DiagnosisVocab load_vocab_file(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_code = t.column("code");
    bool has_count = t.has_column("count");
    std::size_t c_count = has_count ? t.column("count") : 0;
    std::vector<std::string> codes;
    std::vector<std::int64_t> counts;
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        codes.push_back(normalize_code(trim(t.cell(i, c_code))));
        std::int64_t n = 0;
        if (has_count) {
            if (auto parsed = try_parse_int(trim(t.cell(i, c_count)))) n = *parsed;
        }
        counts.push_back(n);
    }
    std::vector<std::size_t> order(codes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return codes[a] < codes[b]; });
    std::vector<std::string> sorted_codes;
    std::vector<std::int64_t> sorted_counts;
    for (std::size_t i : order) {
        sorted_codes.push_back(codes[i]);
        sorted_counts.push_back(counts[i]);
    }
    return DiagnosisVocab::from_codes(std::move(sorted_codes), std::move(sorted_counts));
}

void write_vocab_file(const std::string& path, const DiagnosisVocab& vocab) {
    CsvWriter w({"code", "count"});
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        w.add_row({vocab.codes[i], std::to_string(vocab.counts[i])});
    }
    w.write_file(path);
}

DiagnosisLabels diagnosis_labels(const std::set<std::string>& propagated_codes,
                                 const DiagnosisVocab& vocab, bool has_diagnosis_records) {
    DiagnosisLabels out;
    out.values.assign(vocab.size(), kNegative);
    out.has_diagnoses = has_diagnosis_records;
    for (const auto& code : propagated_codes) {
        auto it = vocab.index.find(code);
        if (it != vocab.index.end()) out.values[it->second] = kPositive;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deterioration spec
// ---------------------------------------------------------------------------

namespace {

TargetKind parse_kind(const std::string& kind) {
    if (kind == "vital_threshold") return TargetKind::VitalThreshold;
    if (kind == "coded_event") return TargetKind::CodedEvent;
    if (kind == "medication") return TargetKind::Medication;
    if (kind == "icu") return TargetKind::Icu;
    if (kind == "mortality") return TargetKind::Mortality;
    throw FormatError("unknown deterioration target kind: " + kind);
}

}  // namespace

DeteriorationSpec DeteriorationSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open deterioration spec: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("invalid deterioration spec json: " + std::string(e.what()));
    }
    DeteriorationSpec spec;
    for (const auto& entry : j.at("targets")) {
        DeteriorationTarget t;
        t.name = entry.at("name").get<std::string>();
        t.category = entry.at("category").get<std::string>();
        t.kind = parse_kind(entry.at("kind").get<std::string>());
        if (entry.contains("horizon_hours")) {
            t.horizon_hours = entry.at("horizon_hours").get<double>();
            if (*t.horizon_hours <= 0.0) {
                throw FormatError("non-positive horizon for target " + t.name);
            }
        }
        if (entry.contains("scope")) {
            std::string scope = entry.at("scope").get<std::string>();
            if (scope == "in_hospital") {
                t.in_hospital = true;
            } else if (scope == "overall") {
                t.overall = true;
            } else {
                throw FormatError("unknown scope '" + scope + "' for target " + t.name);
            }
        }
        if (entry.contains("codes")) {
            for (const auto& c : entry.at("codes")) {
                t.codes.push_back(normalize_code(c.get<std::string>()));
            }
        }
        if (entry.contains("drugs")) {
            for (const auto& d : entry.at("drugs")) t.drugs.push_back(to_lower(d.get<std::string>()));
        }
        if (entry.contains("variable")) t.variable = entry.at("variable").get<std::string>();
        if (entry.contains("threshold")) t.threshold = entry.at("threshold").get<double>();
        spec.targets.push_back(std::move(t));
    }
    if (spec.targets.size() != 15) {
        throw FormatError("deterioration spec must define exactly 15 targets, got " +
                          std::to_string(spec.targets.size()));
    }
    return spec;
}

const DeteriorationTarget& DeteriorationSpec::target(const std::string& name) const {
    for (const auto& t : targets) {
        if (t.name == name) return t;
    }
    throw DataError("unknown deterioration target: " + name);
}

std::vector<std::string> DeteriorationSpec::names() const {
    std::vector<std::string> out;
    out.reserve(targets.size());
    for (const auto& t : targets) out.push_back(t.name);
    return out;
}

// ---------------------------------------------------------------------------
// Per-kind label rules
// ---------------------------------------------------------------------------

std::array<Ternary, 7> mortality_labels(const cohort::Sample& sample,
                                        const OutcomeRecord* outcome) {
    std::array<Ternary, 7> out;
    out.fill(kNegative);
    if (outcome == nullptr || !outcome->dod) return out;
    Timestamp dod = *outcome->dod;
    if (dod < sample.arrival) {
        throw DataError("date of death precedes arrival for sample " + sample.sample_id);
    }
    if (dod <= sample.window_end) {
        out.fill(kMasked);
        return out;
    }
    static constexpr double kHorizonHours[6] = {24, 168, 672, 2160, 4320, 8760};
    double elapsed_hours =
        static_cast<double>(dod - sample.arrival) / static_cast<double>(kSecondsPerHour);
    for (std::size_t i = 0; i < 6; ++i) {
        out[i] = elapsed_hours <= kHorizonHours[i] ? kPositive : kNegative;
    }
    out[6] = dod <= outcome->dischtime ? kPositive : kNegative;
    return out;
}

std::array<Ternary, 2> icu_labels(const cohort::Sample& sample,
                                  const std::vector<IcuInterval>& intervals) {
    std::array<Ternary, 2> out = {kNegative, kNegative};
    Timestamp horizon = sample.arrival + 24 * kSecondsPerHour;
    for (const auto& iv : intervals) {
        if (iv.intime <= sample.window_end) {
            out = {kMasked, kMasked};
            return out;
        }
    }
    for (const auto& iv : intervals) {
        if (iv.intime > sample.window_end) {
            out[1] = kPositive;
            if (iv.intime <= horizon) out[0] = kPositive;
        }
    }
    return out;
}

namespace {

// The generic name must appear as a whole word: "norepinephrine 8 mg" names
// norepinephrine, not the embedded "epinephrine".
bool name_matches(const std::string& event_name, const std::vector<std::string>& drugs) {
    auto is_letter = [](char c) { return c >= 'a' && c <= 'z'; };
    for (const auto& drug : drugs) {
        for (std::size_t pos = event_name.find(drug); pos != std::string::npos;
             pos = event_name.find(drug, pos + 1)) {
            bool left_ok = pos == 0 || !is_letter(event_name[pos - 1]);
            std::size_t end = pos + drug.size();
            bool right_ok = end == event_name.size() || !is_letter(event_name[end]);
            if (left_ok && right_ok) return true;
        }
    }
    return false;
}

}  // namespace

Ternary medication_label(const cohort::Sample& sample, const std::vector<MedEvent>& meds,
                         const std::vector<std::string>& drugs, double horizon_hours) {
    Timestamp horizon =
        sample.arrival + static_cast<Timestamp>(std::llround(horizon_hours * kSecondsPerHour));
    bool positive = false;
    for (const auto& med : meds) {
        if (!name_matches(to_lower(med.name), drugs)) continue;
        if (med.charttime <= sample.window_end) return kMasked;
        if (med.charttime <= horizon) positive = true;
    }
    return positive ? kPositive : kNegative;
}

Ternary coded_event_label(const cohort::Sample& sample,
                          const std::vector<CodedEventRecord>& events,
                          const std::vector<std::string>& codes) {
    std::int64_t arrival_day = day_index(sample.arrival);
    for (const auto& e : events) {
        if (!e.event_date) continue;
        std::string normalized = normalize_code(e.icd_code);
        if (std::find(codes.begin(), codes.end(), normalized) == codes.end()) continue;
        std::int64_t event_day = day_index(*e.event_date);
        if (event_day == arrival_day || event_day == arrival_day + 1) return kPositive;
    }
    return kNegative;
}

Ternary vital_threshold_label(const cohort::Sample& sample,
                              const std::vector<EventRecord>& vitals,
                              const std::string& variable, double threshold,
                              double horizon_hours) {
    Timestamp horizon =
        sample.arrival + static_cast<Timestamp>(std::llround(horizon_hours * kSecondsPerHour));
    bool positive = false;
    for (const auto& v : vitals) {
        if (v.variable_id != variable || is_missing(v.value)) continue;
        if (v.value > threshold) continue;
        if (v.charttime <= sample.window_end) return kMasked;
        if (v.charttime <= horizon) positive = true;
    }
    return positive ? kPositive : kNegative;
}

std::vector<Ternary> deterioration_labels(const cohort::Sample& sample,
                                          const SampleEvents& events,
                                          const DeteriorationSpec& spec) {
    std::array<Ternary, 7> mortality{};
    bool mortality_done = false;
    std::array<Ternary, 2> icu{};
    bool icu_done = false;

    std::vector<Ternary> out;
    out.reserve(spec.targets.size());
    for (const auto& t : spec.targets) {
        switch (t.kind) {
            case TargetKind::VitalThreshold:
                out.push_back(vital_threshold_label(sample, events.vitals, t.variable, t.threshold,
                                                    t.horizon_hours.value_or(24.0)));
                break;
            case TargetKind::CodedEvent:
                out.push_back(coded_event_label(sample, events.coded_events, t.codes));
                break;
            case TargetKind::Medication:
                out.push_back(medication_label(sample, events.meds, t.drugs,
                                               t.horizon_hours.value_or(24.0)));
                break;
            case TargetKind::Icu: {
                if (!icu_done) {
                    icu = icu_labels(sample, events.outcome ? events.outcome->icu_intervals
                                                            : std::vector<IcuInterval>{});
                    icu_done = true;
                }
                out.push_back(t.overall ? icu[1] : icu[0]);
                break;
            }
            case TargetKind::Mortality: {
                if (!mortality_done) {
                    mortality = mortality_labels(sample, events.outcome);
                    mortality_done = true;
                }
                if (t.in_hospital) {
                    out.push_back(mortality[6]);
                } else {
                    double h = t.horizon_hours.value_or(0.0);
                    std::size_t idx;
                    if (h <= 24.0) {
                        idx = 0;
                    } else if (h <= 168.0) {
                        idx = 1;
                    } else if (h <= 672.0) {
                        idx = 2;
                    } else if (h <= 2160.0) {
                        idx = 3;
                    } else if (h <= 4320.0) {
                        idx = 4;
                    } else {
                        idx = 5;
                    }
                    out.push_back(mortality[idx]);
                }
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Label space + matrix
// ---------------------------------------------------------------------------

LabelSpace LabelSpace::build(const DiagnosisVocab& vocab, const DeteriorationSpec& spec) {
    LabelSpace space;
    space.names = vocab.codes;
    space.n_diagnosis = vocab.size();
    for (const auto& t : spec.targets) space.names.push_back(t.name);
    return space;
}

std::string LabelSpace::content_hash() const {
    std::string blob = std::to_string(n_diagnosis);
    for (const auto& name : names) {
        blob += '\n';
        blob += name;
    }
    return sha256_hex(blob);
}

void LabelSpace::save(const std::string& path) const {
    json j;
    j["n_diagnosis"] = n_diagnosis;
    j["names"] = names;
    j["hash"] = content_hash();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write label space: " + path);
    out << j.dump(2) << "\n";
}

LabelSpace LabelSpace::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label space: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("invalid label space json: " + std::string(e.what()));
    }
    LabelSpace space;
    space.n_diagnosis = j.at("n_diagnosis").get<std::size_t>();
    space.names = j.at("names").get<std::vector<std::string>>();
    if (space.n_diagnosis > space.names.size()) {
        throw FormatError("label space n_diagnosis exceeds name count");
    }
    return space;
}

void write_label_matrix(const std::string& path, const LabelMatrix& matrix,
                        const LabelSpace& space) {
    if (matrix.n_labels != space.size()) {
        throw DataError("label matrix width does not match label space");
    }
    CsvWriter w({"sample_id", "label_id", "value"});
    for (std::size_t r = 0; r < matrix.sample_ids.size(); ++r) {
        for (std::size_t c = 0; c < matrix.n_labels; ++c) {
            Ternary v = matrix.at(r, c);
            if (v == kNegative) continue;
            w.add_row({matrix.sample_ids[r], space.names[c], v == kPositive ? "1" : "M"});
        }
    }
    w.write_file(path);
}

LabelMatrix read_label_matrix(const std::string& path, const LabelSpace& space,
                              const std::vector<std::string>& sample_ids) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_sample = t.column("sample_id");
    std::size_t c_label = t.column("label_id");
    std::size_t c_value = t.column("value");

    LabelMatrix m;
    m.n_labels = space.size();
    m.sample_ids = sample_ids;
    std::map<std::string, std::size_t> label_index;
    for (std::size_t i = 0; i < space.names.size(); ++i) label_index[space.names[i]] = i;
    std::map<std::string, std::size_t> row_index;
    for (std::size_t i = 0; i < sample_ids.size(); ++i) row_index[sample_ids[i]] = i;

    m.values.assign(m.sample_ids.size() * m.n_labels, kNegative);
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        auto rit = row_index.find(t.cell(i, c_sample));
        if (rit == row_index.end()) {
            throw DataError("label matrix references unknown sample: " + t.cell(i, c_sample));
        }
        auto lit = label_index.find(t.cell(i, c_label));
        if (lit == label_index.end()) {
            throw DataError("label matrix references unknown label: " + t.cell(i, c_label));
        }
        const std::string& value = t.cell(i, c_value);
        Ternary v;
        if (value == "1") {
            v = kPositive;
        } else if (value == "M") {
            v = kMasked;
        } else {
            throw FormatError("label matrix value must be 1 or M, got '" + value + "'");
        }
        m.at(rit->second, lit->second) = v;
    }
    return m;
}

}  // namespace edbench::labels
