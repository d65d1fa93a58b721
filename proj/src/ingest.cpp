#include "edbench/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

#include "edbench/core.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace edbench {

const std::vector<std::string>& ecg_machine_feature_names() {
    static const std::vector<std::string> names = {
        "rr_interval", "p_onset", "qrs_onset", "qrs_end",
        "t_end",       "p_axis",  "qrs_axis",  "t_axis",
    };
    return names;
}

}  // namespace edbench

namespace edbench::ingest {

namespace {

void add_error(std::vector<RowDiagnostic>& diags, std::size_t row, std::string msg) {
    diags.push_back({row, std::move(msg), true});
}

void add_warning(std::vector<RowDiagnostic>& diags, std::size_t row, std::string msg) {
    diags.push_back({row, std::move(msg), false});
}

std::optional<Timestamp> parse_time_cell(const std::string& cell) {
    if (trim(cell).empty()) return std::nullopt;
    return try_parse_timestamp(trim(cell));
}

}  // namespace

LoadResult<StayRecord> load_edstays(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_stay = t.column("stay_id");
    std::size_t c_hadm = t.column("hadm_id");
    std::size_t c_in = t.column("intime");
    std::size_t c_out = t.column("outtime");
    std::size_t c_gender = t.column("gender");
    std::size_t c_race = t.column("race");
    std::size_t c_age = t.column("age");

    LoadResult<StayRecord> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        StayRecord r;
        r.subject_id = trim(t.cell(i, c_subject));
        r.stay_id = trim(t.cell(i, c_stay));
        r.hadm_id = trim(t.cell(i, c_hadm));
        if (r.subject_id.empty() || r.stay_id.empty()) {
            add_error(out.diagnostics, i, "missing subject_id or stay_id");
            continue;
        }
        auto in = parse_time_cell(t.cell(i, c_in));
        auto end = parse_time_cell(t.cell(i, c_out));
        if (!in || !end) {
            add_error(out.diagnostics, i, "unparseable intime/outtime");
            continue;
        }
        if (*in >= *end) {
            add_error(out.diagnostics, i, "intime is not before outtime");
            continue;
        }
        r.intime = *in;
        r.outtime = *end;
        r.gender = trim(t.cell(i, c_gender));
        r.race = trim(t.cell(i, c_race));
        auto age = try_parse_double(trim(t.cell(i, c_age)));
        if (!age || *age < 0.0) {
            add_error(out.diagnostics, i, "age missing or negative");
            continue;
        }
        r.age = *age;
        out.records.push_back(std::move(r));
        ++out.parsed_rows;
    }
    return out;
}

LoadResult<std::pair<std::string, int>> load_triage(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_stay = t.column("stay_id");
    std::size_t c_acuity = t.column("acuity");

    LoadResult<std::pair<std::string, int>> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        std::string stay = trim(t.cell(i, c_stay));
        std::string raw = trim(t.cell(i, c_acuity));
        if (stay.empty()) {
            add_error(out.diagnostics, i, "missing stay_id");
            continue;
        }
        if (raw.empty()) {
            // Acuity genuinely unrecorded: parsed row, no entry.
            ++out.parsed_rows;
            continue;
        }
        auto acuity = try_parse_int(raw);
        if (!acuity || *acuity < 1 || *acuity > 5) {
            add_error(out.diagnostics, i, "acuity outside 1..5: " + raw);
            continue;
        }
        out.records.emplace_back(stay, static_cast<int>(*acuity));
        ++out.parsed_rows;
    }
    return out;
}

LoadResult<EventRecord> load_vitalsign(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_stay = t.column("stay_id");
    std::size_t c_time = t.column("charttime");

    struct VitalColumn {
        std::string variable;
        std::size_t col;
        std::string unit;
    };
    // Temperature arrives in Fahrenheit; everything else is canonical.
    std::vector<VitalColumn> cols = {
        {"temperature", t.column("temperature"), "F"},
        {"heartrate", t.column("heartrate"), "bpm"},
        {"resprate", t.column("resprate"), "bpm"},
        {"o2sat", t.column("o2sat"), "%"},
        {"sbp", t.column("sbp"), "mmHg"},
        {"dbp", t.column("dbp"), "mmHg"},
    };

    LoadResult<EventRecord> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        std::string subject = trim(t.cell(i, c_subject));
        std::string stay = trim(t.cell(i, c_stay));
        auto when = parse_time_cell(t.cell(i, c_time));
        if (subject.empty() || stay.empty() || !when) {
            add_error(out.diagnostics, i, "missing ids or unparseable charttime");
            continue;
        }
        bool row_ok = true;
        std::vector<EventRecord> melted;
        for (const auto& vc : cols) {
            std::string raw = trim(t.cell(i, vc.col));
            if (raw.empty()) continue;
            auto value = try_parse_double(raw);
            if (!value) {
                add_error(out.diagnostics, i, "non-numeric " + vc.variable + ": " + raw);
                row_ok = false;
                break;
            }
            EventRecord e;
            e.subject_id = subject;
            e.stay_id = stay;
            e.variable_id = vc.variable;
            e.value = *value;
            e.unit = vc.unit;
            e.charttime = *when;
            melted.push_back(std::move(e));
        }
        if (!row_ok) continue;
        for (auto& e : melted) out.records.push_back(std::move(e));
        ++out.parsed_rows;
    }
    return out;
}

LoadResult<EventRecord> load_labevents(const std::string& path, const VariableRegistry& registry) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_hadm = t.column("hadm_id");
    std::size_t c_time = t.column("charttime");
    std::size_t c_var = t.column("variable");
    std::size_t c_value = t.column("value");
    std::size_t c_unit = t.column("unit");

    LoadResult<EventRecord> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        std::string variable = trim(t.cell(i, c_var));
        if (variable.empty()) {
            add_error(out.diagnostics, i, "missing variable");
            continue;
        }
        if (!registry.has(variable) || registry.kind_of(variable) != VariableKind::Lab) {
            add_warning(out.diagnostics, i, "ignoring unknown lab variable: " + variable);
            continue;
        }
        EventRecord e;
        e.subject_id = trim(t.cell(i, c_subject));
        e.hadm_id = trim(t.cell(i, c_hadm));
        if (e.subject_id.empty()) {
            add_error(out.diagnostics, i, "missing subject_id");
            continue;
        }
        auto when = parse_time_cell(t.cell(i, c_time));
        if (!when) {
            add_error(out.diagnostics, i, "unparseable charttime");
            continue;
        }
        e.charttime = *when;
        auto value = try_parse_double(trim(t.cell(i, c_value)));
        if (!value) {
            add_error(out.diagnostics, i, "non-numeric value for " + variable);
            continue;
        }
        e.value = *value;
        e.variable_id = variable;
        e.unit = trim(t.cell(i, c_unit));
        out.records.push_back(std::move(e));
        ++out.parsed_rows;
    }
    return out;
}

LoadResult<MedEvent> load_pyxis(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_stay = t.column("stay_id");
    std::size_t c_time = t.column("charttime");
    std::size_t c_name = t.column("name");

    LoadResult<MedEvent> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        MedEvent m;
        m.subject_id = trim(t.cell(i, c_subject));
        m.stay_id = trim(t.cell(i, c_stay));
        m.name = to_lower(trim(t.cell(i, c_name)));
        auto when = parse_time_cell(t.cell(i, c_time));
        if (m.subject_id.empty() || m.stay_id.empty() || m.name.empty() || !when) {
            add_error(out.diagnostics, i, "incomplete medication row");
            continue;
        }
        m.charttime = *when;
        out.records.push_back(std::move(m));
        ++out.parsed_rows;
    }
    return out;
}

namespace {

/// Shared by procedures/diagnoses loaders: identical shape, different id
/// column (stay- vs admission-scoped) and date column name.
LoadResult<CodedEventRecord> load_coded(const std::string& path, const std::string& scope_col,
                                        bool scope_is_stay, const std::string& date_col,
                                        bool date_required) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_scope = t.column(scope_col);
    std::size_t c_code = t.column("icd_code");
    std::size_t c_version = t.column("icd_version");
    std::size_t c_date = t.column(date_col);

    LoadResult<CodedEventRecord> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        CodedEventRecord r;
        r.subject_id = trim(t.cell(i, c_subject));
        std::string scope = trim(t.cell(i, c_scope));
        if (scope_is_stay) {
            r.stay_id = scope;
        } else {
            r.hadm_id = scope;
        }
        if (r.subject_id.empty() || scope.empty()) {
            add_error(out.diagnostics, i, "missing subject_id or " + scope_col);
            continue;
        }
        r.icd_code = trim(t.cell(i, c_code));
        if (r.icd_code.empty()) {
            add_error(out.diagnostics, i, "missing icd_code");
            continue;
        }
        auto version = try_parse_int(trim(t.cell(i, c_version)));
        if (!version || (*version != 9 && *version != 10)) {
            add_error(out.diagnostics, i, "icd_version must be 9 or 10");
            continue;
        }
        r.icd_version = static_cast<int>(*version);
        auto when = parse_time_cell(t.cell(i, c_date));
        if (date_required && !when) {
            add_error(out.diagnostics, i, "unparseable " + date_col);
            continue;
        }
        r.event_date = when;
        out.records.push_back(std::move(r));
        ++out.parsed_rows;
    }
    return out;
}

}  // namespace

LoadResult<CodedEventRecord> load_procedures(const std::string& path) {
    return load_coded(path, "hadm_id", false, "chartdate", true);
}

LoadResult<CodedEventRecord> load_diagnoses_ed(const std::string& path) {
    return load_coded(path, "stay_id", true, "event_date", false);
}

LoadResult<CodedEventRecord> load_diagnoses_hosp(const std::string& path) {
    return load_coded(path, "hadm_id", false, "event_date", false);
}

LoadResult<OutcomeRecord> load_admissions(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_hadm = t.column("hadm_id");
    std::size_t c_admit = t.column("admittime");
    std::size_t c_disch = t.column("dischtime");
    std::size_t c_dod = t.column("dod");

    LoadResult<OutcomeRecord> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        OutcomeRecord r;
        r.subject_id = trim(t.cell(i, c_subject));
        r.hadm_id = trim(t.cell(i, c_hadm));
        if (r.subject_id.empty() || r.hadm_id.empty()) {
            add_error(out.diagnostics, i, "missing subject_id or hadm_id");
            continue;
        }
        auto admit = parse_time_cell(t.cell(i, c_admit));
        auto disch = parse_time_cell(t.cell(i, c_disch));
        if (!admit || !disch) {
            add_error(out.diagnostics, i, "unparseable admittime/dischtime");
            continue;
        }
        if (*admit >= *disch) {
            add_error(out.diagnostics, i, "admittime is not before dischtime");
            continue;
        }
        r.admittime = *admit;
        r.dischtime = *disch;
        r.dod = parse_time_cell(t.cell(i, c_dod));
        out.records.push_back(std::move(r));
        ++out.parsed_rows;
    }
    return out;
}

LoadResult<std::pair<std::string, IcuInterval>> load_icustays(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_hadm = t.column("hadm_id");
    std::size_t c_in = t.column("intime");
    std::size_t c_out = t.column("outtime");

    LoadResult<std::pair<std::string, IcuInterval>> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        std::string hadm = trim(t.cell(i, c_hadm));
        auto in = parse_time_cell(t.cell(i, c_in));
        auto end = parse_time_cell(t.cell(i, c_out));
        if (hadm.empty() || !in || !end) {
            add_error(out.diagnostics, i, "incomplete icustays row");
            continue;
        }
        if (*in >= *end) {
            add_error(out.diagnostics, i, "icu intime is not before outtime");
            continue;
        }
        out.records.emplace_back(hadm, IcuInterval{*in, *end});
        ++out.parsed_rows;
    }
    return out;
}

LoadResult<OmrRecord> load_omr(const std::string& path, const VariableRegistry& registry) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_date = t.column("chartdate");
    std::size_t c_var = t.column("variable");
    std::size_t c_value = t.column("value");
    std::size_t c_unit = t.column("unit");

    LoadResult<OmrRecord> out;
    out.input_rows = t.row_count();
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        OmrRecord r;
        r.subject_id = trim(t.cell(i, c_subject));
        r.variable_id = trim(t.cell(i, c_var));
        if (r.subject_id.empty() || r.variable_id.empty()) {
            add_error(out.diagnostics, i, "missing subject_id or variable");
            continue;
        }
        if (!registry.has(r.variable_id) ||
            registry.kind_of(r.variable_id) != VariableKind::Biometric) {
            add_warning(out.diagnostics, i, "ignoring unknown biometric: " + r.variable_id);
            continue;
        }
        auto when = parse_time_cell(t.cell(i, c_date));
        if (!when) {
            add_error(out.diagnostics, i, "unparseable chartdate");
            continue;
        }
        r.chartdate = *when;
        auto value = try_parse_double(trim(t.cell(i, c_value)));
        if (!value) {
            add_error(out.diagnostics, i, "non-numeric value for " + r.variable_id);
            continue;
        }
        r.value = *value;
        r.unit = trim(t.cell(i, c_unit));
        out.records.push_back(std::move(r));
        ++out.parsed_rows;
    }
    return out;
}

LoadResult<EcgManifestRow> load_ecg_manifest(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_record = t.column("record_id");
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_time = t.column("ecg_time");
    std::size_t c_rate = t.column("sampling_rate");
    std::size_t c_data = t.column("data_path");
    std::size_t c_meta = t.column("meta_path");

    LoadResult<EcgManifestRow> out;
    out.input_rows = t.row_count();
    std::set<std::string> seen;
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        EcgManifestRow r;
        r.record_id = trim(t.cell(i, c_record));
        r.subject_id = trim(t.cell(i, c_subject));
        r.data_path = trim(t.cell(i, c_data));
        r.meta_path = trim(t.cell(i, c_meta));
        if (r.record_id.empty() || r.subject_id.empty() || r.data_path.empty() ||
            r.meta_path.empty()) {
            add_error(out.diagnostics, i, "incomplete manifest row");
            continue;
        }
        if (!seen.insert(r.record_id).second) {
            add_error(out.diagnostics, i, "duplicate record_id: " + r.record_id);
            continue;
        }
        auto when = parse_time_cell(t.cell(i, c_time));
        if (!when) {
            add_error(out.diagnostics, i, "unparseable ecg_time");
            continue;
        }
        r.ecg_time = *when;
        auto rate = try_parse_double(trim(t.cell(i, c_rate)));
        if (!rate || *rate <= 0.0) {
            add_error(out.diagnostics, i, "sampling_rate must be positive");
            continue;
        }
        r.sampling_rate = *rate;
        out.records.push_back(std::move(r));
        ++out.parsed_rows;
    }
    return out;
}

const std::vector<std::string>& table_file_names() {
    static const std::vector<std::string> names = {
        "edstays.csv",        "triage.csv",     "vitalsign.csv", "labevents.csv",
        "pyxis.csv",          "procedures.csv", "diagnoses_ed.csv", "diagnoses_hosp.csv",
        "admissions.csv",     "icustays.csv",   "omr.csv",       "ecg_manifest.csv",
    };
    return names;
}

SourceTables load_source_tables(const std::string& dir, const VariableRegistry& registry) {
    for (const auto& name : table_file_names()) {
        if (!fs::exists(fs::path(dir) / name)) {
            throw DataError("missing table file: " + (fs::path(dir) / name).string());
        }
    }
    auto at = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

    SourceTables out;
    auto absorb = [&out](auto& result) {
        out.total_input_rows += result.input_rows;
        out.total_parsed_rows += result.parsed_rows;
        for (auto& d : result.diagnostics) out.all_diagnostics.push_back(std::move(d));
    };

    auto stays = load_edstays(at("edstays.csv"));
    out.stays = std::move(stays.records);
    absorb(stays);

    auto triage = load_triage(at("triage.csv"));
    {
        std::map<std::string, int> acuity_by_stay;
        for (const auto& [stay, acuity] : triage.records) acuity_by_stay[stay] = acuity;
        for (auto& s : out.stays) {
            auto it = acuity_by_stay.find(s.stay_id);
            if (it != acuity_by_stay.end()) s.acuity = it->second;
        }
    }
    absorb(triage);

    auto vitals = load_vitalsign(at("vitalsign.csv"));
    out.vitals = std::move(vitals.records);
    absorb(vitals);

    auto labs = load_labevents(at("labevents.csv"), registry);
    out.labs = std::move(labs.records);
    absorb(labs);

    auto meds = load_pyxis(at("pyxis.csv"));
    out.meds = std::move(meds.records);
    absorb(meds);

    auto procedures = load_procedures(at("procedures.csv"));
    out.procedures = std::move(procedures.records);
    absorb(procedures);

    auto dx_ed = load_diagnoses_ed(at("diagnoses_ed.csv"));
    out.diagnoses_ed = std::move(dx_ed.records);
    absorb(dx_ed);

    auto dx_hosp = load_diagnoses_hosp(at("diagnoses_hosp.csv"));
    out.diagnoses_hosp = std::move(dx_hosp.records);
    absorb(dx_hosp);

    auto admissions = load_admissions(at("admissions.csv"));
    out.outcomes = std::move(admissions.records);
    absorb(admissions);

    auto icu = load_icustays(at("icustays.csv"));
    {
        std::map<std::string, std::vector<IcuInterval>> by_hadm;
        for (const auto& [hadm, interval] : icu.records) by_hadm[hadm].push_back(interval);
        for (auto& o : out.outcomes) {
            auto it = by_hadm.find(o.hadm_id);
            if (it == by_hadm.end()) continue;
            o.icu_intervals = it->second;
            std::sort(o.icu_intervals.begin(), o.icu_intervals.end(),
                      [](const IcuInterval& a, const IcuInterval& b) { return a.intime < b.intime; });
        }
    }
    absorb(icu);

    auto omr = load_omr(at("omr.csv"), registry);
    out.omr = std::move(omr.records);
    absorb(omr);

    auto manifest = load_ecg_manifest(at("ecg_manifest.csv"));
    out.ecg_manifest = std::move(manifest.records);
    absorb(manifest);

    return out;
}

// ---------------------------------------------------------------------------
// Waveform store
// ---------------------------------------------------------------------------

WaveformStore WaveformStore::open(const std::string& dir) {
    auto manifest_path = (fs::path(dir) / "ecg_manifest.csv").string();
    if (!fs::exists(manifest_path)) {
        throw DataError("missing ecg manifest: " + manifest_path);
    }
    auto loaded = load_ecg_manifest(manifest_path);
    for (const auto& d : loaded.diagnostics) {
        if (d.is_error) {
            throw DataError("ecg manifest row " + std::to_string(d.row) + ": " + d.message);
        }
    }
    return WaveformStore(dir, std::move(loaded.records));
}

WaveformStore::WaveformStore(std::string dir, std::vector<EcgManifestRow> manifest)
    : dir_(std::move(dir)), manifest_(std::move(manifest)) {
    for (std::size_t i = 0; i < manifest_.size(); ++i) {
        if (!by_id_.emplace(manifest_[i].record_id, i).second) {
            throw DataError("duplicate record_id in manifest: " + manifest_[i].record_id);
        }
    }
}

bool WaveformStore::contains(const std::string& record_id) const {
    return by_id_.count(record_id) > 0;
}

namespace {

WaveformSidecar read_sidecar(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sidecar: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("invalid sidecar json " + path + ": " + e.what());
    }
    WaveformSidecar s;
    try {
        s.record_id = j.at("record_id").get<std::string>();
        s.n_leads = j.at("n_leads").get<int>();
        s.n_samples = j.at("n_samples").get<std::size_t>();
        s.sampling_rate = j.at("sampling_rate").get<double>();
        s.gain = j.at("gain").get<double>();
        s.baseline = j.at("baseline").get<double>();
        const auto& mf = j.at("machine_features");
        for (auto it = mf.begin(); it != mf.end(); ++it) {
            if (it.value().is_null()) continue;
            s.machine_features[it.key()] = it.value().get<double>();
        }
    } catch (const json::exception& e) {
        throw FormatError("sidecar " + path + " missing field: " + e.what());
    }
    return s;
}

}  // namespace

std::map<std::string, double> WaveformStore::load_machine_features(
    const std::string& record_id) const {
    auto it = by_id_.find(record_id);
    if (it == by_id_.end()) {
        throw DataError("record_id not in manifest: " + record_id);
    }
    const EcgManifestRow& row = manifest_[it->second];
    WaveformSidecar sidecar = read_sidecar((fs::path(dir_) / row.meta_path).string());
    if (sidecar.record_id != record_id) {
        throw FormatError("sidecar record_id mismatch for " + record_id);
    }
    return sidecar.machine_features;
}

WaveformRecord WaveformStore::load(const std::string& record_id) const {
    auto it = by_id_.find(record_id);
    if (it == by_id_.end()) {
        throw DataError("record_id not in manifest: " + record_id);
    }
    const EcgManifestRow& row = manifest_[it->second];
    auto data_path = (fs::path(dir_) / row.data_path).string();
    auto meta_path = (fs::path(dir_) / row.meta_path).string();

    WaveformSidecar sidecar = read_sidecar(meta_path);
    if (sidecar.record_id != record_id) {
        throw FormatError("sidecar record_id mismatch for " + record_id);
    }
    if (sidecar.n_leads != kEcgLeads) {
        throw FormatError("waveform " + record_id + " has " + std::to_string(sidecar.n_leads) +
                          " leads, expected " + std::to_string(kEcgLeads));
    }
    if (sidecar.sampling_rate != row.sampling_rate) {
        throw FormatError("sampling_rate mismatch between manifest and sidecar for " + record_id);
    }
    auto expected_samples =
        static_cast<std::size_t>(std::llround(sidecar.sampling_rate * kEcgSeconds));
    if (sidecar.n_samples != expected_samples) {
        throw FormatError("waveform " + record_id + " length " + std::to_string(sidecar.n_samples) +
                          " does not match " + fmt_double(sidecar.sampling_rate) + " Hz x " +
                          fmt_double(kEcgSeconds) + " s");
    }
    if (sidecar.gain <= 0.0) {
        throw FormatError("waveform " + record_id + " has non-positive gain");
    }
    for (const auto& [key, _] : sidecar.machine_features) {
        const auto& names = ecg_machine_feature_names();
        if (std::find(names.begin(), names.end(), key) == names.end()) {
            throw FormatError("waveform " + record_id + " has unknown machine feature: " + key);
        }
    }

    std::ifstream in(data_path, std::ios::binary);
    if (!in) throw DataError("cannot open waveform data: " + data_path);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    std::size_t expected_bytes = 2u * kEcgLeads * sidecar.n_samples;
    if (raw.size() != expected_bytes) {
        throw FormatError("waveform data " + data_path + " is " + std::to_string(raw.size()) +
                          " bytes, expected " + std::to_string(expected_bytes));
    }

    WaveformRecord rec;
    rec.record_id = record_id;
    rec.subject_id = row.subject_id;
    rec.ecg_time = row.ecg_time;
    rec.sampling_rate = sidecar.sampling_rate;
    rec.machine_features = sidecar.machine_features;
    rec.samples.assign(kEcgLeads, std::vector<double>(sidecar.n_samples));
    std::size_t pos = 0;
    for (int lead = 0; lead < kEcgLeads; ++lead) {
        for (std::size_t i = 0; i < sidecar.n_samples; ++i) {
            // little-endian int16
            auto lo = static_cast<std::uint16_t>(raw[pos]);
            auto hi = static_cast<std::uint16_t>(raw[pos + 1]);
            pos += 2;
            auto value = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
            rec.samples[lead][i] = (static_cast<double>(value) - sidecar.baseline) / sidecar.gain;
        }
    }
    return rec;
}

EcgManifestRow WaveformStore::write_record(const std::string& dir, const WaveformSidecar& sidecar,
                                           const std::string& subject_id, Timestamp ecg_time,
                                           const std::vector<std::vector<std::int16_t>>& quantized) {
    if (quantized.size() != static_cast<std::size_t>(kEcgLeads)) {
        throw FormatError("write_record requires " + std::to_string(kEcgLeads) + " leads");
    }
    for (const auto& lead : quantized) {
        if (lead.size() != sidecar.n_samples) {
            throw FormatError("lead length does not match sidecar n_samples");
        }
    }
    fs::create_directories(fs::path(dir) / "waveforms");
    std::string data_rel = "waveforms/" + sidecar.record_id + ".dat";
    std::string meta_rel = "waveforms/" + sidecar.record_id + ".json";

    {
        std::ofstream outf((fs::path(dir) / data_rel), std::ios::binary);
        if (!outf) throw DataError("cannot write waveform data for " + sidecar.record_id);
        std::vector<unsigned char> buf;
        buf.reserve(2u * kEcgLeads * sidecar.n_samples);
        for (const auto& lead : quantized) {
            for (std::int16_t v : lead) {
                auto u = static_cast<std::uint16_t>(v);
                buf.push_back(static_cast<unsigned char>(u & 0xFF));
                buf.push_back(static_cast<unsigned char>((u >> 8) & 0xFF));
            }
        }
        outf.write(reinterpret_cast<const char*>(buf.data()),
                   static_cast<std::streamsize>(buf.size()));
    }
    {
        json j;
        j["record_id"] = sidecar.record_id;
        j["n_leads"] = sidecar.n_leads;
        j["n_samples"] = sidecar.n_samples;
        j["sampling_rate"] = sidecar.sampling_rate;
        j["gain"] = sidecar.gain;
        j["baseline"] = sidecar.baseline;
        json mf = json::object();
        for (const auto& [key, value] : sidecar.machine_features) mf[key] = value;
        j["machine_features"] = mf;
        std::ofstream outf(fs::path(dir) / meta_rel, std::ios::binary);
        if (!outf) throw DataError("cannot write sidecar for " + sidecar.record_id);
        outf << j.dump(2) << "\n";
    }

    EcgManifestRow row;
    row.record_id = sidecar.record_id;
    row.subject_id = subject_id;
    row.ecg_time = ecg_time;
    row.sampling_rate = sidecar.sampling_rate;
    row.data_path = data_rel;
    row.meta_path = meta_rel;
    return row;
}

std::vector<std::vector<std::int16_t>> quantize_leads(const std::vector<std::vector<double>>& leads,
                                                      double gain, double baseline) {
    std::vector<std::vector<std::int16_t>> out(leads.size());
    for (std::size_t lead = 0; lead < leads.size(); ++lead) {
        out[lead].resize(leads[lead].size());
        for (std::size_t i = 0; i < leads[lead].size(); ++i) {
            double scaled = leads[lead][i] * gain + baseline;
            double clamped = std::clamp(scaled, -32768.0, 32767.0);
            out[lead][i] = static_cast<std::int16_t>(std::llround(clamped));
        }
    }
    return out;
}

}  // namespace edbench::ingest
