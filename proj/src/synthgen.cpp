#include "edbench/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "edbench/csv.hpp"
#include "edbench/ingest.hpp"
#include "edbench/records.hpp"

namespace fs = std::filesystem;

namespace edbench::synthgen {

using nlohmann::json;

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;

double round_to(double v, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(v * scale) / scale;
}

std::string num(double v, int decimals) { return fmt_double(round_to(v, decimals)); }
}  // namespace

SynthConfig SynthConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read synth config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw UsageError("malformed synth config " + path + ": " + e.what());
    }
    SynthConfig c;
    c.n_patients = j.value("n_patients", c.n_patients);
    c.seed = j.value("seed", c.seed);
    c.sampling_rate = j.value("sampling_rate", c.sampling_rate);
    c.second_visit_prob = j.value("second_visit_prob", c.second_visit_prob);
    c.second_ecg_prob = j.value("second_ecg_prob", c.second_ecg_prob);
    if (j.contains("planted")) {
        const auto& p = j.at("planted");
        c.planted.wave_amplitude = p.value("wave_amplitude", c.planted.wave_amplitude);
        c.planted.wave_freq_hz = p.value("wave_freq_hz", c.planted.wave_freq_hz);
        c.planted.tab_slope = p.value("tab_slope", c.planted.tab_slope);
        c.planted.p_cue = p.value("p_cue", c.planted.p_cue);
    }
    c.missingness = j.value("missingness", c.missingness);
    if (j.contains("informative")) {
        const auto& m = j.at("informative");
        c.informative.variable = m.value("variable", c.informative.variable);
        c.informative.p_measured_pos = m.value("p_measured_pos", c.informative.p_measured_pos);
        c.informative.p_measured_neg = m.value("p_measured_neg", c.informative.p_measured_neg);
        c.informative.value = m.value("value", c.informative.value);
    }
    c.validate();
    return c;
}

void SynthConfig::validate() const {
    if (n_patients <= 0) throw UsageError("n_patients must be positive");
    if (sampling_rate <= 0) throw UsageError("sampling_rate must be positive");
    if (planted.wave_amplitude < 0 || planted.tab_slope < 0)
        throw UsageError("planted effect sizes must be >= 0");
    if (planted.p_cue < 0 || planted.p_cue > 1) throw UsageError("p_cue must be in [0,1]");
    if (missingness != "random" && missingness != "informative")
        throw UsageError("missingness must be random or informative");
    if (second_visit_prob < 0 || second_visit_prob > 1 || second_ecg_prob < 0 ||
        second_ecg_prob > 1)
        throw UsageError("visit/ecg probabilities must be in [0,1]");
}

std::vector<std::vector<double>> generate_waveform(const WaveformParams& params,
                                                   std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t length =
        static_cast<std::size_t>(std::llround(params.sampling_rate * kEcgSeconds));
    std::vector<std::vector<double>> leads(kEcgLeads);
    const double dt = 1.0 / params.sampling_rate;
    for (int lead = 0; lead < kEcgLeads; ++lead) {
        const double gain = 0.6 + 0.8 * rng.uniform01();
        const double phase1 = 2.0 * kPi * rng.uniform01();
        const double phase2 = 2.0 * kPi * rng.uniform01();
        const double phase3 = 2.0 * kPi * rng.uniform01();
        const double planted_phase = 2.0 * kPi * rng.uniform01();
        auto& x = leads[static_cast<std::size_t>(lead)];
        x.resize(length);
        for (std::size_t t = 0; t < length; ++t) {
            const double time = static_cast<double>(t) * dt;
            const double w = 2.0 * kPi * params.base_freq_hz * time;
            double v = gain * (std::sin(w + phase1) + 0.5 * std::sin(2.0 * w + phase2) +
                               0.25 * std::sin(3.0 * w + phase3));
            if (params.planted_amplitude > 0.0)
                v += params.planted_amplitude *
                     std::sin(2.0 * kPi * params.planted_freq_hz * time + planted_phase);
            if (params.noise_level > 0.0) v += rng.normal(0.0, params.noise_level);
            x[t] = v;
        }
    }
    return leads;
}

namespace {

struct LabBase {
    const char* id;
    double base;
    double spread;
    int decimals;
};

// Plausible resting points; values stay far inside the registry's outlier
// bounds so no generated measurement is filtered.
constexpr LabBase kLabBases[] = {
    {"sodium", 139.0, 3.0, 1},        {"potassium", 4.1, 0.4, 2},
    {"chloride", 103.0, 4.0, 1},      {"bicarbonate", 24.0, 3.0, 1},
    {"urea_nitrogen", 18.0, 8.0, 1},  {"creatinine", 1.0, 0.3, 2},
    {"glucose", 115.0, 30.0, 1},      {"hematocrit", 40.0, 4.5, 1},
    {"hemoglobin", 13.5, 1.7, 1},     {"white_blood_cells", 8.0, 2.5, 1},
    {"platelet_count", 250.0, 60.0, 0}, {"troponin_t", 0.02, 0.012, 3},
    {"magnesium", 2.0, 0.25, 2},      {"calcium_total", 9.3, 0.5, 1},
    {"albumin", 4.0, 0.5, 1},         {"alanine_aminotransferase", 28.0, 12.0, 0},
};

const std::vector<std::string>& races() {
    static const std::vector<std::string> r = {"WHITE", "BLACK/AFRICAN AMERICAN",
                                               "HISPANIC/LATINO", "ASIAN", "OTHER"};
    return r;
}

std::string pad_id(const char* prefix, int value, int width) {
    std::string digits = std::to_string(value);
    if (static_cast<int>(digits.size()) < width)
        digits.insert(0, static_cast<std::size_t>(width - static_cast<int>(digits.size())), '0');
    return std::string(prefix) + digits;
}

}  // namespace

void generate_fixture(const SynthConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(fs::path(out_dir) / "waveforms");
    Rng rng(cfg.seed);
    const Timestamp base_time = parse_timestamp("2023-01-01 00:00:00");
    const bool informative = cfg.missingness == "informative";

    CsvWriter edstays({"subject_id", "stay_id", "hadm_id", "intime", "outtime", "gender", "race",
                       "age"});
    CsvWriter triage({"stay_id", "acuity"});
    CsvWriter vitalsign({"subject_id", "stay_id", "charttime", "temperature", "heartrate",
                         "resprate", "o2sat", "sbp", "dbp"});
    CsvWriter labevents({"subject_id", "hadm_id", "charttime", "variable", "value", "unit"});
    CsvWriter pyxis({"subject_id", "stay_id", "charttime", "name"});
    CsvWriter procedures({"subject_id", "hadm_id", "icd_code", "icd_version", "chartdate"});
    CsvWriter dx_ed({"subject_id", "stay_id", "icd_code", "icd_version", "event_date"});
    CsvWriter dx_hosp({"subject_id", "hadm_id", "icd_code", "icd_version", "event_date"});
    CsvWriter admissions({"subject_id", "hadm_id", "admittime", "dischtime", "dod"});
    CsvWriter icustays({"hadm_id", "intime", "outtime"});
    CsvWriter omr({"subject_id", "chartdate", "variable", "value", "unit"});
    CsvWriter manifest({"record_id", "subject_id", "ecg_time", "sampling_rate", "data_path",
                        "meta_path"});

    const std::vector<std::string> pool10 = {"I10",  "E119", "N179", "J189", "A419",
                                             "K219", "R079", "J449", "N390", "R55"};
    // ICD-9 background codes; 4019 has no mapping on purpose (exercises the
    // drop-and-log path downstream).
    const std::vector<std::string> pool9 = {"25040", "5849", "99592", "4019"};
    const std::vector<std::pair<std::string, int>> vent_codes = {
        {"9670", 9}, {"5A1935Z", 10}, {"5A1945Z", 10}, {"9671", 9}};
    const std::vector<std::pair<std::string, int>> ecmo_codes = {
        {"3965", 9}, {"5A1522G", 10}, {"5A15A2F", 10}};
    const std::vector<std::pair<std::string, int>> ihca_codes = {
        {"I469", 10}, {"4275", 9}, {"I462", 10}, {"V1253", 9}};
    const std::vector<std::string> vaso_drugs = {"norepinephrine", "epinephrine", "vasopressin",
                                                 "dobutamine", "dopamine", "phenylephrine"};
    const std::vector<std::string> background_meds = {"acetaminophen", "ibuprofen", "ondansetron",
                                                      "morphine", "ketorolac"};

    int vent_counter = 0, ecmo_counter = 0, ihca_counter = 0, vaso_counter = 0;

    for (int pi = 0; pi < cfg.n_patients; ++pi) {
        const std::string subject = pad_id("P", pi + 1, 6);
        const bool minor = rng.uniform01() < 0.02;
        const int age = minor ? 10 + static_cast<int>(rng.below(8))
                              : 18 + static_cast<int>(rng.below(78));
        const std::string gender = rng.bernoulli(0.5) ? "F" : "M";
        const std::string race = races()[static_cast<std::size_t>(rng.below(races().size()))];
        const bool cue_w = rng.bernoulli(cfg.planted.p_cue);
        const bool cue_t = rng.bernoulli(cfg.planted.p_cue);
        const bool cue_m = rng.bernoulli(0.5);
        const bool dies = rng.bernoulli(0.07);
        const int n_visits = (!dies && rng.bernoulli(cfg.second_visit_prob)) ? 2 : 1;

        for (int vi = 0; vi < n_visits; ++vi) {
            const std::string stay = pad_id("S", (pi + 1) * 10 + vi, 7);
            const Timestamp arrival = base_time + static_cast<Timestamp>(pi) * 7200 +
                                      static_cast<Timestamp>(vi) * 37 * kSecondsPerDay +
                                      static_cast<Timestamp>(rng.below(86400));
            const Timestamp window_end = arrival + 90 * kSecondsPerMinute;
            const Timestamp ed_out =
                arrival + 4 * kSecondsPerHour + static_cast<Timestamp>(rng.below(8 * 3600));
            const bool admitted = rng.bernoulli(0.65);
            const std::string hadm = admitted ? pad_id("H", (pi + 1) * 10 + vi, 7) : "";

            edstays.add_row({subject, stay, hadm, format_timestamp(arrival),
                             format_timestamp(ed_out), gender, race, std::to_string(age)});
            const bool acuity_known = rng.uniform01() >= 0.02;
            const int acuity = 1 + static_cast<int>(rng.below(5));
            triage.add_row({stay, acuity_known ? std::to_string(acuity) : ""});

            // --- ECG records -------------------------------------------------
            const int n_ecgs = rng.bernoulli(cfg.second_ecg_prob) ? 2 : 1;
            for (int ei = 0; ei < n_ecgs; ++ei) {
                const bool late = rng.uniform01() < 0.03;
                const Timestamp ecg_time =
                    late ? window_end + 60 + static_cast<Timestamp>(rng.below(3600))
                         : arrival + static_cast<Timestamp>(rng.below(5401));
                const std::string record = pad_id("R", ((pi + 1) * 10 + vi) * 10 + ei, 8);

                WaveformParams wp;
                wp.base_freq_hz = 0.9 + 0.6 * rng.uniform01();
                wp.planted_amplitude = cue_w ? cfg.planted.wave_amplitude : 0.0;
                wp.planted_freq_hz = cfg.planted.wave_freq_hz;
                wp.noise_level = 0.2;
                wp.sampling_rate = cfg.sampling_rate;
                const std::uint64_t wave_seed = rng.next();
                const auto leads = generate_waveform(wp, wave_seed);

                ingest::WaveformSidecar sidecar;
                sidecar.record_id = record;
                sidecar.n_leads = kEcgLeads;
                sidecar.n_samples = leads[0].size();
                sidecar.sampling_rate = cfg.sampling_rate;
                sidecar.gain = 1000.0;
                sidecar.baseline = 0.0;
                sidecar.machine_features["rr_interval"] =
                    round_to(1000.0 / wp.base_freq_hz + rng.normal(0.0, 20.0), 1);
                sidecar.machine_features["p_onset"] = round_to(rng.normal(42.0, 8.0), 1);
                const double qrs_on = rng.normal(60.0, 6.0);
                sidecar.machine_features["qrs_onset"] = round_to(qrs_on, 1);
                sidecar.machine_features["qrs_end"] = round_to(qrs_on + rng.normal(35.0, 5.0), 1);
                sidecar.machine_features["t_end"] = round_to(rng.normal(180.0, 15.0), 1);
                const double p_axis = rng.uniform(-90.0, 90.0);
                const double qrs_axis = rng.uniform(-90.0, 90.0);
                const double t_axis = rng.uniform(-90.0, 90.0);
                sidecar.machine_features["qrs_axis"] = round_to(qrs_axis, 1);
                if (rng.uniform01() >= 0.05) {
                    sidecar.machine_features["p_axis"] = round_to(p_axis, 1);
                    sidecar.machine_features["t_axis"] = round_to(t_axis, 1);
                }

                const auto quantized = ingest::quantize_leads(leads, sidecar.gain,
                                                              sidecar.baseline);
                const EcgManifestRow row = ingest::WaveformStore::write_record(
                    out_dir, sidecar, subject, ecg_time, quantized);
                manifest.add_row({row.record_id, row.subject_id, format_timestamp(row.ecg_time),
                                  fmt_double(row.sampling_rate), row.data_path, row.meta_path});
            }

            // --- Vitals ------------------------------------------------------
            const double temp0 = 97.2 + rng.normal(0.0, 0.8);
            const double hr0 = 62.0 + 45.0 * rng.uniform01();
            const double rr0 = 12.0 + 10.0 * rng.uniform01();
            const double spo0 = 94.0 + 5.0 * rng.uniform01();
            const double sbp0 = 102.0 + 55.0 * rng.uniform01();
            const double dbp0 = 58.0 + 35.0 * rng.uniform01();
            const int n_vit = 3 + static_cast<int>(rng.below(4));
            std::vector<Timestamp> vit_minutes;
            for (int k = 0; k < n_vit; ++k)
                vit_minutes.push_back(static_cast<Timestamp>(rng.below(89)));
            std::sort(vit_minutes.begin(), vit_minutes.end());
            for (Timestamp minute : vit_minutes) {
                const Timestamp when = arrival + minute * 60 + static_cast<Timestamp>(
                                                                   rng.below(60));
                const bool temp_known = rng.uniform01() >= 0.15;
                vitalsign.add_row(
                    {subject, stay, format_timestamp(when),
                     temp_known ? num(temp0 + rng.normal(0.0, 0.3), 1) : "",
                     num(hr0 + rng.normal(0.0, 4.0), 0), num(rr0 + rng.normal(0.0, 1.5), 0),
                     num(std::min(100.0, spo0 + rng.normal(0.0, 1.0)), 0),
                     num(sbp0 + rng.normal(0.0, 6.0), 0), num(dbp0 + rng.normal(0.0, 4.0), 0)});
            }
            // Hypoxemia plants: a reading inside the window masks the label, a
            // reading after it (within 24 h) makes it positive.
            const double hypox_draw = rng.uniform01();
            if (hypox_draw < 0.05) {
                const Timestamp when = arrival + (5 + static_cast<Timestamp>(rng.below(84))) * 60;
                vitalsign.add_row({subject, stay, format_timestamp(when), "", "", "",
                                   num(80.0 + static_cast<double>(rng.below(6)), 0), "", ""});
            } else if (hypox_draw < 0.11) {
                const Timestamp when = window_end + (1 + static_cast<Timestamp>(
                                                           rng.below(20 * 60))) * 60;
                vitalsign.add_row({subject, stay, format_timestamp(when), "", "", "",
                                   num(80.0 + static_cast<double>(rng.below(6)), 0), "", ""});
            }

            // --- Labs --------------------------------------------------------
            const std::size_t n_lab_kinds = 6 + rng.below(8);
            constexpr std::size_t n_bases = sizeof(kLabBases) / sizeof(kLabBases[0]);
            std::vector<std::size_t> picks(n_bases);
            for (std::size_t k = 0; k < n_bases; ++k) picks[k] = k;
            rng.shuffle(picks);
            picks.resize(std::min(n_lab_kinds, n_bases));
            std::sort(picks.begin(), picks.end());
            for (std::size_t k : picks) {
                const LabBase& lb = kLabBases[k];
                const double center = lb.base + rng.normal(0.0, lb.spread);
                const int n_meas = 1 + static_cast<int>(rng.below(2));
                for (int m = 0; m < n_meas; ++m) {
                    const Timestamp when =
                        arrival + static_cast<Timestamp>(rng.below(89)) * 60 +
                        static_cast<Timestamp>(rng.below(60));
                    const double v = std::max(0.01, center + rng.normal(0.0, lb.spread * 0.2));
                    labevents.add_row({subject, hadm, format_timestamp(when), lb.id,
                                       num(v, lb.decimals), ""});
                }
            }
            // Lactate carries the planted tabular trend: three measurements
            // whose slope is the cue.
            {
                const double base0 = 1.0 + 0.8 * rng.uniform01();
                const double slope = cue_t ? cfg.planted.tab_slope : 0.0;
                const bool boundary = rng.uniform01() < 0.02;
                const Timestamp minutes[3] = {
                    10 + static_cast<Timestamp>(rng.below(10)),
                    40 + static_cast<Timestamp>(rng.below(10)),
                    boundary ? 90 : 70 + static_cast<Timestamp>(rng.below(10))};
                for (Timestamp minute : minutes) {
                    const double v = std::max(
                        0.1, base0 + slope * static_cast<double>(minute) +
                                 rng.normal(0.0, 0.05));
                    labevents.add_row({subject, hadm,
                                       format_timestamp(arrival + minute * 60), "lactate",
                                       num(v, 3), "mmol/L"});
                }
            }
            // Informative-missingness probe: measurement probability depends
            // on the cue, the measured value is a constant.
            {
                const double p_measured = informative
                                              ? (cue_m ? cfg.informative.p_measured_pos
                                                       : cfg.informative.p_measured_neg)
                                              : 0.5;
                if (rng.bernoulli(p_measured)) {
                    labevents.add_row({subject, hadm,
                                       format_timestamp(arrival + 30 * kSecondsPerMinute),
                                       cfg.informative.variable,
                                       fmt_double(cfg.informative.value), ""});
                }
            }

            // --- Medications ---------------------------------------------------
            const int n_meds = 1 + static_cast<int>(rng.below(3));
            for (int m = 0; m < n_meds; ++m) {
                const std::string& name = background_meds[static_cast<std::size_t>(
                    rng.below(background_meds.size()))];
                const Timestamp when = arrival + (5 + static_cast<Timestamp>(
                                                          rng.below(85))) * 60;
                pyxis.add_row({subject, stay, format_timestamp(when), name});
            }
            const double vaso_draw = rng.uniform01();
            if (vaso_draw < 0.09) {
                const std::string& drug =
                    vaso_drugs[static_cast<std::size_t>(vaso_counter++) % vaso_drugs.size()];
                if (vaso_draw < 0.04) {
                    // First dose inside the window: label masked.
                    const Timestamp when = arrival + (20 + static_cast<Timestamp>(
                                                              rng.below(70))) * 60;
                    pyxis.add_row({subject, stay, format_timestamp(when), drug});
                    if (rng.bernoulli(0.5))
                        pyxis.add_row({subject, stay,
                                       format_timestamp(when + 4 * kSecondsPerHour), drug});
                } else {
                    // First dose after the window, inside 24 h: positive.
                    const Timestamp when = window_end + (1 + static_cast<Timestamp>(rng.below(
                                                                 21 * 60))) * 60;
                    pyxis.add_row({subject, stay, format_timestamp(when), drug});
                }
            }

            // --- Admission-scoped outcomes ------------------------------------
            if (admitted) {
                const Timestamp admit =
                    arrival + 2 * kSecondsPerHour + static_cast<Timestamp>(rng.below(6 * 3600));
                const Timestamp disch = admit + kSecondsPerDay +
                                        static_cast<Timestamp>(rng.below(9 * 86400));
                std::string dod_cell;
                if (dies && vi == n_visits - 1) {
                    const double u = rng.uniform01();
                    Timestamp delta;
                    if (u < 0.08)
                        delta = static_cast<Timestamp>(rng.below(90 * 60));  // inside the window
                    else if (u < 0.25)
                        delta = 2 * 3600 + static_cast<Timestamp>(rng.below(22 * 3600));
                    else if (u < 0.45)
                        delta = kSecondsPerDay + static_cast<Timestamp>(rng.below(6 * 86400));
                    else if (u < 0.65)
                        delta = 8 * kSecondsPerDay + static_cast<Timestamp>(rng.below(20 * 86400));
                    else if (u < 0.80)
                        delta = 29 * kSecondsPerDay +
                                static_cast<Timestamp>(rng.below(61 * 86400));
                    else if (u < 0.92)
                        delta = 91 * kSecondsPerDay +
                                static_cast<Timestamp>(rng.below(274 * 86400));
                    else
                        delta = 366 * kSecondsPerDay +
                                static_cast<Timestamp>(rng.below(400 * 86400));
                    dod_cell = format_timestamp(arrival + delta);
                }
                admissions.add_row({subject, hadm, format_timestamp(admit),
                                    format_timestamp(disch), dod_cell});

                const double icu_draw = rng.uniform01();
                if (icu_draw < 0.17) {
                    Timestamp icu_in;
                    if (icu_draw < 0.03)
                        icu_in = arrival + 30 * 60 + static_cast<Timestamp>(rng.below(60 * 60));
                    else if (icu_draw < 0.14)
                        icu_in = window_end + 60 + static_cast<Timestamp>(rng.below(22 * 3600));
                    else
                        icu_in = arrival + 30 * kSecondsPerHour +
                                 static_cast<Timestamp>(rng.below(40 * 3600));
                    const Timestamp icu_out =
                        icu_in + kSecondsPerDay + static_cast<Timestamp>(rng.below(2 * 86400));
                    icustays.add_row({hadm, format_timestamp(icu_in),
                                      format_timestamp(icu_out)});
                }

                const double vent_draw = rng.uniform01();
                if (vent_draw < 0.055) {
                    const auto& [code, ver] =
                        vent_codes[static_cast<std::size_t>(vent_counter++) % vent_codes.size()];
                    const Timestamp day_offset =
                        vent_draw < 0.04 ? static_cast<Timestamp>(rng.below(2))  // same/next day
                                         : 3;                                   // too late
                    procedures.add_row({subject, hadm, code, std::to_string(ver),
                                        format_date(arrival + day_offset * kSecondsPerDay)});
                }
                const double ecmo_draw = rng.uniform01();
                if (ecmo_draw < 0.012) {
                    const auto& [code, ver] =
                        ecmo_codes[static_cast<std::size_t>(ecmo_counter++) % ecmo_codes.size()];
                    procedures.add_row({subject, hadm, code, std::to_string(ver),
                                        format_date(arrival + static_cast<Timestamp>(
                                                                  rng.below(2)) * kSecondsPerDay)});
                }
                const double ihca_draw = rng.uniform01();
                if (ihca_draw < 0.045) {
                    const auto& [code, ver] =
                        ihca_codes[static_cast<std::size_t>(ihca_counter++) % ihca_codes.size()];
                    const Timestamp day_offset =
                        ihca_draw < 0.03 ? static_cast<Timestamp>(rng.below(2)) : 4;
                    dx_hosp.add_row({subject, hadm, code, std::to_string(ver),
                                     format_date(arrival + day_offset * kSecondsPerDay)});
                }

                // Background hospital diagnoses, dated at discharge.
                const int n_dx = 1 + static_cast<int>(rng.below(3));
                for (int d = 0; d < n_dx; ++d) {
                    if (rng.bernoulli(0.8)) {
                        const std::string& code =
                            pool10[static_cast<std::size_t>(rng.below(pool10.size()))];
                        dx_hosp.add_row({subject, hadm, code, "10", format_date(disch)});
                    } else {
                        const std::string& code =
                            pool9[static_cast<std::size_t>(rng.below(pool9.size()))];
                        dx_hosp.add_row({subject, hadm, code, "9", format_date(disch)});
                    }
                }
            }

            // --- ED diagnoses (planted labels + background) -------------------
            if (cue_w) dx_ed.add_row({subject, stay, kWaveLabelCode, "10", ""});
            if (cue_t) dx_ed.add_row({subject, stay, kTabLabelCode, "10", ""});
            if (cue_w && cue_t) dx_ed.add_row({subject, stay, kBothLabelCode, "10", ""});
            if (informative && cue_m) dx_ed.add_row({subject, stay, kMissLabelCode, "10", ""});
            const int n_ed_dx = 1 + static_cast<int>(rng.below(3));
            for (int d = 0; d < n_ed_dx; ++d) {
                if (rng.bernoulli(0.85)) {
                    const std::string& code =
                        pool10[static_cast<std::size_t>(rng.below(pool10.size()))];
                    dx_ed.add_row({subject, stay, code, "10",
                                   rng.bernoulli(0.3) ? format_date(ed_out) : ""});
                } else {
                    const std::string& code =
                        pool9[static_cast<std::size_t>(rng.below(pool9.size()))];
                    dx_ed.add_row({subject, stay, code, "9", ""});
                }
            }
        }

        // --- OMR biometrics (patient-level) -----------------------------------
        if (rng.uniform01() < 0.9) {
            const double height_cm = 150.0 + 45.0 * rng.uniform01();
            const double weight_kg = 50.0 + 70.0 * rng.uniform01();
            const double bmi = weight_kg / ((height_cm / 100.0) * (height_cm / 100.0));
            const int n_sets = 1 + static_cast<int>(rng.below(2));
            for (int s = 0; s < n_sets; ++s) {
                const Timestamp day_deltas[4] = {2, 10, 25, 40};
                const Timestamp dd = day_deltas[rng.below(4)];
                const Timestamp when = base_time + static_cast<Timestamp>(pi) * 7200 +
                                       (rng.bernoulli(0.5) ? -dd : dd) * kSecondsPerDay;
                if (rng.bernoulli(0.05)) {
                    omr.add_row({subject, format_date(when), "height",
                                 num(height_cm / 2.54, 1), "in"});
                } else {
                    omr.add_row({subject, format_date(when), "height", num(height_cm, 1), ""});
                }
                if (rng.bernoulli(0.10)) {
                    omr.add_row({subject, format_date(when), "weight",
                                 num(weight_kg / 0.45359237, 1), "lb"});
                } else {
                    omr.add_row({subject, format_date(when), "weight", num(weight_kg, 1), ""});
                }
                if (rng.bernoulli(0.8))
                    omr.add_row({subject, format_date(when), "bmi", num(bmi, 1), ""});
            }
        }
    }

    edstays.write_file((fs::path(out_dir) / "edstays.csv").string());
    triage.write_file((fs::path(out_dir) / "triage.csv").string());
    vitalsign.write_file((fs::path(out_dir) / "vitalsign.csv").string());
    labevents.write_file((fs::path(out_dir) / "labevents.csv").string());
    pyxis.write_file((fs::path(out_dir) / "pyxis.csv").string());
    procedures.write_file((fs::path(out_dir) / "procedures.csv").string());
    dx_ed.write_file((fs::path(out_dir) / "diagnoses_ed.csv").string());
    dx_hosp.write_file((fs::path(out_dir) / "diagnoses_hosp.csv").string());
    admissions.write_file((fs::path(out_dir) / "admissions.csv").string());
    icustays.write_file((fs::path(out_dir) / "icustays.csv").string());
    omr.write_file((fs::path(out_dir) / "omr.csv").string());
    manifest.write_file((fs::path(out_dir) / "ecg_manifest.csv").string());
}

}  // namespace edbench::synthgen
