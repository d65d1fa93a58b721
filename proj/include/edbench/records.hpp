#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edbench/core.hpp"

namespace edbench {

// Typed rows mirroring the documented source-table schemas. All ids are
// opaque strings; timestamps are integer seconds (see core.hpp).

struct StayRecord {
    std::string subject_id;
    std::string stay_id;
    std::string hadm_id;  // empty when the visit was not admitted
    Timestamp intime = 0;
    Timestamp outtime = 0;
    std::string gender;
    std::string race;
    int age = 0;                       // years at arrival
    std::optional<int> acuity;         // triage level 1-5
};

/// One irregular measurement (vital or lab).
struct EventRecord {
    std::string subject_id;
    std::string stay_id;   // vitals; empty for labs
    std::string hadm_id;   // labs, when linked; may be empty
    std::string variable_id;
    double value = kMissing;
    std::string unit;
    Timestamp charttime = 0;
};

/// Medication administration (pyxis-style, exact time known).
struct MedEvent {
    std::string subject_id;
    std::string stay_id;
    std::string name;  // normalized lowercase generic name
    Timestamp charttime = 0;
};

/// ICD-coded diagnosis or procedure.
struct CodedEventRecord {
    std::string subject_id;
    std::string stay_id;   // ED diagnoses
    std::string hadm_id;   // hospital diagnoses / procedures
    std::string icd_code;  // uppercase, dotless
    int icd_version = 10;  // 9 or 10
    std::optional<Timestamp> event_date;  // date-granular; diagnoses carry the
                                          // discharge-assigned date
};

struct IcuInterval {
    Timestamp intime = 0;
    Timestamp outtime = 0;
};

/// Hospital-admission outcome row (one per hadm).
struct OutcomeRecord {
    std::string subject_id;
    std::string hadm_id;
    Timestamp admittime = 0;
    Timestamp dischtime = 0;
    std::optional<Timestamp> dod;  // date of death, if known
    std::vector<IcuInterval> icu_intervals;
};

/// Online-medical-record biometric measurement (height/weight/bmi).
struct OmrRecord {
    std::string subject_id;
    std::string variable_id;  // "height" | "weight" | "bmi"
    double value = kMissing;
    std::string unit;
    Timestamp chartdate = 0;
};

inline constexpr int kEcgLeads = 12;
inline constexpr double kEcgSeconds = 10.0;

/// Names of the eight machine-measured waveform features, in feature order.
const std::vector<std::string>& ecg_machine_feature_names();

struct WaveformRecord {
    std::string record_id;
    std::string subject_id;
    Timestamp ecg_time = 0;
    double sampling_rate = 0.0;  // Hz
    // Lead-major physical values: samples[lead][t], 12 x L with
    // L = sampling_rate * 10 s.
    std::vector<std::vector<double>> samples;
    // Keys restricted to ecg_machine_feature_names().
    std::map<std::string, double> machine_features;

    std::size_t length() const { return samples.empty() ? 0 : samples[0].size(); }
};

/// Manifest row for the waveform store (record_id -> file locations).
struct EcgManifestRow {
    std::string record_id;
    std::string subject_id;
    Timestamp ecg_time = 0;
    double sampling_rate = 0.0;
    std::string data_path;  // relative to the store root
    std::string meta_path;
};

}  // namespace edbench
