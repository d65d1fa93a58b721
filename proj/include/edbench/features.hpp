#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edbench/cohort.hpp"
#include "edbench/records.hpp"
#include "edbench/registry.hpp"

namespace edbench::features {

/// Nine per-variable statistics over the feature window. Missing entries
/// are kMissing (NaN).
struct TrendAggregate {
    double mean = kMissing;
    double median = kMissing;
    double min = kMissing;
    double max = kMissing;
    double std = kMissing;  // population standard deviation
    double first = kMissing;
    double last = kMissing;
    double rate = kMissing;   // (last - first) / minutes elapsed
    double slope = kMissing;  // OLS slope of value on minutes

    /// Values in field order, for feature assembly.
    std::vector<double> as_vector() const;
};

/// Stat suffixes in as_vector order.
const std::vector<std::string>& trend_stat_names();

/// series: (minutes from arrival, value), sorted by time, values observed.
/// rate/slope need >= 2 points with distinct times.
TrendAggregate aggregate_trends(const std::vector<std::pair<double, double>>& series);

/// Converts one event to its variable's canonical unit. Unknown unit ->
/// value set missing plus a log line.
EventRecord convert_units(EventRecord event, const VariableRegistry& registry,
                          std::vector<std::string>* log = nullptr);

/// Sets values strictly beyond their outlier bound to missing. A rule is
/// applied only when the event's unit matches the unit the rule is stated
/// in (canonical unless the rule names a source unit).
std::vector<EventRecord> filter_outliers(std::vector<EventRecord> events,
                                         const VariableRegistry& registry);

/// Source-unit outlier rules, then unit conversion, then canonical-unit
/// outlier rules. The documented order: temperature bounds apply in
/// Fahrenheit before the Celsius conversion.
std::vector<EventRecord> canonicalize_events(std::vector<EventRecord> events,
                                             const VariableRegistry& registry,
                                             std::vector<std::string>* log = nullptr);

/// Same pipeline for the biometric table.
std::vector<OmrRecord> canonicalize_omr(std::vector<OmrRecord> records,
                                        const VariableRegistry& registry,
                                        std::vector<std::string>* log = nullptr);

struct Biometrics {
    double height = kMissing;
    double weight = kMissing;
    double bmi = kMissing;
};

/// Per biometric the record closest to arrival within 30 days; ties take
/// the earlier record. Inputs must be canonicalized and outlier-filtered.
Biometrics match_biometrics(Timestamp arrival, const std::vector<OmrRecord>& omr);

/// Machine features in ecg_machine_feature_names order; absent -> missing.
std::vector<double> extract_ecg_features(const std::map<std::string, double>& machine_features);

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

struct FeatureSchema {
    std::vector<std::string> numeric_names;      // age, biometrics, vital/lab stats
    std::vector<std::string> categorical_names;  // gender, race, acuity
    std::vector<std::vector<std::string>> categorical_vocabs;  // index 1.. ; 0 = unknown
    std::vector<std::string> ecg_names;          // 8 machine features
    std::string registry_hash;

    std::size_t numeric_size() const { return numeric_names.size(); }
    std::string content_hash() const;
    void save(const std::string& path) const;
    static FeatureSchema load(const std::string& path);

    /// Deterministic layout from the registry: age, 3 biometrics,
    /// 9 stats x vitals, 9 stats x labs. Vocabs start empty.
    static FeatureSchema from_registry(const VariableRegistry& registry);
};

struct FeatureVector {
    std::vector<double> numeric;   // NaN = missing
    std::vector<int> categorical;  // vocab indices, 0 = unknown
    std::vector<double> ecg;       // NaN = missing
};

struct FeatureMatrix {
    FeatureSchema schema;
    std::vector<std::string> sample_ids;
    std::vector<double> numeric;   // row-major
    std::vector<int> categorical;  // row-major
    std::vector<double> ecg;       // row-major

    std::size_t rows() const { return sample_ids.size(); }
    double* numeric_row(std::size_t r) { return numeric.data() + r * schema.numeric_names.size(); }
    const double* numeric_row(std::size_t r) const {
        return numeric.data() + r * schema.numeric_names.size();
    }
    const int* categorical_row(std::size_t r) const {
        return categorical.data() + r * schema.categorical_names.size();
    }
    const double* ecg_row(std::size_t r) const { return ecg.data() + r * schema.ecg_names.size(); }
};

/// Everything assemble_features needs for one sample, already windowed to
/// [arrival, window_end] and canonicalized.
struct SampleFeatureInputs {
    const StayRecord* stay = nullptr;
    std::vector<EventRecord> window_events;  // vitals + labs inside the window
    Biometrics biometrics;
    std::map<std::string, double> ecg_machine_features;
};

/// One sample against a schema whose vocabs are already built. Unknown
/// categorical values map to index 0.
FeatureVector assemble_features(const cohort::Sample& sample, const SampleFeatureInputs& inputs,
                                const VariableRegistry& registry, const FeatureSchema& schema);

/// Builds categorical vocabularies (sorted unique observed values) into the
/// schema from the stays backing the given samples.
void build_categorical_vocabs(FeatureSchema& schema, const std::vector<cohort::Sample>& samples,
                              const std::map<std::string, const StayRecord*>& stay_by_id);

void write_feature_matrix(const std::string& path, const FeatureMatrix& matrix);
FeatureMatrix read_feature_matrix(const std::string& path, const FeatureSchema& schema);

}  // namespace edbench::features
