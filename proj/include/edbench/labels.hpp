#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "edbench/cohort.hpp"
#include "edbench/records.hpp"

namespace edbench::labels {

/// Ternary label entry. Negative values denote the mask token so that
/// "active" checks reduce to v >= 0.
using Ternary = std::int8_t;
constexpr Ternary kNegative = 0;
constexpr Ternary kPositive = 1;
constexpr Ternary kMasked = -1;

// ---------------------------------------------------------------------------
// ICD handling
// ---------------------------------------------------------------------------

/// Uppercases and strips dots. Does not truncate.
std::string normalize_code(const std::string& code);

/// ICD-9 -> ICD-10 general equivalence rows (one-to-many allowed).
using Gem = std::map<std::string, std::vector<std::string>>;
Gem load_gem(const std::string& path);

/// Version-10 codes pass through; version-9 codes map via the table;
/// unmappable ICD-9 codes are dropped (optionally logged into `log`).
std::vector<std::string> normalize_icd(const std::string& code, int version, const Gem& map9to10,
                                       std::vector<std::string>* log = nullptr);

/// Truncates to <=5 chars and adds every prefix down to length 3.
/// "I2109" -> {I2109, I210, I21}. Codes shorter than 3 are invalid.
std::set<std::string> truncate_and_propagate(const std::string& code);

struct DiagnosisVocab {
    std::vector<std::string> codes;        // sorted lexicographically
    std::vector<std::int64_t> counts;      // aligned with codes; 0 if unknown
    std::map<std::string, std::size_t> index;

    std::size_t size() const { return codes.size(); }
    bool contains(const std::string& code) const { return index.count(code) > 0; }
    static DiagnosisVocab from_codes(std::vector<std::string> codes,
                                     std::vector<std::int64_t> counts);
};

/// Count-driven vocabulary: a code enters when it appears in >= min_count
/// of the per-sample propagated code sets.
DiagnosisVocab build_vocab(const std::vector<std::set<std::string>>& per_sample_codes,
                           std::int64_t min_count);

/// Verbatim vocabulary file (CSV with a `code` column, optional `count`).
DiagnosisVocab load_vocab_file(const std::string& path);
void write_vocab_file(const std::string& path, const DiagnosisVocab& vocab);

struct DiagnosisLabels {
    std::vector<Ternary> values;  // aligned with vocab order; never masked
    bool has_diagnoses = false;
};

/// Set-membership of the sample's propagated codes against the vocab.
DiagnosisLabels diagnosis_labels(const std::set<std::string>& propagated_codes,
                                 const DiagnosisVocab& vocab, bool has_diagnosis_records);

// ---------------------------------------------------------------------------
// Deterioration targets
// ---------------------------------------------------------------------------

enum class TargetKind { VitalThreshold, CodedEvent, Medication, Icu, Mortality };

struct DeteriorationTarget {
    std::string name;
    std::string category;  // deterioration | icu | mortality (report grouping)
    TargetKind kind = TargetKind::Mortality;
    std::optional<double> horizon_hours;
    bool in_hospital = false;  // mortality scoped to the admission
    bool overall = false;      // icu scoped to the whole admission
    std::vector<std::string> codes;   // coded_event, normalized form
    std::vector<std::string> drugs;   // medication, lowercase generic names
    std::string variable;             // vital_threshold
    double threshold = 0.0;           // vital_threshold (comparison is <=)
};

struct DeteriorationSpec {
    std::vector<DeteriorationTarget> targets;  // exactly 15, report order

    static DeteriorationSpec load(const std::string& path);
    const DeteriorationTarget& target(const std::string& name) const;
    std::vector<std::string> names() const;
};

// Per-kind label rules. Every op receives only the sample's own events.

/// Order: 24h, 7d, 28d, 90d, 180d, 365d, in-hospital.
/// dod before arrival is a data error; dod at or before window_end masks all
/// seven (death inside the feature window).
std::array<Ternary, 7> mortality_labels(const cohort::Sample& sample,
                                        const OutcomeRecord* outcome);

/// (icu_24h, icu_overall). Any ICU intime at or before window_end masks both.
std::array<Ternary, 2> icu_labels(const cohort::Sample& sample,
                                  const std::vector<IcuInterval>& intervals);

/// One value per drug list. Case-insensitive substring match on the drug
/// name; first administration <= window_end masks, administration in
/// (window_end, arrival+horizon] labels positive.
Ternary medication_label(const cohort::Sample& sample, const std::vector<MedEvent>& meds,
                         const std::vector<std::string>& drugs, double horizon_hours);

/// Positive iff a listed code is dated the same calendar day as arrival or
/// the next day. Date-granular: never masked.
Ternary coded_event_label(const cohort::Sample& sample,
                          const std::vector<CodedEventRecord>& events,
                          const std::vector<std::string>& codes);

/// SpO2 <= threshold in (window_end, arrival+horizon] -> positive; such a
/// reading at or before window_end -> masked.
Ternary vital_threshold_label(const cohort::Sample& sample,
                              const std::vector<EventRecord>& vitals,
                              const std::string& variable, double threshold,
                              double horizon_hours);

/// Inputs a target needs, already restricted to the sample's visit.
struct SampleEvents {
    const OutcomeRecord* outcome = nullptr;  // linked admission, if any
    std::vector<MedEvent> meds;
    std::vector<CodedEventRecord> coded_events;  // procedures + diagnoses
    std::vector<EventRecord> vitals;             // outlier-filtered
};

/// All 15 targets in spec order.
std::vector<Ternary> deterioration_labels(const cohort::Sample& sample,
                                          const SampleEvents& events,
                                          const DeteriorationSpec& spec);

// ---------------------------------------------------------------------------
// Label space + matrix
// ---------------------------------------------------------------------------

struct LabelSpace {
    std::vector<std::string> names;  // diagnosis codes then deterioration names
    std::size_t n_diagnosis = 0;

    std::size_t size() const { return names.size(); }
    bool is_deterioration(std::size_t i) const { return i >= n_diagnosis; }
    std::string content_hash() const;

    static LabelSpace build(const DiagnosisVocab& vocab, const DeteriorationSpec& spec);
    void save(const std::string& path) const;
    static LabelSpace load(const std::string& path);
};

struct LabelMatrix {
    std::vector<std::string> sample_ids;
    std::size_t n_labels = 0;
    std::vector<Ternary> values;  // row-major sample_ids.size() x n_labels

    Ternary at(std::size_t row, std::size_t col) const { return values[row * n_labels + col]; }
    Ternary& at(std::size_t row, std::size_t col) { return values[row * n_labels + col]; }
};

/// Sparse triplet persistence: only 1 and M entries are written, so the
/// reader needs the full sample list to restore all-negative rows.
void write_label_matrix(const std::string& path, const LabelMatrix& matrix,
                        const LabelSpace& space);
LabelMatrix read_label_matrix(const std::string& path, const LabelSpace& space,
                              const std::vector<std::string>& sample_ids);

}  // namespace edbench::labels
