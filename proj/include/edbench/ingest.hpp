#pragma once

#include <map>
#include <string>
#include <vector>

#include "edbench/csv.hpp"
#include "edbench/records.hpp"
#include "edbench/registry.hpp"

namespace edbench::ingest {

/// Loader output. Rows are never silently dropped:
/// parsed_rows + diagnostics.size() == input_rows. For melted tables
/// (vitalsign) one parsed row can emit several records.
template <typename T>
struct LoadResult {
    std::vector<T> records;
    std::vector<RowDiagnostic> diagnostics;
    std::size_t input_rows = 0;
    std::size_t parsed_rows = 0;
};

// One loader per documented table kind. Loaders validate schema (throws
// SchemaError naming the first missing column) and record invariants
// (row-level diagnostics, never exceptions).

LoadResult<StayRecord> load_edstays(const std::string& path);

/// Triage acuity per stay_id; values outside 1..5 are row errors.
LoadResult<std::pair<std::string, int>> load_triage(const std::string& path);

/// Wide vitals table melted into EventRecords. Temperature values carry
/// unit "F" (source convention); the other vitals are already canonical.
LoadResult<EventRecord> load_vitalsign(const std::string& path);

/// Long-format lab table. Unknown lab variables are ignored with a warning
/// diagnostic; extracts routinely contain extra assays.
LoadResult<EventRecord> load_labevents(const std::string& path, const VariableRegistry& registry);

LoadResult<MedEvent> load_pyxis(const std::string& path);
LoadResult<CodedEventRecord> load_procedures(const std::string& path);
LoadResult<CodedEventRecord> load_diagnoses_ed(const std::string& path);
LoadResult<CodedEventRecord> load_diagnoses_hosp(const std::string& path);
LoadResult<OutcomeRecord> load_admissions(const std::string& path);

/// (hadm_id, interval) pairs; merged into OutcomeRecords by attach_icustays.
LoadResult<std::pair<std::string, IcuInterval>> load_icustays(const std::string& path);

LoadResult<OmrRecord> load_omr(const std::string& path, const VariableRegistry& registry);
LoadResult<EcgManifestRow> load_ecg_manifest(const std::string& path);

/// Immutable bundle of everything the downstream stages consume.
struct SourceTables {
    std::vector<StayRecord> stays;  // acuity merged in from triage
    std::vector<EventRecord> vitals;
    std::vector<EventRecord> labs;
    std::vector<MedEvent> meds;
    std::vector<CodedEventRecord> procedures;
    std::vector<CodedEventRecord> diagnoses_ed;
    std::vector<CodedEventRecord> diagnoses_hosp;
    std::vector<OutcomeRecord> outcomes;
    std::vector<OmrRecord> omr;
    std::vector<EcgManifestRow> ecg_manifest;
    std::vector<RowDiagnostic> all_diagnostics;
    std::size_t total_input_rows = 0;
    std::size_t total_parsed_rows = 0;
};

/// Table file names expected inside a dataset directory.
const std::vector<std::string>& table_file_names();

/// Loads the twelve tables from `dir` and links triage acuity and ICU
/// intervals into their parents. Throws DataError when a file is missing.
SourceTables load_source_tables(const std::string& dir, const VariableRegistry& registry);

// ---------------------------------------------------------------------------
// Waveform store: per record one binary file of little-endian int16 samples
// (lead-major) plus a JSON sidecar with sampling_rate, gain, baseline, and
// the machine features. physical = (raw - baseline) / gain.
// ---------------------------------------------------------------------------

struct WaveformSidecar {
    std::string record_id;
    int n_leads = kEcgLeads;
    std::size_t n_samples = 0;
    double sampling_rate = 0.0;
    double gain = 1000.0;  // integer units per physical unit
    double baseline = 0.0;
    std::map<std::string, double> machine_features;
};

class WaveformStore {
  public:
    /// Opens a store rooted at `dir` (reads dir/ecg_manifest.csv).
    static WaveformStore open(const std::string& dir);

    /// Store over an already-loaded manifest (paths relative to `dir`).
    WaveformStore(std::string dir, std::vector<EcgManifestRow> manifest);

    const std::vector<EcgManifestRow>& manifest() const { return manifest_; }
    bool contains(const std::string& record_id) const;

    WaveformRecord load(const std::string& record_id) const;

    /// Machine features only (reads the sidecar, not the sample data).
    std::map<std::string, double> load_machine_features(const std::string& record_id) const;

    /// Writes data + sidecar under the store root and returns the manifest
    /// row. `quantized` must already hold integer values in gain units.
    static EcgManifestRow write_record(const std::string& dir, const WaveformSidecar& sidecar,
                                       const std::string& subject_id, Timestamp ecg_time,
                                       const std::vector<std::vector<std::int16_t>>& quantized);

  private:
    std::string dir_;
    std::vector<EcgManifestRow> manifest_;
    std::map<std::string, std::size_t> by_id_;
};

/// Quantizes physical lead values into gain units, saturating at the int16
/// range. write_record-compatible.
std::vector<std::vector<std::int16_t>> quantize_leads(const std::vector<std::vector<double>>& leads,
                                                      double gain, double baseline);

}  // namespace edbench::ingest
