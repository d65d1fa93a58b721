#pragma once

#include <map>
#include <string>
#include <vector>

#include "edbench/core.hpp"
#include "edbench/records.hpp"

namespace edbench::cohort {

/// Feature window length after ED arrival.
constexpr Timestamp kWindowSeconds = 90 * kSecondsPerMinute;
/// Minimum age at arrival.
constexpr double kMinAge = 18.0;

/// One (stay, ECG) pair with the ECG inside the feature window.
struct Sample {
    std::string sample_id;
    std::string subject_id;
    std::string stay_id;
    std::string hadm_id;  // empty when the visit had no admission
    std::string record_id;
    Timestamp arrival = 0;
    Timestamp window_end = 0;
    Timestamp ecg_time = 0;
    bool is_first_of_visit = false;
    int fold = -1;
};

struct LinkResult {
    std::vector<Sample> samples;
    std::vector<std::string> log;  // tie-breaks and exclusions worth reporting
};

/// Pairs stays with ECGs recorded in [arrival, arrival + 90 min]; excludes
/// patients under 18; marks the earliest ECG of each stay first-of-visit.
LinkResult link_ecg_to_stays(const std::vector<StayRecord>& stays,
                             const std::vector<EcgManifestRow>& ecgs);

struct CohortStats {
    std::size_t patients = 0;
    std::size_t visits = 0;
    std::size_t samples = 0;
    std::map<std::string, std::size_t> by_gender;
    std::map<std::string, std::size_t> by_race;
    std::map<std::string, std::size_t> by_age_bin;  // the four quantile bins
    std::string text() const;
};

/// Demographic summary of the linked cohort. Ages are taken per unique stay.
CohortStats cohort_stats(const std::vector<Sample>& samples,
                         const std::vector<StayRecord>& stays);

/// Age quantile bin name for stratification and reporting: 18-49, 50-64,
/// 65-77, 78+.
std::string age_bin(double age);

void write_sample_index(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_sample_index(const std::string& path);

}  // namespace edbench::cohort
