#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edbench/core.hpp"

namespace edbench::synthgen {

/// Strength of the planted signals. Labels are always drawn from the cues;
/// a zero effect size leaves the label with no recoverable trace.
struct PlantedEffect {
    double wave_amplitude = 0.6;   // mV added to every lead when the wave cue fires
    double wave_freq_hz = 12.0;    // planted sinusoid frequency
    double tab_slope = 0.02;       // lactate slope per minute when the tab cue fires
    double p_cue = 0.7;            // P(cue fires) per patient, independently per cue
};

/// Label-dependent measurement probability for one lab; the measured value
/// itself is a constant, so only the missingness pattern carries signal.
struct InformativeMissingness {
    std::string variable = "c_reactive_protein";
    double p_measured_pos = 0.15;
    double p_measured_neg = 0.85;
    double value = 4.0;
};

struct SynthConfig {
    int n_patients = 500;
    std::uint64_t seed = 1;
    double sampling_rate = 100.0;   // Hz, source waveforms
    double second_visit_prob = 0.08;
    double second_ecg_prob = 0.10;
    PlantedEffect planted;
    std::string missingness = "random";  // random | informative
    InformativeMissingness informative;

    static SynthConfig load(const std::string& path);
    void validate() const;
};

/// Names the planted labels take in the fixture's diagnosis stream. Chosen
/// to look like ordinary codes so they flow through the vocabulary and the
/// label space unchanged.
inline constexpr const char* kWaveLabelCode = "Q871";   // wave cue
inline constexpr const char* kTabLabelCode = "Q872";    // tab cue
inline constexpr const char* kBothLabelCode = "Q873";   // wave AND tab
inline constexpr const char* kMissLabelCode = "Q874";   // informative-missingness cue

struct WaveformParams {
    double base_freq_hz = 1.2;
    double planted_amplitude = 0.0;
    double planted_freq_hz = 12.0;
    double noise_level = 0.25;
    double sampling_rate = 100.0;
};

/// 12 x L lead-major matrix, L = rate * 10 s: periodic base template plus
/// optional planted sinusoid plus white noise. Same seed, same matrix.
std::vector<std::vector<double>> generate_waveform(const WaveformParams& params,
                                                   std::uint64_t seed);

/// Writes the full fixture (12 tables + waveform store) under `out_dir`.
/// Deterministic per seed, byte for byte.
void generate_fixture(const SynthConfig& config, const std::string& out_dir);

}  // namespace edbench::synthgen
