#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "edbench/ingest.hpp"
#include "edbench/synthgen.hpp"
#include "edbench/train.hpp"
#include "helpers.hpp"

using namespace edbench;
using namespace edbench::synthgen;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> hash_tree(const std::string& root) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::string rel = fs::relative(entry.path(), root).generic_string();
        out[rel] = sha256_file(entry.path().string());
    }
    return out;
}

/// Magnitude of the DFT of one lead at an exact frequency bin.
double dft_magnitude(const std::vector<double>& x, double freq_hz, double rate) {
    const double n = static_cast<double>(x.size());
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < x.size(); ++t) {
        double angle = -2.0 * kPi * freq_hz * static_cast<double>(t) / rate;
        acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    return std::abs(acc) / n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Waveform generator
// ---------------------------------------------------------------------------

TEST_CASE("generated waveforms have twelve leads of rate x ten seconds") {
    WaveformParams p;
    p.sampling_rate = 100.0;
    auto leads = generate_waveform(p, 5);
    REQUIRE(leads.size() == 12);
    for (const auto& lead : leads) CHECK(lead.size() == 1000);

    p.sampling_rate = 50.0;
    auto half = generate_waveform(p, 5);
    CHECK(half[0].size() == 500);
}

TEST_CASE("waveform generation is seed-deterministic") {
    WaveformParams p;
    auto a = generate_waveform(p, 77);
    auto b = generate_waveform(p, 77);
    CHECK(a == b);  // bitwise
    auto c = generate_waveform(p, 78);
    CHECK(a != c);
}

TEST_CASE("the noise-free base template is periodic") {
    WaveformParams p;
    p.noise_level = 0.0;
    p.planted_amplitude = 0.0;
    p.sampling_rate = 100.0;
    auto leads = generate_waveform(p, 3);
    // 1.2 Hz at 100 Hz: three full cycles span exactly 250 samples.
    for (const auto& lead : leads) {
        for (std::size_t t = 0; t + 250 < lead.size(); ++t) {
            CHECK(lead[t] == doctest::Approx(lead[t + 250]).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("the planted sinusoid is visible at its frequency bin") {
    WaveformParams with;
    with.planted_amplitude = 0.6;
    with.planted_freq_hz = 12.0;
    WaveformParams without = with;
    without.planted_amplitude = 0.0;

    auto planted = generate_waveform(with, 21);
    auto clean = generate_waveform(without, 21);  // same seed: identical noise

    double planted_mag = 0.0;
    double clean_mag = 0.0;
    for (int lead = 0; lead < 12; ++lead) {
        planted_mag += dft_magnitude(planted[static_cast<std::size_t>(lead)], 12.0, 100.0);
        clean_mag += dft_magnitude(clean[static_cast<std::size_t>(lead)], 12.0, 100.0);
    }
    CHECK(planted_mag > 10.0 * clean_mag);
    // The base harmonics live far below the planted band.
    double base_mag = dft_magnitude(planted[0], 1.2, 100.0);
    CHECK(base_mag > dft_magnitude(planted[0], 47.0, 100.0));
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

TEST_CASE("resampling at the native rate is the identity") {
    WaveformRecord rec;
    rec.record_id = "r1";
    rec.sampling_rate = 100.0;
    rec.samples.assign(2, std::vector<double>(1000));
    Rng rng(9);
    for (auto& lead : rec.samples) {
        for (auto& v : lead) v = rng.normal();
    }
    auto out = train::resample_waveform(rec, 100.0);
    CHECK(out == rec.samples);
}

TEST_CASE("integer decimation halves the length and preserves slow content") {
    WaveformRecord rec;
    rec.record_id = "r1";
    rec.sampling_rate = 100.0;
    rec.samples.assign(1, std::vector<double>(1000));
    for (std::size_t t = 0; t < 1000; ++t) {
        rec.samples[0][t] = std::sin(2.0 * kPi * 1.0 * static_cast<double>(t) / 100.0);
    }
    auto out = train::resample_waveform(rec, 50.0);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].size() == 500);
    for (std::size_t t = 30; t < 470; ++t) {  // skip the zero-padded edges
        double expected = std::sin(2.0 * kPi * 1.0 * static_cast<double>(2 * t) / 100.0);
        CHECK(out[0][t] == doctest::Approx(expected).epsilon(0.02).scale(1.0));
    }
}

TEST_CASE("non-integer and upsampling ratios are rejected") {
    WaveformRecord rec;
    rec.record_id = "r1";
    rec.sampling_rate = 100.0;
    rec.samples.assign(1, std::vector<double>(1000, 0.0));
    CHECK_THROWS_AS(train::resample_waveform(rec, 40.0), DataError);    // ratio 2.5
    CHECK_THROWS_AS(train::resample_waveform(rec, 150.0), DataError);   // upsample
    CHECK_THROWS_AS(train::resample_waveform(rec, 0.0), UsageError);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST_CASE("synth configs load from json and validate") {
    testutil::TempDir tmp;
    testutil::write_text(tmp.file("synth.json"), R"({
        "n_patients": 40,
        "seed": 9,
        "missingness": "informative",
        "planted": {"wave_amplitude": 0.5, "p_cue": 0.6},
        "informative": {"p_measured_pos": 0.2}
    })");
    auto cfg = SynthConfig::load(tmp.file("synth.json"));
    CHECK(cfg.n_patients == 40);
    CHECK(cfg.seed == 9);
    CHECK(cfg.missingness == "informative");
    CHECK(cfg.planted.wave_amplitude == 0.5);
    CHECK(cfg.planted.p_cue == 0.6);
    CHECK(cfg.planted.tab_slope == PlantedEffect{}.tab_slope);  // default kept
    CHECK(cfg.informative.p_measured_pos == 0.2);

    testutil::write_text(tmp.file("bad.json"), R"({"n_patients": 0})");
    CHECK_THROWS_AS(SynthConfig::load(tmp.file("bad.json")), UsageError);
    testutil::write_text(tmp.file("bad2.json"), R"({"missingness": "sometimes"})");
    CHECK_THROWS_AS(SynthConfig::load(tmp.file("bad2.json")), UsageError);
    testutil::write_text(tmp.file("bad3.json"), "not json");
    CHECK_THROWS_AS(SynthConfig::load(tmp.file("bad3.json")), UsageError);
    CHECK_THROWS_AS(SynthConfig::load(tmp.file("missing.json")), UsageError);

    SynthConfig invalid;
    invalid.planted.p_cue = 1.5;
    CHECK_THROWS_AS(invalid.validate(), UsageError);
}

// ---------------------------------------------------------------------------
// Full fixture
// ---------------------------------------------------------------------------

TEST_CASE("fixtures are byte-identical across output directories") {
    SynthConfig cfg;
    cfg.n_patients = 60;
    cfg.seed = 31;
    testutil::TempDir a;
    testutil::TempDir b;
    generate_fixture(cfg, a.path());
    generate_fixture(cfg, b.path());
    auto ha = hash_tree(a.path());
    auto hb = hash_tree(b.path());
    CHECK(ha.size() > 12);  // tables + waveform store
    CHECK(ha == hb);

    // A different seed changes the content.
    cfg.seed = 32;
    testutil::TempDir c;
    generate_fixture(cfg, c.path());
    CHECK(hash_tree(c.path()) != ha);
}

TEST_CASE("fixtures contain every source table and parse cleanly") {
    SynthConfig cfg;
    cfg.n_patients = 50;
    cfg.seed = 8;
    testutil::TempDir tmp;
    generate_fixture(cfg, tmp.path());

    for (const auto& name : ingest::table_file_names()) {
        CHECK(fs::exists(fs::path(tmp.path()) / (name + ".csv")));
    }
    auto registry = VariableRegistry::load(testutil::repo_data("variable_registry.json"));
    auto tables = ingest::load_source_tables(tmp.path(), registry);
    CHECK(tables.all_diagnostics.empty());
    CHECK(tables.stays.size() >= 50);
    CHECK(!tables.ecg_manifest.empty());

    // Every manifest row loads from the waveform store.
    auto store = ingest::WaveformStore::open(tmp.path());
    auto rec = store.load(tables.ecg_manifest.front().record_id);
    CHECK(rec.samples.size() == 12);
    CHECK(rec.length() == 1000);
}

TEST_CASE("the combined planted label fires exactly when both cues fire") {
    SynthConfig cfg;
    cfg.n_patients = 250;
    cfg.seed = 77;
    testutil::TempDir tmp;
    generate_fixture(cfg, tmp.path());
    auto dx = ingest::load_diagnoses_ed(tmp.file("diagnoses_ed.csv"));

    std::map<std::string, std::set<std::string>> codes_by_stay;
    for (const auto& row : dx.records) codes_by_stay[row.stay_id].insert(row.icd_code);
    std::size_t n_both = 0;
    for (const auto& [stay, codes] : codes_by_stay) {
        const bool wave = codes.count(kWaveLabelCode) > 0;
        const bool tab = codes.count(kTabLabelCode) > 0;
        const bool both = codes.count(kBothLabelCode) > 0;
        CHECK(both == (wave && tab));
        if (both) ++n_both;
    }
    // p_cue = 0.7 twice: about half the stays carry the conjunction.
    CHECK(n_both > codes_by_stay.size() / 4);
    CHECK(n_both < codes_by_stay.size() * 3 / 4);
}

TEST_CASE("informative missingness gates the lab's measurement rate on its cue") {
    SynthConfig cfg;
    cfg.n_patients = 400;
    cfg.seed = 13;
    cfg.missingness = "informative";
    testutil::TempDir tmp;
    generate_fixture(cfg, tmp.path());

    auto dx = ingest::load_diagnoses_ed(tmp.file("diagnoses_ed.csv"));
    std::set<std::string> cue_subjects;
    for (const auto& row : dx.records) {
        if (row.icd_code == kMissLabelCode) cue_subjects.insert(row.subject_id);
    }
    CHECK(cue_subjects.size() > 100);  // bernoulli(0.5) of 400

    auto registry = VariableRegistry::load(testutil::repo_data("variable_registry.json"));
    auto labs = ingest::load_labevents(tmp.file("labevents.csv"), registry);
    std::set<std::string> measured_subjects;
    for (const auto& e : labs.records) {
        if (e.variable_id != cfg.informative.variable) continue;
        CHECK(e.value == cfg.informative.value);  // constant: only presence carries signal
        measured_subjects.insert(e.subject_id);
    }

    auto stays = ingest::load_edstays(tmp.file("edstays.csv"));
    std::set<std::string> all_subjects;
    for (const auto& s : stays.records) all_subjects.insert(s.subject_id);

    double measured_cue = 0.0, n_cue = 0.0, measured_clear = 0.0, n_clear = 0.0;
    for (const auto& subject : all_subjects) {
        const bool cue = cue_subjects.count(subject) > 0;
        const bool measured = measured_subjects.count(subject) > 0;
        (cue ? n_cue : n_clear) += 1.0;
        if (measured) (cue ? measured_cue : measured_clear) += 1.0;
    }
    const double rate_cue = measured_cue / n_cue;
    const double rate_clear = measured_clear / n_clear;
    CHECK(rate_clear - rate_cue > 0.5);  // 0.85 vs 0.15 by construction
}

TEST_CASE("random missingness leaves the lab's measurement rate flat") {
    SynthConfig cfg;
    cfg.n_patients = 300;
    cfg.seed = 14;
    testutil::TempDir tmp;
    generate_fixture(cfg, tmp.path());
    auto dx = ingest::load_diagnoses_ed(tmp.file("diagnoses_ed.csv"));
    for (const auto& row : dx.records) {
        CHECK(row.icd_code != kMissLabelCode);  // cue code only exists in informative mode
    }
}
