#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edbench/ingest.hpp"
#include "edbench/registry.hpp"
#include "edbench/synthgen.hpp"
#include "helpers.hpp"

using namespace edbench;
using namespace edbench::ingest;

namespace {

VariableRegistry test_registry() {
    return VariableRegistry::load(testutil::repo_data("variable_registry.json"));
}

}  // namespace

// ---------------------------------------------------------------------------
// Table loaders
// ---------------------------------------------------------------------------

TEST_CASE("edstays loader keeps the row ledger balanced") {
    testutil::TempDir tmp;
    testutil::write_text(tmp.file("edstays.csv"),
                         "subject_id,stay_id,hadm_id,intime,outtime,gender,race,age\n"
                         "p1,s1,h1,2023-01-01 10:00:00,2023-01-01 16:00:00,F,WHITE,44\n"
                         "p2,s2,,2023-01-02 08:00:00,2023-01-02 09:30:00,M,ASIAN,70\n"
                         ",s3,,2023-01-02 08:00:00,2023-01-02 09:00:00,M,OTHER,30\n"
                         "p4,s4,,bogus,2023-01-02 09:00:00,F,OTHER,51\n"
                         "p5,s5,,2023-01-03 12:00:00,2023-01-03 11:00:00,F,OTHER,62\n"
                         "p6,s6,,2023-01-03 12:00:00,2023-01-03 13:00:00,F,OTHER,-1\n");
    auto r = load_edstays(tmp.file("edstays.csv"));
    CHECK(r.input_rows == 6);
    CHECK(r.parsed_rows == 2);
    CHECK(r.records.size() == 2);
    REQUIRE(r.diagnostics.size() == 4);
    CHECK(r.parsed_rows + r.diagnostics.size() == r.input_rows);
    CHECK(r.records[0].subject_id == "p1");
    CHECK(r.records[0].hadm_id == "h1");
    CHECK(r.records[1].hadm_id == "");
    CHECK(r.records[1].age == 70);

    // Missing column is a schema error naming the column.
    testutil::write_text(tmp.file("broken.csv"), "subject_id,stay_id\np1,s1\n");
    CHECK_THROWS_WITH_AS(load_edstays(tmp.file("broken.csv")), doctest::Contains("hadm_id"),
                         SchemaError);
}

TEST_CASE("triage loader bounds acuity to 1..5") {
    testutil::TempDir tmp;
    testutil::write_text(tmp.file("triage.csv"),
                         "stay_id,acuity\n"
                         "s1,3\n"
                         "s2,\n"
                         "s3,0\n"
                         "s4,6\n"
                         "s5,2\n");
    auto r = load_triage(tmp.file("triage.csv"));
    CHECK(r.input_rows == 5);
    CHECK(r.parsed_rows == 3);  // blank acuity is a parsed row without an entry
    CHECK(r.records.size() == 2);
    CHECK(r.diagnostics.size() == 2);
    CHECK(r.records[0] == std::pair<std::string, int>{"s1", 3});
}

TEST_CASE("vitalsign loader melts wide rows into events with source units") {
    testutil::TempDir tmp;
    testutil::write_text(tmp.file("vitalsign.csv"),
                         "subject_id,stay_id,charttime,temperature,heartrate,resprate,o2sat,sbp,dbp\n"
                         "p1,s1,2023-01-01 10:05:00,98.6,80,,97,120,70\n"
                         "p1,s1,2023-01-01 10:35:00,,abc,,,,\n");
    auto r = load_vitalsign(tmp.file("vitalsign.csv"));
    CHECK(r.input_rows == 2);
    CHECK(r.parsed_rows == 1);
    CHECK(r.diagnostics.size() == 1);
    REQUIRE(r.records.size() == 5);  // five non-empty cells melt to five events
    std::map<std::string, double> by_var;
    std::map<std::string, std::string> unit_by_var;
    for (const auto& e : r.records) {
        by_var[e.variable_id] = e.value;
        unit_by_var[e.variable_id] = e.unit;
    }
    CHECK(by_var.at("temperature") == doctest::Approx(98.6));
    CHECK(unit_by_var.at("temperature") == "F");  // source convention
    CHECK(unit_by_var.at("heartrate") == "bpm");
    CHECK(by_var.count("resprate") == 0);
}

TEST_CASE("labevents loader warns on unknown assays instead of failing") {
    testutil::TempDir tmp;
    auto reg = test_registry();
    testutil::write_text(tmp.file("labevents.csv"),
                         "subject_id,hadm_id,charttime,variable,value,unit\n"
                         "p1,h1,2023-01-01 10:20:00,lactate,2.1,mmol/L\n"
                         "p1,h1,2023-01-01 10:20:00,quetzalase,9.9,IU/L\n"
                         "p1,h1,2023-01-01 10:25:00,glucose,110,mg/dL\n");
    auto r = load_labevents(tmp.file("labevents.csv"), reg);
    CHECK(r.input_rows == 3);
    CHECK(r.records.size() == 2);
    REQUIRE(r.diagnostics.size() == 1);
    CHECK(!r.diagnostics[0].is_error);  // ignored with a warning
    CHECK(r.diagnostics[0].message.find("quetzalase") != std::string::npos);
}

// ---------------------------------------------------------------------------
// Waveform store
// ---------------------------------------------------------------------------

TEST_CASE("waveform store round-trips physical values through quantization") {
    testutil::TempDir tmp;

    std::vector<std::vector<double>> leads(kEcgLeads);
    Rng rng(21);
    for (auto& lead : leads) {
        lead.resize(200);
        for (auto& v : lead) v = rng.uniform(-2.0, 2.0);
    }

    WaveformSidecar sc;
    sc.record_id = "rec001";
    sc.n_samples = 200;
    sc.sampling_rate = 100.0;
    sc.gain = 1000.0;
    sc.baseline = 0.0;
    sc.machine_features = {{"rr_interval", 820.0}, {"qrs_axis", 35.5}};

    auto quantized = quantize_leads(leads, sc.gain, sc.baseline);
    auto row = WaveformStore::write_record(tmp.path(), sc, "p1",
                                           parse_timestamp("2023-01-01 10:10:00"), quantized);
    CHECK(row.record_id == "rec001");

    WaveformStore store(tmp.path(), {row});
    REQUIRE(store.contains("rec001"));
    auto rec = store.load("rec001");
    CHECK(rec.sampling_rate == doctest::Approx(100.0));
    REQUIRE(rec.samples.size() == static_cast<std::size_t>(kEcgLeads));
    REQUIRE(rec.length() == 200);
    for (int lead = 0; lead < kEcgLeads; ++lead) {
        for (std::size_t t = 0; t < 200; ++t) {
            // Worst-case quantization error is half a gain unit.
            CHECK(std::abs(rec.samples[lead][t] - leads[lead][t]) <= 0.5 / sc.gain + 1e-12);
        }
    }
    auto feats = store.load_machine_features("rec001");
    CHECK(feats.at("rr_interval") == doctest::Approx(820.0));
    CHECK(feats.at("qrs_axis") == doctest::Approx(35.5));

    CHECK(!store.contains("missing"));
    CHECK_THROWS_AS(store.load("missing"), DataError);
}

TEST_CASE("quantization saturates at the int16 range") {
    std::vector<std::vector<double>> leads{{40.0, -40.0, 0.001}};
    auto q = quantize_leads(leads, 1000.0, 0.0);
    REQUIRE(q.size() == 1);
    CHECK(q[0][0] == 32767);
    CHECK(q[0][1] == -32768);
    CHECK(q[0][2] == 1);
}

TEST_CASE("sidecar record_id mismatch is rejected") {
    testutil::TempDir tmp;
    std::vector<std::vector<double>> leads(kEcgLeads, std::vector<double>(10, 0.1));
    WaveformSidecar sc;
    sc.record_id = "recA";
    sc.n_samples = 10;
    sc.sampling_rate = 100.0;
    auto row = WaveformStore::write_record(tmp.path(), sc, "p1", 0,
                                           quantize_leads(leads, sc.gain, sc.baseline));

    // Point a manifest row with a different id at the same sidecar files.
    EcgManifestRow forged = row;
    forged.record_id = "recB";
    WaveformStore store(tmp.path(), {forged});
    CHECK_THROWS_WITH_AS(store.load("recB"), doctest::Contains("mismatch"), FormatError);
    CHECK_THROWS_AS(store.load_machine_features("recB"), FormatError);
}

// ---------------------------------------------------------------------------
// Fixture ingestion
// ---------------------------------------------------------------------------

TEST_CASE("generated fixtures pass ingestion with zero diagnostics") {
    testutil::TempDir tmp;
    synthgen::SynthConfig cfg;
    cfg.n_patients = 30;
    cfg.seed = 7;
    synthgen::generate_fixture(cfg, tmp.path());

    for (const auto& name : table_file_names()) {
        CHECK(std::filesystem::exists(std::filesystem::path(tmp.path()) / name));
    }

    auto reg = test_registry();
    auto tables = load_source_tables(tmp.path(), reg);
    CHECK(tables.all_diagnostics.empty());
    CHECK(tables.total_parsed_rows == tables.total_input_rows);
    CHECK(!tables.stays.empty());
    CHECK(!tables.vitals.empty());
    CHECK(!tables.labs.empty());
    CHECK(!tables.ecg_manifest.empty());

    // Triage acuity was merged into the stays.
    bool any_acuity = false;
    for (const auto& s : tables.stays) any_acuity |= s.acuity.has_value();
    CHECK(any_acuity);

    // ICU intervals were linked into outcomes.
    std::size_t icu_count = 0;
    for (const auto& o : tables.outcomes) icu_count += o.icu_intervals.size();
    CHECK(icu_count > 0);

    // Every manifest row is loadable from the store.
    WaveformStore store(tmp.path(), tables.ecg_manifest);
    auto rec = store.load(tables.ecg_manifest.front().record_id);
    CHECK(rec.length() == 1000);  // 10 s at 100 Hz

    // A missing table is reported by name.
    std::filesystem::remove(std::filesystem::path(tmp.path()) / "labevents.csv");
    CHECK_THROWS_WITH_AS(load_source_tables(tmp.path(), reg), doctest::Contains("labevents"),
                         DataError);
}
