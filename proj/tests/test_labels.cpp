#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "edbench/labels.hpp"
#include "helpers.hpp"

using namespace edbench;
using namespace edbench::labels;

namespace {

cohort::Sample make_sample(Timestamp arrival = parse_timestamp("2023-05-01 10:00:00")) {
    cohort::Sample s;
    s.sample_id = "s1_r1";
    s.subject_id = "p1";
    s.stay_id = "s1";
    s.hadm_id = "h1";
    s.arrival = arrival;
    s.window_end = arrival + 90 * kSecondsPerMinute;
    return s;
}

DeteriorationSpec load_spec() {
    return DeteriorationSpec::load(testutil::repo_data("deterioration_targets.json"));
}

}  // namespace

// ---------------------------------------------------------------------------
// ICD normalization and propagation
// ---------------------------------------------------------------------------

TEST_CASE("icd codes normalize to uppercase dotless form") {
    CHECK(normalize_code("i21.09") == "I2109");
    CHECK(normalize_code(" e11 9 ") == "E119");
    CHECK(normalize_code("A419") == "A419");
}

TEST_CASE("truncation and propagation build the ancestor closure") {
    CHECK(truncate_and_propagate("I2109") == std::set<std::string>{"I2109", "I210", "I21"});
    CHECK(truncate_and_propagate("i21.09") == std::set<std::string>{"I2109", "I210", "I21"});
    CHECK(truncate_and_propagate("I21") == std::set<std::string>{"I21"});
    // Longer than five characters truncates to five before propagating.
    CHECK(truncate_and_propagate("S72001A") ==
          std::set<std::string>{"S7200", "S720", "S72"});
    CHECK_THROWS_AS(truncate_and_propagate("I2"), DataError);
    CHECK_THROWS_AS(truncate_and_propagate(""), DataError);
}

TEST_CASE("propagation closure holds on 1000 random codes") {
    Rng rng(2024);
    const std::string letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    for (int trial = 0; trial < 1000; ++trial) {
        std::string code;
        code.push_back(letters[rng.below(letters.size())]);
        const std::size_t len = 3 + rng.below(5);  // 3..7 characters
        while (code.size() < len) code.push_back(static_cast<char>('0' + rng.below(10)));

        auto closure = truncate_and_propagate(code);
        const std::string truncated = code.substr(0, 5);
        CHECK(closure.count(truncated) == 1);
        for (const auto& c : closure) {
            CHECK(c.size() >= 3);
            CHECK(c.size() <= 5);
            // Every non-root member's parent prefix is also in the set.
            if (c.size() > 3) CHECK(closure.count(c.substr(0, c.size() - 1)) == 1);
            CHECK(truncated.rfind(c, 0) == 0);  // all members are prefixes
        }
        CHECK(closure.size() == truncated.size() - 2);
    }
}

TEST_CASE("icd9 codes map through the equivalence table") {
    auto gem = load_gem(testutil::repo_data("icd9_to_icd10.csv"));
    CHECK(normalize_icd("A41.9", 10, gem) == std::vector<std::string>{"A419"});
    CHECK(normalize_icd("0389", 9, gem) == std::vector<std::string>{"A419"});
    // One ICD-9 code may map to several ICD-10 codes.
    auto multi = normalize_icd("25040", 9, gem);
    CHECK(multi.size() == 2);
    CHECK(std::find(multi.begin(), multi.end(), "E1121") != multi.end());
    CHECK(std::find(multi.begin(), multi.end(), "E1129") != multi.end());
    // Unmappable ICD-9 codes drop with a log line.
    std::vector<std::string> log;
    CHECK(normalize_icd("99999", 9, gem, &log).empty());
    REQUIRE(log.size() == 1);
    CHECK(log[0].find("99999") != std::string::npos);
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

TEST_CASE("vocabulary admits codes at the count threshold, not below") {
    std::vector<std::set<std::string>> per_sample;
    for (int i = 0; i < 5; ++i) per_sample.push_back({"I21", "I210"});
    per_sample.push_back({"I21", "E119"});
    // I21 appears 6x, I210 5x, E119 1x.
    auto vocab = build_vocab(per_sample, 5);
    CHECK(vocab.contains("I21"));
    CHECK(vocab.contains("I210"));
    CHECK(!vocab.contains("E119"));
    CHECK(vocab.codes == std::vector<std::string>{"I21", "I210"});  // sorted
    CHECK(vocab.counts[0] == 6);

    CHECK_THROWS_AS(build_vocab(per_sample, 100), DataError);
}

TEST_CASE("vocabulary file round-trips and sorts") {
    testutil::TempDir tmp;
    auto vocab = DiagnosisVocab::from_codes({"E119", "I21"}, {4, 9});
    write_vocab_file(tmp.file("vocab.csv"), vocab);
    auto back = load_vocab_file(tmp.file("vocab.csv"));
    CHECK(back.codes == vocab.codes);
    CHECK(back.counts == vocab.counts);

    testutil::write_text(tmp.file("unsorted.csv"), "code\nz99\na00\n");
    auto sorted = load_vocab_file(tmp.file("unsorted.csv"));
    CHECK(sorted.codes == std::vector<std::string>{"A00", "Z99"});
}

TEST_CASE("diagnosis labels are set membership against the vocabulary") {
    auto vocab = DiagnosisVocab::from_codes({"E119", "I21", "I210"}, {});
    auto l = diagnosis_labels({"I21", "I210", "Q999"}, vocab, true);
    CHECK(l.has_diagnoses);
    CHECK(l.values == std::vector<Ternary>{kNegative, kPositive, kPositive});
    auto none = diagnosis_labels({}, vocab, false);
    CHECK(!none.has_diagnoses);
    CHECK(none.values == std::vector<Ternary>(3, kNegative));
}

// ---------------------------------------------------------------------------
// Deterioration spec data file
// ---------------------------------------------------------------------------

TEST_CASE("deterioration spec defines the fifteen documented targets in order") {
    auto spec = load_spec();
    CHECK(spec.names() == std::vector<std::string>{
        "severe_hypoxemia", "ecmo", "vasopressors", "inotropes", "mechanical_ventilation",
        "ihca", "icu_24h", "icu_overall", "mortality_in_hospital", "mortality_24h",
        "mortality_7d", "mortality_28d", "mortality_90d", "mortality_180d", "mortality_365d"});

    const auto& hypox = spec.target("severe_hypoxemia");
    CHECK(hypox.kind == TargetKind::VitalThreshold);
    CHECK(hypox.variable == "o2sat");
    CHECK(hypox.threshold == doctest::Approx(85.0));
    CHECK(hypox.horizon_hours.value() == doctest::Approx(24.0));

    const auto& vaso = spec.target("vasopressors");
    CHECK(vaso.kind == TargetKind::Medication);
    CHECK(vaso.drugs == std::vector<std::string>{"epinephrine", "norepinephrine", "vasopressin",
                                                 "dobutamine", "dopamine", "phenylephrine"});

    CHECK(spec.target("icu_overall").overall);
    CHECK(!spec.target("icu_24h").overall);
    CHECK(spec.target("mortality_in_hospital").in_hospital);
    CHECK(spec.target("mortality_365d").horizon_hours.value() == doctest::Approx(8760.0));
    CHECK_THROWS_AS(spec.target("nonesuch"), DataError);
}

TEST_CASE("coded-event targets carry their code lists verbatim") {
    auto spec = load_spec();
    auto codes_of = [&](const std::string& name) {
        const auto& t = spec.target(name);
        return std::set<std::string>(t.codes.begin(), t.codes.end());
    };
    CHECK(codes_of("mechanical_ventilation") ==
          std::set<std::string>{"9670", "9671", "9672", "5A1935Z", "5A1945Z", "5A1955Z"});
    CHECK(codes_of("ihca") == std::set<std::string>{"I469", "4275", "I462", "V1253", "I468"});
    CHECK(codes_of("ecmo") ==
          std::set<std::string>{"3961", "3965", "3966", "5A1221Z", "5A1522F", "5A1522G",
                                "5A1522H", "5A15223", "5A15A2F", "5A15A2G", "5A15A2H"});
}

// ---------------------------------------------------------------------------
// Mortality
// ---------------------------------------------------------------------------

TEST_CASE("mortality horizons are inclusive and the window masks") {
    auto sample = make_sample();
    OutcomeRecord outcome;
    outcome.subject_id = "p1";
    outcome.hadm_id = "h1";
    outcome.admittime = sample.arrival;
    outcome.dischtime = sample.arrival + 10 * kSecondsPerDay;

    SUBCASE("no outcome record or no death means all negative") {
        auto l = mortality_labels(sample, nullptr);
        for (auto v : l) CHECK(v == kNegative);
        auto l2 = mortality_labels(sample, &outcome);
        for (auto v : l2) CHECK(v == kNegative);
    }
    SUBCASE("death before arrival is a data error") {
        outcome.dod = sample.arrival - 1;
        CHECK_THROWS_AS(mortality_labels(sample, &outcome), DataError);
    }
    SUBCASE("death inside the feature window masks all horizons") {
        outcome.dod = sample.window_end;
        auto l = mortality_labels(sample, &outcome);
        for (auto v : l) CHECK(v == kMasked);
    }
    SUBCASE("death exactly at a horizon boundary is positive for it") {
        outcome.dod = sample.arrival + 24 * kSecondsPerHour;
        auto l = mortality_labels(sample, &outcome);
        CHECK(l[0] == kPositive);  // 24h
        CHECK(l[1] == kPositive);  // 7d
        CHECK(l[6] == kPositive);  // before discharge
    }
    SUBCASE("death one second past 24h misses that horizon only") {
        outcome.dod = sample.arrival + 24 * kSecondsPerHour + 1;
        auto l = mortality_labels(sample, &outcome);
        CHECK(l[0] == kNegative);
        CHECK(l[1] == kPositive);
        CHECK(l[2] == kPositive);
    }
    SUBCASE("death after discharge is negative in-hospital but counts for horizons") {
        outcome.dod = sample.arrival + 20 * kSecondsPerDay;
        auto l = mortality_labels(sample, &outcome);
        CHECK(l[2] == kPositive);       // 28d
        CHECK(l[6] == kNegative);       // past dischtime
    }
}

TEST_CASE("mortality labels are monotone across horizons on 1000 random fixtures") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        auto sample = make_sample();
        OutcomeRecord outcome;
        outcome.hadm_id = "h1";
        outcome.admittime = sample.arrival;
        outcome.dischtime = sample.arrival + static_cast<Timestamp>(rng.below(30) + 1) * kSecondsPerDay;
        outcome.dod = sample.arrival + static_cast<Timestamp>(rng.below(400 * kSecondsPerDay));
        auto l = mortality_labels(sample, &outcome);
        const bool masked = *outcome.dod <= sample.window_end;
        if (masked) {
            for (auto v : l) CHECK(v == kMasked);
        } else {
            // Horizons 24h .. 365d in index order: positives never follow a negative.
            for (int i = 0; i < 5; ++i) {
                if (l[i] == kPositive) CHECK(l[i + 1] == kPositive);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ICU, medication, coded events, vital threshold
// ---------------------------------------------------------------------------

TEST_CASE("icu labels distinguish 24h from overall and mask in-window admits") {
    auto sample = make_sample();
    auto iv = [&](Timestamp in) { return IcuInterval{in, in + kSecondsPerDay}; };

    auto both = icu_labels(sample, {iv(sample.arrival + 5 * kSecondsPerHour)});
    CHECK(both[0] == kPositive);
    CHECK(both[1] == kPositive);

    auto late = icu_labels(sample, {iv(sample.arrival + 3 * kSecondsPerDay)});
    CHECK(late[0] == kNegative);
    CHECK(late[1] == kPositive);

    auto boundary = icu_labels(sample, {iv(sample.arrival + 24 * kSecondsPerHour)});
    CHECK(boundary[0] == kPositive);

    auto masked = icu_labels(sample, {iv(sample.window_end)});
    CHECK(masked[0] == kMasked);
    CHECK(masked[1] == kMasked);

    auto none = icu_labels(sample, {});
    CHECK(none[0] == kNegative);
    CHECK(none[1] == kNegative);
}

TEST_CASE("medication labels match drug names case-insensitively as substrings") {
    auto sample = make_sample();
    auto med = [&](const std::string& name, Timestamp when) {
        MedEvent m;
        m.subject_id = "p1";
        m.stay_id = "s1";
        m.name = name;
        m.charttime = when;
        return m;
    };
    const std::vector<std::string> drugs{"norepinephrine", "vasopressin"};

    CHECK(medication_label(sample, {med("Norepinephrine 8 MG/250 ML", sample.window_end + 60)},
                           drugs, 24.0) == kPositive);
    CHECK(medication_label(sample, {med("acetaminophen", sample.window_end + 60)}, drugs, 24.0) ==
          kNegative);
    // Whole-word matching: norepinephrine is a vasopressor but not an
    // inotrope even though "epinephrine" is embedded in its name.
    const std::vector<std::string> inotropes{"epinephrine", "dobutamine", "dopamine"};
    CHECK(medication_label(sample, {med("norepinephrine", sample.arrival + 2 * kSecondsPerHour)},
                           inotropes, 24.0) == kNegative);
    CHECK(medication_label(sample, {med("norepinephrine", sample.arrival + 2 * kSecondsPerHour)},
                           drugs, 24.0) == kPositive);
    CHECK(medication_label(sample, {med("EPINEPHrine 1 MG", sample.arrival + 2 * kSecondsPerHour)},
                           inotropes, 24.0) == kPositive);
    // Administration inside the window masks even if later doses exist.
    CHECK(medication_label(sample,
                           {med("vasopressin", sample.window_end),
                            med("vasopressin", sample.window_end + 3600)},
                           drugs, 24.0) == kMasked);
    // Beyond the horizon is negative.
    CHECK(medication_label(sample, {med("vasopressin", sample.arrival + 25 * kSecondsPerHour)},
                           drugs, 24.0) == kNegative);
    // Exactly at the horizon is positive.
    CHECK(medication_label(sample, {med("vasopressin", sample.arrival + 24 * kSecondsPerHour)},
                           drugs, 24.0) == kPositive);
}

TEST_CASE("coded events are date-granular and never masked") {
    auto sample = make_sample();  // arrival 10:00
    auto coded = [&](const std::string& code, int icd_version, std::int64_t day_offset) {
        CodedEventRecord r;
        r.subject_id = "p1";
        r.hadm_id = "h1";
        r.icd_code = code;
        r.icd_version = icd_version;
        r.event_date = sample.arrival - (sample.arrival % kSecondsPerDay) +
                       day_offset * kSecondsPerDay;
        return r;
    };
    const std::vector<std::string> codes{"9670", "5A1945Z"};

    CHECK(coded_event_label(sample, {coded("96.70", 9, 0)}, codes) == kPositive);
    CHECK(coded_event_label(sample, {coded("5A1945Z", 10, 1)}, codes) == kPositive);
    CHECK(coded_event_label(sample, {coded("9670", 9, 2)}, codes) == kNegative);
    CHECK(coded_event_label(sample, {coded("9670", 9, -1)}, codes) == kNegative);
    CHECK(coded_event_label(sample, {coded("0WJG0ZZ", 10, 0)}, codes) == kNegative);

    CodedEventRecord undated;
    undated.icd_code = "9670";
    CHECK(coded_event_label(sample, {undated}, codes) == kNegative);
}

TEST_CASE("vital threshold labels mask in-window crossings") {
    auto sample = make_sample();
    auto vital = [&](double value, Timestamp when) {
        EventRecord e;
        e.subject_id = "p1";
        e.variable_id = "o2sat";
        e.value = value;
        e.unit = "%";
        e.charttime = when;
        return e;
    };

    CHECK(vital_threshold_label(sample, {vital(84.0, sample.window_end + 60)}, "o2sat", 85.0,
                                24.0) == kPositive);
    CHECK(vital_threshold_label(sample, {vital(85.0, sample.window_end + 60)}, "o2sat", 85.0,
                                24.0) == kPositive);  // comparison is <=
    CHECK(vital_threshold_label(sample, {vital(85.01, sample.window_end + 60)}, "o2sat", 85.0,
                                24.0) == kNegative);
    CHECK(vital_threshold_label(sample, {vital(80.0, sample.window_end)}, "o2sat", 85.0, 24.0) ==
          kMasked);
    CHECK(vital_threshold_label(sample, {vital(80.0, sample.arrival + 25 * kSecondsPerHour)},
                                "o2sat", 85.0, 24.0) == kNegative);
    // Other variables and missing values are ignored.
    auto hr = vital(40.0, sample.window_end + 60);
    hr.variable_id = "heartrate";
    CHECK(vital_threshold_label(sample, {hr}, "o2sat", 85.0, 24.0) == kNegative);
}

TEST_CASE("in-window events mask on 1000 randomized fixtures") {
    Rng rng(31);
    auto spec = load_spec();
    const auto& vaso = spec.target("vasopressors");
    for (int trial = 0; trial < 1000; ++trial) {
        auto sample = make_sample();
        const Timestamp when =
            sample.arrival + static_cast<Timestamp>(rng.below(4 * 90 * kSecondsPerMinute));
        const bool in_window = when <= sample.window_end;

        MedEvent med;
        med.name = vaso.drugs[rng.below(vaso.drugs.size())];
        med.charttime = when;
        auto ml = medication_label(sample, {med}, vaso.drugs,
                                   vaso.horizon_hours.value_or(24.0));
        if (in_window) {
            CHECK(ml == kMasked);
        } else {
            CHECK(ml == kPositive);  // horizon is 24h, draws stay inside it
        }

        EventRecord e;
        e.variable_id = "o2sat";
        e.value = 60.0 + rng.uniform01() * 25.0;  // always at or below 85
        e.unit = "%";
        e.charttime = when;
        auto vl = vital_threshold_label(sample, {e}, "o2sat", 85.0, 24.0);
        CHECK(vl == (in_window ? kMasked : kPositive));
    }
}

TEST_CASE("the fifteen-target vector is assembled in spec order") {
    auto spec = load_spec();
    auto sample = make_sample();

    SampleEvents events;
    OutcomeRecord outcome;
    outcome.hadm_id = "h1";
    outcome.admittime = sample.arrival;
    outcome.dischtime = sample.arrival + 5 * kSecondsPerDay;
    outcome.dod = sample.arrival + 30 * kSecondsPerHour;  // inside 7d, outside 24h
    outcome.icu_intervals = {{sample.arrival + 4 * kSecondsPerHour,
                              sample.arrival + 2 * kSecondsPerDay}};
    events.outcome = &outcome;

    CodedEventRecord vent;
    vent.icd_code = "5A1945Z";
    vent.icd_version = 10;
    vent.event_date = sample.arrival;
    events.coded_events = {vent};

    MedEvent pressor;
    pressor.name = "norepinephrine";
    pressor.charttime = sample.window_end + 3600;
    events.meds = {pressor};

    auto labels = deterioration_labels(sample, events, spec);
    REQUIRE(labels.size() == 15);
    auto at = [&](const std::string& name) {
        auto names = spec.names();
        auto it = std::find(names.begin(), names.end(), name);
        REQUIRE(it != names.end());
        return labels[static_cast<std::size_t>(it - names.begin())];
    };
    CHECK(at("severe_hypoxemia") == kNegative);
    CHECK(at("ecmo") == kNegative);
    CHECK(at("vasopressors") == kPositive);
    CHECK(at("inotropes") == kNegative);  // norepinephrine is not in the inotrope list
    CHECK(at("mechanical_ventilation") == kPositive);
    CHECK(at("ihca") == kNegative);
    CHECK(at("icu_24h") == kPositive);
    CHECK(at("icu_overall") == kPositive);
    CHECK(at("mortality_in_hospital") == kPositive);
    CHECK(at("mortality_24h") == kNegative);
    CHECK(at("mortality_7d") == kPositive);
    CHECK(at("mortality_365d") == kPositive);
}

// ---------------------------------------------------------------------------
// Label space and matrix persistence
// ---------------------------------------------------------------------------

TEST_CASE("label space concatenates diagnoses then deterioration targets") {
    auto spec = load_spec();
    auto vocab = DiagnosisVocab::from_codes({"E119", "I21"}, {});
    auto space = LabelSpace::build(vocab, spec);
    CHECK(space.size() == 17);
    CHECK(space.n_diagnosis == 2);
    CHECK(space.names[0] == "E119");
    CHECK(space.names[2] == "severe_hypoxemia");
    CHECK(!space.is_deterioration(1));
    CHECK(space.is_deterioration(2));

    testutil::TempDir tmp;
    space.save(tmp.file("space.json"));
    auto back = LabelSpace::load(tmp.file("space.json"));
    CHECK(back.names == space.names);
    CHECK(back.n_diagnosis == space.n_diagnosis);
    CHECK(back.content_hash() == space.content_hash());
}

TEST_CASE("label matrix round-trips through sparse triplets") {
    auto spec = load_spec();
    auto vocab = DiagnosisVocab::from_codes({"E119", "I21"}, {});
    auto space = LabelSpace::build(vocab, spec);

    LabelMatrix m;
    m.sample_ids = {"a", "b", "c"};
    m.n_labels = space.size();
    m.values.assign(m.sample_ids.size() * m.n_labels, kNegative);
    Rng rng(5);
    for (auto& v : m.values) {
        double u = rng.uniform01();
        if (u < 0.15) v = kPositive;
        else if (u < 0.25) v = kMasked;
    }

    testutil::TempDir tmp;
    write_label_matrix(tmp.file("labels.csv"), m, space);
    auto back = read_label_matrix(tmp.file("labels.csv"), space, m.sample_ids);
    CHECK(back.values == m.values);

    // Unknown sample or label names in the file are rejected.
    testutil::write_text(tmp.file("bad.csv"), "sample_id,label_id,value\nzz,E119,1\n");
    CHECK_THROWS_AS(read_label_matrix(tmp.file("bad.csv"), space, m.sample_ids), DataError);
    testutil::write_text(tmp.file("bad2.csv"), "sample_id,label_id,value\na,NOPE,1\n");
    CHECK_THROWS_AS(read_label_matrix(tmp.file("bad2.csv"), space, m.sample_ids), DataError);
    testutil::write_text(tmp.file("bad3.csv"), "sample_id,label_id,value\na,E119,2\n");
    CHECK_THROWS_AS(read_label_matrix(tmp.file("bad3.csv"), space, m.sample_ids), FormatError);
}
