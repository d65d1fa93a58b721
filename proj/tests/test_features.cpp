#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "edbench/cohort.hpp"
#include "edbench/features.hpp"
#include "edbench/registry.hpp"
#include "helpers.hpp"

using namespace edbench;
using namespace edbench::features;

namespace {

VariableRegistry test_registry() {
    return VariableRegistry::load(testutil::repo_data("variable_registry.json"));
}

EventRecord event(const std::string& variable, double value, const std::string& unit,
                  Timestamp when = 0) {
    EventRecord e;
    e.subject_id = "p1";
    e.variable_id = variable;
    e.value = value;
    e.unit = unit;
    e.charttime = when;
    return e;
}

/// Straightforward closed-form reference for the nine statistics.
struct TrendOracle {
    double mean, median, min, max, std, first, last, rate, slope;
    bool has_rate;

    explicit TrendOracle(const std::vector<std::pair<double, double>>& series) {
        const std::size_t n = series.size();
        std::vector<double> values;
        for (const auto& [t, v] : series) values.push_back(v);
        double sum = 0.0;
        for (double v : values) sum += v;
        mean = sum / static_cast<double>(n);
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        min = sorted.front();
        max = sorted.back();
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        std = std::sqrt(ss / static_cast<double>(n));
        first = values.front();
        last = values.back();
        double t_first = series.front().first;
        double t_last = series.back().first;
        has_rate = n >= 2 && t_last != t_first;
        rate = has_rate ? (last - first) / (t_last - t_first) : 0.0;
        double t_mean = 0.0;
        for (const auto& [t, v] : series) t_mean += t;
        t_mean /= static_cast<double>(n);
        double cov = 0.0;
        double var = 0.0;
        for (const auto& [t, v] : series) {
            cov += (t - t_mean) * (v - mean);
            var += (t - t_mean) * (t - t_mean);
        }
        slope = var > 0.0 ? cov / var : 0.0;
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Trend statistics
// ---------------------------------------------------------------------------

TEST_CASE("trend aggregate reproduces the worked three-point example exactly") {
    auto agg = aggregate_trends({{0.0, 100.0}, {30.0, 110.0}, {60.0, 120.0}});
    CHECK(agg.mean == 110.0);
    CHECK(agg.median == 110.0);
    CHECK(agg.min == 100.0);
    CHECK(agg.max == 120.0);
    CHECK(agg.first == 100.0);
    CHECK(agg.last == 120.0);
    // Collinear points force the least-squares slope onto the secant.
    CHECK(agg.rate == 1.0 / 3.0);
    CHECK(agg.slope == 1.0 / 3.0);
    CHECK(agg.std == doctest::Approx(std::sqrt(200.0 / 3.0)).epsilon(1e-12));
    CHECK(std::round(agg.std * 1e4) / 1e4 == 8.1650);
}

TEST_CASE("trend aggregate degenerate inputs") {
    auto single = aggregate_trends({{10.0, 5.0}});
    CHECK(single.mean == 5.0);
    CHECK(single.median == 5.0);
    CHECK(single.min == 5.0);
    CHECK(single.max == 5.0);
    CHECK(single.first == 5.0);
    CHECK(single.last == 5.0);
    CHECK(single.std == 0.0);
    CHECK(is_missing(single.rate));
    CHECK(is_missing(single.slope));

    auto empty = aggregate_trends({});
    for (double v : empty.as_vector()) CHECK(is_missing(v));

    // Two observations at the same minute: location stats defined, trends not.
    auto same_time = aggregate_trends({{5.0, 1.0}, {5.0, 3.0}});
    CHECK(same_time.mean == 2.0);
    CHECK(is_missing(same_time.rate));
    CHECK(is_missing(same_time.slope));
}

TEST_CASE("trend aggregate matches closed-form oracles on 1000 random series") {
    Rng rng(404);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(30);
        std::vector<std::pair<double, double>> series;
        double t = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            t += rng.uniform(0.0, 10.0);
            series.emplace_back(std::round(t * 100.0) / 100.0, rng.uniform(-50.0, 150.0));
        }
        TrendOracle oracle(series);
        auto agg = aggregate_trends(series);
        CHECK(std::abs(agg.mean - oracle.mean) < 1e-9);
        CHECK(std::abs(agg.median - oracle.median) < 1e-9);
        CHECK(agg.min == oracle.min);
        CHECK(agg.max == oracle.max);
        CHECK(std::abs(agg.std - oracle.std) < 1e-9);
        CHECK(agg.first == oracle.first);
        CHECK(agg.last == oracle.last);
        if (oracle.has_rate) {
            CHECK(std::abs(agg.rate - oracle.rate) < 1e-9);
            CHECK(std::abs(agg.slope - oracle.slope) < 1e-9);
        }
    }
}

TEST_CASE("as_vector follows the declared stat order") {
    auto agg = aggregate_trends({{0.0, 1.0}, {1.0, 3.0}});
    auto v = agg.as_vector();
    const auto& names = trend_stat_names();
    REQUIRE(v.size() == 9);
    REQUIRE(names == std::vector<std::string>{"mean", "median", "min", "max", "std", "first",
                                              "last", "rate", "slope"});
    CHECK(v[0] == agg.mean);
    CHECK(v[4] == agg.std);
    CHECK(v[7] == agg.rate);
    CHECK(v[8] == agg.slope);
}

// ---------------------------------------------------------------------------
// Unit conversion and outlier rules
// ---------------------------------------------------------------------------

TEST_CASE("unit conversion maps source units onto canonical ones") {
    auto reg = test_registry();
    auto f = convert_units(event("temperature", 98.6, "F"), reg);
    CHECK(f.value == doctest::Approx(37.0));
    CHECK(f.unit == "C");

    auto c = convert_units(event("temperature", 36.5, "C"), reg);
    CHECK(c.value == doctest::Approx(36.5));

    std::vector<std::string> log;
    auto bad = convert_units(event("temperature", 98.6, "furlongs"), reg, &log);
    CHECK(is_missing(bad.value));
    REQUIRE(log.size() == 1);
    CHECK(log[0].find("furlongs") != std::string::npos);
}

TEST_CASE("outlier bounds are exclusive: the boundary value survives") {
    auto reg = test_registry();
    auto check_kept = [&](const std::string& var, double value, const std::string& unit,
                          bool expect_kept) {
        auto filtered = filter_outliers({event(var, value, unit)}, reg);
        REQUIRE(filtered.size() == 1);
        CHECK(is_missing(filtered[0].value) == !expect_kept);
    };
    check_kept("heartrate", 700.0, "bpm", true);
    check_kept("heartrate", 700.01, "bpm", false);
    check_kept("o2sat", 100.0, "%", true);
    check_kept("o2sat", 100.01, "%", false);
    check_kept("o2sat", 0.0, "%", true);
    check_kept("o2sat", -0.01, "%", false);
    check_kept("glucose", 2000.0, "mg/dL", true);
    check_kept("glucose", 2000.01, "mg/dL", false);
    check_kept("resprate", 300.0, "bpm", true);
    check_kept("resprate", 300.01, "bpm", false);
    // No rule at all: anything stays.
    check_kept("c_reactive_protein", 1e9, "mg/L", true);
}

TEST_CASE("temperature bounds apply in fahrenheit before conversion") {
    auto reg = test_registry();
    // 50 F is the inclusive lower bound; it converts to 10 C.
    auto kept = canonicalize_events({event("temperature", 50.0, "F")}, reg);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].value == doctest::Approx(10.0));
    CHECK(kept[0].unit == "C");

    auto removed = canonicalize_events({event("temperature", 49.99, "F")}, reg);
    REQUIRE(removed.size() == 1);
    CHECK(is_missing(removed[0].value));

    // The rule is stated in F, so it never fires on already-celsius values.
    auto celsius = canonicalize_events({event("temperature", 45.0, "C")}, reg);
    REQUIRE(celsius.size() == 1);
    CHECK(celsius[0].value == doctest::Approx(45.0));
}

TEST_CASE("biometric canonicalization applies conversion then bounds") {
    auto reg = test_registry();
    auto omr = [&](const std::string& var, double value, const std::string& unit) {
        OmrRecord r;
        r.subject_id = "p1";
        r.variable_id = var;
        r.value = value;
        r.unit = unit;
        r.chartdate = 0;
        return r;
    };
    auto run = [&](const OmrRecord& r) {
        auto out = canonicalize_omr({r}, reg);
        REQUIRE(out.size() == 1);
        return out[0];
    };
    CHECK(run(omr("weight", 20.0, "kg")).value == doctest::Approx(20.0));
    CHECK(is_missing(run(omr("weight", 19.9, "kg")).value));
    CHECK(run(omr("weight", 400.0, "kg")).value == doctest::Approx(400.0));
    CHECK(is_missing(run(omr("weight", 400.01, "kg")).value));
    // 154.32 lb converts to ~70 kg, inside bounds.
    CHECK(run(omr("weight", 154.32, "lb")).value == doctest::Approx(154.32 * 0.45359237));
    // 30 lb converts to 13.6 kg, below the canonical lower bound.
    CHECK(is_missing(run(omr("weight", 30.0, "lb")).value));
    CHECK(run(omr("height", 70.0, "in")).value == doctest::Approx(177.8));
    CHECK(is_missing(run(omr("height", 59.9, "cm")).value));
    CHECK(run(omr("bmi", 100.0, "kg/m2")).value == doctest::Approx(100.0));
    CHECK(is_missing(run(omr("bmi", 100.01, "kg/m2")).value));
}

// ---------------------------------------------------------------------------
// Biometric matching
// ---------------------------------------------------------------------------

TEST_CASE("biometric matching takes the closest record within 30 days") {
    const Timestamp arrival = parse_timestamp("2023-06-15 12:00:00");
    auto omr = [&](const std::string& var, double value, std::int64_t days_offset) {
        OmrRecord r;
        r.subject_id = "p1";
        r.variable_id = var;
        r.value = value;
        r.unit = var == "height" ? "cm" : (var == "weight" ? "kg" : "kg/m2");
        r.chartdate = arrival + days_offset * kSecondsPerDay;
        return r;
    };

    SUBCASE("closest wins") {
        auto b = match_biometrics(arrival, {omr("weight", 80.0, -20), omr("weight", 85.0, -3)});
        CHECK(b.weight == doctest::Approx(85.0));
    }
    SUBCASE("30 days exactly is still eligible") {
        auto b = match_biometrics(arrival, {omr("weight", 80.0, -30)});
        CHECK(b.weight == doctest::Approx(80.0));
    }
    SUBCASE("31 days is not") {
        auto b = match_biometrics(arrival, {omr("weight", 80.0, -31)});
        CHECK(is_missing(b.weight));
    }
    SUBCASE("records after arrival also count") {
        auto b = match_biometrics(arrival, {omr("weight", 90.0, 2)});
        CHECK(b.weight == doctest::Approx(90.0));
    }
    SUBCASE("equidistant records tie toward the earlier one") {
        auto b = match_biometrics(arrival, {omr("weight", 77.0, 5), omr("weight", 70.0, -5)});
        CHECK(b.weight == doctest::Approx(70.0));
    }
    SUBCASE("each biometric matches independently") {
        auto b = match_biometrics(arrival, {omr("weight", 80.0, -1), omr("height", 170.0, -29),
                                            omr("bmi", 27.7, 0)});
        CHECK(b.weight == doctest::Approx(80.0));
        CHECK(b.height == doctest::Approx(170.0));
        CHECK(b.bmi == doctest::Approx(27.7));
    }
    SUBCASE("missing values never match") {
        auto r = omr("weight", 0.0, 0);
        r.value = kMissing;
        auto b = match_biometrics(arrival, {r});
        CHECK(is_missing(b.weight));
    }
}

// ---------------------------------------------------------------------------
// Schema and assembly
// ---------------------------------------------------------------------------

TEST_CASE("feature schema derives the documented 463-column numeric layout") {
    auto reg = test_registry();
    auto schema = FeatureSchema::from_registry(reg);
    // age + 3 biometrics + 9 stats x (6 vitals + 45 labs)
    CHECK(schema.numeric_size() == 1 + 3 + 9 * 51);
    CHECK(schema.numeric_size() == 463);
    CHECK(schema.numeric_names[0] == "age");
    CHECK(schema.numeric_names[1] == "height");
    CHECK(schema.numeric_names[2] == "weight");
    CHECK(schema.numeric_names[3] == "bmi");
    CHECK(schema.numeric_names[4] == "temperature_mean");
    CHECK(schema.numeric_names[12] == "temperature_slope");
    CHECK(schema.numeric_names[13] == "heartrate_mean");
    CHECK(schema.categorical_names == std::vector<std::string>{"gender", "race", "acuity"});
    CHECK(schema.ecg_names.size() == 8);
    CHECK(schema.ecg_names == ecg_machine_feature_names());

    testutil::TempDir tmp;
    schema.save(tmp.file("schema.json"));
    auto back = FeatureSchema::load(tmp.file("schema.json"));
    CHECK(back.numeric_names == schema.numeric_names);
    CHECK(back.ecg_names == schema.ecg_names);
    CHECK(back.content_hash() == schema.content_hash());
}

TEST_CASE("feature assembly places statistics at their schema positions") {
    auto reg = test_registry();
    auto schema = FeatureSchema::from_registry(reg);
    schema.categorical_vocabs = {{"F", "M"}, {"ASIAN", "WHITE"}, {"2", "3"}};

    StayRecord stay;
    stay.subject_id = "p1";
    stay.stay_id = "s1";
    stay.gender = "M";
    stay.race = "WHITE";
    stay.age = 63;
    stay.acuity = 2;

    cohort::Sample sample;
    sample.sample_id = "s1_r1";
    sample.subject_id = "p1";
    sample.stay_id = "s1";
    sample.arrival = parse_timestamp("2023-06-15 12:00:00");
    sample.window_end = sample.arrival + 90 * kSecondsPerMinute;

    SampleFeatureInputs inputs;
    inputs.stay = &stay;
    inputs.window_events = {
        event("heartrate", 80.0, "bpm", sample.arrival),
        event("heartrate", 100.0, "bpm", sample.arrival + 30 * kSecondsPerMinute),
        event("lactate", 2.5, "mmol/L", sample.arrival + 10 * kSecondsPerMinute),
    };
    inputs.biometrics.weight = 82.0;
    inputs.ecg_machine_features = {{"rr_interval", 800.0}, {"t_axis", 40.0}};

    auto fv = assemble_features(sample, inputs, reg, schema);
    REQUIRE(fv.numeric.size() == schema.numeric_size());
    auto idx = [&](const std::string& name) {
        auto it = std::find(schema.numeric_names.begin(), schema.numeric_names.end(), name);
        REQUIRE(it != schema.numeric_names.end());
        return static_cast<std::size_t>(it - schema.numeric_names.begin());
    };
    CHECK(fv.numeric[idx("age")] == 63.0);
    CHECK(fv.numeric[idx("weight")] == 82.0);
    CHECK(is_missing(fv.numeric[idx("height")]));
    CHECK(fv.numeric[idx("heartrate_mean")] == doctest::Approx(90.0));
    CHECK(fv.numeric[idx("heartrate_first")] == 80.0);
    CHECK(fv.numeric[idx("heartrate_last")] == 100.0);
    CHECK(fv.numeric[idx("heartrate_rate")] == doctest::Approx(20.0 / 30.0));
    CHECK(fv.numeric[idx("lactate_mean")] == doctest::Approx(2.5));
    CHECK(is_missing(fv.numeric[idx("lactate_rate")]));  // single observation
    CHECK(is_missing(fv.numeric[idx("glucose_mean")]));  // never measured

    // Categorical encoding: observed vocab entries are 1-based, unknown is 0.
    REQUIRE(fv.categorical.size() == 3);
    CHECK(fv.categorical[0] == 2);  // M
    CHECK(fv.categorical[1] == 2);  // WHITE
    CHECK(fv.categorical[2] == 1);  // acuity 2

    // ECG machine features in declared order, absent ones missing.
    REQUIRE(fv.ecg.size() == 8);
    CHECK(fv.ecg[0] == 800.0);           // rr_interval
    CHECK(is_missing(fv.ecg[1]));        // p_onset absent
    CHECK(fv.ecg[7] == 40.0);            // t_axis

    // Unknown categorical values map to zero.
    stay.race = "UNSEEN";
    auto fv2 = assemble_features(sample, inputs, reg, schema);
    CHECK(fv2.categorical[1] == 0);
}

TEST_CASE("categorical vocabularies collect sorted observed values") {
    auto reg = test_registry();
    auto schema = FeatureSchema::from_registry(reg);

    StayRecord a;
    a.stay_id = "s1";
    a.gender = "M";
    a.race = "WHITE";
    a.acuity = 3;
    StayRecord b;
    b.stay_id = "s2";
    b.gender = "F";
    b.race = "ASIAN";
    // b.acuity intentionally unset

    cohort::Sample sa;
    sa.sample_id = "x1";
    sa.stay_id = "s1";
    cohort::Sample sb;
    sb.sample_id = "x2";
    sb.stay_id = "s2";

    std::map<std::string, const StayRecord*> stays{{"s1", &a}, {"s2", &b}};
    build_categorical_vocabs(schema, {sa, sb}, stays);
    CHECK(schema.categorical_vocabs[0] == std::vector<std::string>{"F", "M"});
    CHECK(schema.categorical_vocabs[1] == std::vector<std::string>{"ASIAN", "WHITE"});
    CHECK(schema.categorical_vocabs[2] == std::vector<std::string>{"3"});
}

TEST_CASE("feature matrix csv round-trips values and missingness") {
    auto reg = test_registry();
    auto schema = FeatureSchema::from_registry(reg);
    schema.categorical_vocabs = {{"F", "M"}, {"WHITE"}, {"1", "2"}};

    FeatureMatrix m;
    m.schema = schema;
    m.sample_ids = {"a", "b"};
    m.numeric.assign(2 * schema.numeric_size(), kMissing);
    m.numeric[0] = 55.0;
    m.numeric[schema.numeric_size() + 4] = 37.2;
    m.categorical = {1, 0, 2, 2, 1, 0};
    m.ecg.assign(2 * 8, kMissing);
    m.ecg[3] = 410.0;

    testutil::TempDir tmp;
    write_feature_matrix(tmp.file("features.csv"), m);
    auto back = read_feature_matrix(tmp.file("features.csv"), schema);
    REQUIRE(back.rows() == 2);
    CHECK(back.sample_ids == m.sample_ids);
    CHECK(back.numeric[0] == 55.0);
    CHECK(is_missing(back.numeric[1]));
    CHECK(back.numeric[schema.numeric_size() + 4] == doctest::Approx(37.2));
    CHECK(back.categorical == m.categorical);
    CHECK(back.ecg[3] == 410.0);
    CHECK(is_missing(back.ecg[0]));
}
