#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "edbench/eval.hpp"
#include "helpers.hpp"

using namespace edbench;
using namespace edbench::eval;

namespace {

/// Independent oracle: exhaustive pairwise counting, ties worth half.
double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    double ties = 0.0;
    double n_pos = 0.0;
    double n_neg = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        n_pos += 1.0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) ties += 1.0;
        }
    }
    for (int v : y) n_neg += v == 0 ? 1.0 : 0.0;
    return (wins + 0.5 * ties) / (n_pos * n_neg);
}

struct Instance {
    std::vector<double> scores;
    std::vector<int> y;
};

Instance random_instance(Rng& rng, std::size_t max_rows = 200) {
    Instance inst;
    const std::size_t n = 2 + rng.below(max_rows - 1);
    const bool quantized = rng.uniform01() < 0.5;  // force heavy ties half the time
    const double levels = 1.0 + static_cast<double>(rng.below(8));
    for (std::size_t i = 0; i < n; ++i) {
        double s = rng.normal();
        if (quantized) s = std::round(s * levels) / levels;
        inst.scores.push_back(s);
        inst.y.push_back(rng.uniform01() < 0.4 ? 1 : 0);
    }
    inst.y[0] = 1;  // guarantee both classes
    inst.y[1] = 0;
    return inst;
}

}  // namespace

// ---------------------------------------------------------------------------
// AUROC
// ---------------------------------------------------------------------------

TEST_CASE("auroc hand-checked cases") {
    CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
    CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(auroc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == doctest::Approx(0.0));
    CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
    CHECK(auroc({0.5, 0.5}, {1, 0}) == doctest::Approx(0.5));
}

TEST_CASE("auroc rejects degenerate inputs") {
    CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), DataError);
    CHECK_THROWS_AS(auroc({0.1, 0.2}, {0, 0}), DataError);
    CHECK_THROWS_AS(auroc({0.1, 0.2}, {0, 2}), DataError);
    CHECK_THROWS_AS(auroc({0.1}, {0, 1}), DataError);
}

TEST_CASE("auroc matches exhaustive pairwise counting on random instances") {
    Rng rng(4242);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = random_instance(rng);
        double fast = auroc(inst.scores, inst.y);
        double slow = pairwise_auroc(inst.scores, inst.y);
        CHECK(std::abs(fast - slow) <= 1e-12);
    }
}

TEST_CASE("auroc satisfies complement symmetry and monotone invariance") {
    Rng rng(979);
    for (int trial = 0; trial < 100; ++trial) {
        auto inst = random_instance(rng, 80);
        double a = auroc(inst.scores, inst.y);

        std::vector<int> flipped(inst.y.size());
        for (std::size_t i = 0; i < inst.y.size(); ++i) flipped[i] = 1 - inst.y[i];
        CHECK(std::abs(auroc(inst.scores, flipped) - (1.0 - a)) <= 1e-12);

        std::vector<double> affine(inst.scores.size());
        std::vector<double> cubed(inst.scores.size());
        for (std::size_t i = 0; i < inst.scores.size(); ++i) {
            affine[i] = 3.0 * inst.scores[i] - 7.0;
            cubed[i] = std::pow(inst.scores[i], 3.0);
        }
        CHECK(auroc(affine, inst.y) == a);  // order and ties preserved exactly
        CHECK(auroc(cubed, inst.y) == a);
    }
}

// ---------------------------------------------------------------------------
// Per-label and macro AUROC
// ---------------------------------------------------------------------------

namespace {

ScoreMatrix two_label_matrix() {
    // 4 rows x 2 labels. Label 0 has a masked row whose score would flip the
    // ranking if it were counted; label 1 is single-class.
    ScoreMatrix m;
    m.n_labels = 2;
    m.scores = {
        0.9, 0.3,   // row 0
        0.1, 0.6,   // row 1
        0.99, 0.2,  // row 2: masked for label 0
        0.2, 0.5,   // row 3
    };
    m.y = {
        1, 0,
        0, 0,
        labels::kMasked, 0,
        0, 0,
    };
    return m;
}

}  // namespace

TEST_CASE("per-label auroc skips masked entries and single-class labels") {
    auto m = two_label_matrix();
    auto per = per_label_auroc(m, {0, 1, 2, 3});
    REQUIRE(per.size() == 2);
    REQUIRE(per[0].has_value());
    CHECK(*per[0] == doctest::Approx(1.0));  // 0.9 beats 0.1 and 0.2; 0.99 excluded
    CHECK(!per[1].has_value());

    CHECK(macro_auroc(m, {0, 1, 2, 3}) == doctest::Approx(1.0));

    // Restricting rows can erase a class entirely.
    auto per_sub = per_label_auroc(m, {1, 3});
    CHECK(!per_sub[0].has_value());
    CHECK_THROWS_AS(macro_auroc(m, {1, 3}), DataError);
}

TEST_CASE("macro auroc averages only defined labels") {
    ScoreMatrix m;
    m.n_labels = 2;
    m.scores = {0.8, 0.1, 0.2, 0.9, 0.7, 0.4, 0.3, 0.6};
    m.y = {1, 1, 0, 0, 1, 1, 0, 0};
    // label 0: scores 0.8/0.2/0.7/0.3, y 1/0/1/0 -> auroc 1.0
    // label 1: scores 0.1/0.9/0.4/0.6, y 1/0/1/0 -> auroc 0.0
    CHECK(macro_auroc(m, {0, 1, 2, 3}) == doctest::Approx(0.5));
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

TEST_CASE("bootstrap is reproducible and correctly ordered") {
    Rng data_rng(55);
    for (int fixture = 0; fixture < 100; ++fixture) {
        const std::size_t n = 30 + data_rng.below(100);
        std::vector<double> data(n);
        for (auto& v : data) v = data_rng.normal();
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;

        auto metric = [&](const std::vector<std::size_t>& idx) {
            double sum = 0.0;
            for (auto i : idx) sum += data[i];
            return sum / static_cast<double>(idx.size());
        };
        auto a = bootstrap_ci(metric, rows, 200, 0.9, 99 + fixture);
        auto b = bootstrap_ci(metric, rows, 200, 0.9, 99 + fixture);
        CHECK(a.point == b.point);
        CHECK(a.lo == b.lo);
        CHECK(a.hi == b.hi);
        CHECK(a.lo <= a.point);
        CHECK(a.point <= a.hi);
    }
}

TEST_CASE("a constant metric produces a zero-width interval") {
    auto metric = [](const std::vector<std::size_t>&) { return 0.42; };
    auto r = bootstrap_ci(metric, {0, 1, 2, 3, 4}, 100, 0.95, 7);
    CHECK(r.point == 0.42);
    CHECK(r.lo == 0.42);
    CHECK(r.hi == 0.42);
}

TEST_CASE("narrower confidence levels nest inside wider ones") {
    Rng rng(66);
    std::vector<double> data(60);
    for (auto& v : data) v = rng.normal();
    std::vector<std::size_t> rows(60);
    for (std::size_t i = 0; i < 60; ++i) rows[i] = i;
    auto metric = [&](const std::vector<std::size_t>& idx) {
        double sum = 0.0;
        for (auto i : idx) sum += data[i];
        return sum / static_cast<double>(idx.size());
    };
    auto narrow = bootstrap_ci(metric, rows, 500, 0.5, 3);
    auto wide = bootstrap_ci(metric, rows, 500, 0.99, 3);
    CHECK(wide.lo <= narrow.lo);
    CHECK(narrow.hi <= wide.hi);
}

TEST_CASE("bootstrap rejects an empty row set") {
    auto metric = [](const std::vector<std::size_t>&) { return 0.0; };
    CHECK_THROWS_AS(bootstrap_ci(metric, {}, 10, 0.95, 1), DataError);
}

// ---------------------------------------------------------------------------
// Relative improvement and report arithmetic
// ---------------------------------------------------------------------------

TEST_CASE("relative improvement rounds to two decimals") {
    CHECK(relative_improvement(0.8761, 0.8050) == doctest::Approx(8.83));
    CHECK(relative_improvement(0.9, 0.8) == doctest::Approx(12.5));
    CHECK(relative_improvement(0.8, 0.8) == doctest::Approx(0.0));
    CHECK(relative_improvement(0.7, 0.8) == doctest::Approx(-12.5));
    CHECK_THROWS_AS(relative_improvement(0.9, 0.0), DataError);
    CHECK_THROWS_AS(relative_improvement(0.9, -0.1), DataError);
}

TEST_CASE("deterioration report averages the three category groups") {
    auto spec = labels::DeteriorationSpec::load(testutil::repo_data("deterioration_targets.json"));
    std::map<std::string, double> published = {
        {"severe_hypoxemia", 0.6980}, {"ecmo", 0.9355},
        {"vasopressors", 0.9239},     {"inotropes", 0.9400},
        {"mechanical_ventilation", 0.9590}, {"ihca", 0.9859},
        {"icu_24h", 0.9147},          {"icu_overall", 0.8979},
        {"mortality_in_hospital", 0.9423}, {"mortality_24h", 0.9600},
        {"mortality_7d", 0.9429},     {"mortality_28d", 0.9115},
        {"mortality_90d", 0.8952},    {"mortality_180d", 0.8894},
        {"mortality_365d", 0.8768},
    };
    auto report = deterioration_report(published, spec);
    CHECK(report.clinical_deterioration == doctest::Approx(0.9070).epsilon(1e-4));
    CHECK(report.icu == doctest::Approx(0.9063).epsilon(1e-4));
    CHECK(report.mortality == doctest::Approx(0.9168).epsilon(1e-4));

    published.erase("ecmo");
    CHECK_THROWS_AS(deterioration_report(published, spec), DataError);
}

// ---------------------------------------------------------------------------
// Chapters
// ---------------------------------------------------------------------------

TEST_CASE("chapter lookup follows the three-character range boundaries") {
    auto map = ChapterMap::load(testutil::repo_data("icd_chapters.json"));
    CHECK(map.chapter_of("A00") == "I");
    CHECK(map.chapter_of("B99") == "I");
    CHECK(map.chapter_of("C00") == "II");
    CHECK(map.chapter_of("I10") == "IX");
    CHECK(map.chapter_of("Q871") == "XVII");
    CHECK(map.chapter_of("O9A2") == "XV");
    CHECK(map.chapter_of("U07") == "XXII");
    CHECK(map.chapter_of("Z999") == "XXI");
    CHECK_THROWS_AS(map.chapter_of("Q8"), DataError);
    CHECK_THROWS_WITH_AS(map.chapter_of("ZZZ9"), doctest::Contains("ZZZ9"), DataError);
    CHECK(map.name_of("IX") == "Diseases of the circulatory system");
    CHECK(map.order().size() == 22);
}

TEST_CASE("chapter report groups defined labels and counts strong CIs") {
    auto map = ChapterMap::load(testutil::repo_data("icd_chapters.json"));
    std::vector<LabelResult> results;
    auto add = [&](const std::string& name, std::optional<double> a, double lo) {
        LabelResult r;
        r.name = name;
        r.auroc = a;
        r.ci_lo = lo;
        r.ci_hi = a ? *a + 0.02 : kMissing;
        results.push_back(r);
    };
    add("A00", 0.9, 0.85);
    add("B99", 0.7, 0.50);
    add("I10", 0.85, 0.81);
    add("I21", std::nullopt, kMissing);  // undefined: excluded entirely

    auto rows = chapter_report(results, map);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].chapter == "I");  // chapter order, not insertion order
    CHECK(rows[0].n_labels == 2);
    CHECK(rows[0].mean_auroc == doctest::Approx(0.8));
    CHECK(rows[0].n_above_080 == 1);
    CHECK(rows[1].chapter == "IX");
    CHECK(rows[1].n_labels == 1);
    CHECK(rows[1].n_above_080 == 1);

    // A CI lower bound exactly at 0.80 does not count (strict inequality).
    results.clear();
    add("A00", 0.9, 0.80);
    auto strict = chapter_report(results, map);
    CHECK(strict[0].n_above_080 == 0);
}

// ---------------------------------------------------------------------------
// Report persistence
// ---------------------------------------------------------------------------

TEST_CASE("eval reports round-trip through json and render as text") {
    EvalReport r;
    r.scenario = "routine_tree";
    r.n_rows = 123;
    r.macro = 0.85;
    r.macro_lo = 0.80;
    r.macro_hi = 0.90;
    LabelResult a;
    a.name = "I21";
    a.auroc = 0.875;
    a.ci_lo = 0.81;
    a.ci_hi = 0.93;
    a.n_pos = 10;
    a.n_neg = 100;
    LabelResult b;
    b.name = "E119";  // undefined label
    b.n_pos = 0;
    b.n_neg = 110;
    r.per_label = {a, b};
    ChapterRow c;
    c.chapter = "IX";
    c.name = "Diseases of the circulatory system";
    c.mean_auroc = 0.875;
    c.n_labels = 1;
    c.n_above_080 = 1;
    r.chapters = {c};
    DeteriorationReport d;
    d.clinical_deterioration = 0.91;
    d.icu = 0.92;
    d.mortality = 0.93;
    r.deterioration = d;

    testutil::TempDir tmp;
    r.save_json(tmp.file("report.json"));
    auto back = EvalReport::load_json(tmp.file("report.json"));
    CHECK(back.scenario == r.scenario);
    CHECK(back.n_rows == r.n_rows);
    CHECK(back.macro == r.macro);
    CHECK(back.macro_lo == r.macro_lo);
    CHECK(back.macro_hi == r.macro_hi);
    REQUIRE(back.per_label.size() == 2);
    CHECK(back.per_label[0].auroc == r.per_label[0].auroc);
    CHECK(back.per_label[0].n_pos == 10);
    CHECK(!back.per_label[1].auroc.has_value());
    REQUIRE(back.chapters.size() == 1);
    CHECK(back.chapters[0].mean_auroc == c.mean_auroc);
    REQUIRE(back.deterioration.has_value());
    CHECK(back.deterioration->mortality == 0.93);

    auto text = r.text();
    CHECK(text.find("scenario: routine_tree") != std::string::npos);
    CHECK(text.find("macro AUROC 0.8500 (0.8000, 0.9000)") != std::string::npos);
    CHECK(text.find("0.8750") != std::string::npos);
    CHECK(text.find("undefined") != std::string::npos);
    CHECK(text.find("clinical deterioration  0.9100") != std::string::npos);

    // Reports without deterioration blocks stay without them.
    EvalReport bare;
    bare.scenario = "wave_deep";
    bare.n_rows = 1;
    bare.save_json(tmp.file("bare.json"));
    CHECK(!EvalReport::load_json(tmp.file("bare.json")).deterioration.has_value());
}
