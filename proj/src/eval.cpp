#include "edbench/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace edbench::eval {

double auroc(const std::vector<double>& scores, const std::vector<int>& binary_labels) {
    if (scores.size() != binary_labels.size()) {
        throw DataError("auroc: scores and labels differ in length");
    }
    // Rank-sum formulation with midranks for ties: O(n log n).
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double n_pos = 0.0;
    double n_neg = 0.0;
    for (int y : binary_labels) {
        if (y == 1) {
            n_pos += 1.0;
        } else if (y == 0) {
            n_neg += 1.0;
        } else {
            throw DataError("auroc: labels must be 0 or 1");
        }
    }
    if (n_pos == 0.0 || n_neg == 0.0) {
        throw DataError("auroc undefined: needs at least one positive and one negative");
    }

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        // ranks i+1..j (1-based) share the midrank
        double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (binary_labels[order[k]] == 1) rank_sum_pos += midrank;
        }
        i = j;
    }
    return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

std::vector<std::optional<double>> per_label_auroc(const ScoreMatrix& m,
                                                   const std::vector<std::size_t>& rows) {
    std::vector<std::optional<double>> out(m.n_labels);
    for (std::size_t c = 0; c < m.n_labels; ++c) {
        std::vector<double> scores;
        std::vector<int> y;
        for (std::size_t r : rows) {
            labels::Ternary v = m.y[r * m.n_labels + c];
            if (v == labels::kMasked) continue;
            scores.push_back(m.scores[r * m.n_labels + c]);
            y.push_back(v);
        }
        bool has_pos = std::find(y.begin(), y.end(), 1) != y.end();
        bool has_neg = std::find(y.begin(), y.end(), 0) != y.end();
        if (has_pos && has_neg) out[c] = auroc(scores, y);
    }
    return out;
}

double macro_auroc(const ScoreMatrix& m, const std::vector<std::size_t>& rows) {
    auto per_label = per_label_auroc(m, rows);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : per_label) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) throw DataError("macro auroc undefined: no label has both classes");
    return sum / static_cast<double>(n);
}

BootstrapResult bootstrap_ci(const std::function<double(const std::vector<std::size_t>&)>& metric,
                             const std::vector<std::size_t>& rows, int n_iter, double level,
                             std::uint64_t seed) {
    if (rows.empty()) throw DataError("bootstrap_ci: empty row set");
    BootstrapResult out;
    out.point = metric(rows);

    Rng rng(seed);
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(n_iter));
    std::vector<std::size_t> resample(rows.size());
    for (int it = 0; it < n_iter; ++it) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            resample[i] = rows[rng.below(rows.size())];
        }
        stats.push_back(metric(resample));
    }
    std::sort(stats.begin(), stats.end());

    auto quantile = [&](double q) {
        // linear interpolation on the sorted resample statistics
        if (stats.empty()) return out.point;
        double pos = q * static_cast<double>(stats.size() - 1);
        auto lo_idx = static_cast<std::size_t>(std::floor(pos));
        auto hi_idx = static_cast<std::size_t>(std::ceil(pos));
        double frac = pos - static_cast<double>(lo_idx);
        return stats[lo_idx] * (1.0 - frac) + stats[hi_idx] * frac;
    };
    double alpha = (1.0 - level) / 2.0;
    out.lo = quantile(alpha);
    out.hi = quantile(1.0 - alpha);
    return out;
}

// ---------------------------------------------------------------------------
// Chapter map
// ---------------------------------------------------------------------------

ChapterMap ChapterMap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open chapter map: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("invalid chapter map json: " + std::string(e.what()));
    }
    ChapterMap map;
    for (const auto& entry : j.at("chapters")) {
        Range r;
        r.chapter = entry.at("chapter").get<std::string>();
        r.lo = entry.at("lo").get<std::string>();
        r.hi = entry.at("hi").get<std::string>();
        r.name = entry.at("name").get<std::string>();
        map.order_.push_back(r.chapter);
        map.ranges_.push_back(std::move(r));
    }
    return map;
}

std::string ChapterMap::chapter_of(const std::string& code) const {
    if (code.size() < 3) throw DataError("diagnosis code too short for chapter lookup: " + code);
    std::string prefix = code.substr(0, 3);
    for (const auto& r : ranges_) {
        if (prefix >= r.lo && prefix <= r.hi) return r.chapter;
    }
    throw DataError("no ICD chapter covers code: " + code);
}

std::string ChapterMap::name_of(const std::string& chapter) const {
    for (const auto& r : ranges_) {
        if (r.chapter == chapter) return r.name;
    }
    throw DataError("unknown chapter: " + chapter);
}

std::vector<ChapterRow> chapter_report(const std::vector<LabelResult>& diagnosis_results,
                                       const ChapterMap& chapters) {
    std::map<std::string, ChapterRow> by_chapter;
    std::map<std::string, double> sums;
    for (const auto& result : diagnosis_results) {
        if (!result.auroc) continue;
        std::string chapter = chapters.chapter_of(result.name);
        auto& row = by_chapter[chapter];
        row.chapter = chapter;
        row.name = chapters.name_of(chapter);
        row.n_labels += 1;
        sums[chapter] += *result.auroc;
        if (!is_missing(result.ci_lo) && result.ci_lo > 0.80) row.n_above_080 += 1;
    }
    std::vector<ChapterRow> out;
    for (const auto& chapter : chapters.order()) {
        auto it = by_chapter.find(chapter);
        if (it == by_chapter.end()) continue;
        ChapterRow row = it->second;
        row.mean_auroc = sums[chapter] / static_cast<double>(row.n_labels);
        out.push_back(std::move(row));
    }
    return out;
}

DeteriorationReport deterioration_report(const std::map<std::string, double>& auroc_by_target,
                                         const labels::DeteriorationSpec& spec) {
    double sums[3] = {0.0, 0.0, 0.0};
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& t : spec.targets) {
        auto it = auroc_by_target.find(t.name);
        if (it == auroc_by_target.end()) {
            throw DataError("deterioration report missing target: " + t.name);
        }
        std::size_t group;
        if (t.category == "deterioration") {
            group = 0;
        } else if (t.category == "icu") {
            group = 1;
        } else if (t.category == "mortality") {
            group = 2;
        } else {
            throw DataError("unknown deterioration category: " + t.category);
        }
        sums[group] += it->second;
        counts[group] += 1;
    }
    if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) {
        throw DataError("deterioration report: a category has no targets");
    }
    DeteriorationReport out;
    out.clinical_deterioration = sums[0] / static_cast<double>(counts[0]);
    out.icu = sums[1] / static_cast<double>(counts[1]);
    out.mortality = sums[2] / static_cast<double>(counts[2]);
    return out;
}

double relative_improvement(double a, double b) {
    if (b <= 0.0) throw DataError("relative_improvement requires a positive baseline");
    double pct = 100.0 * (a - b) / b;
    return std::round(pct * 100.0) / 100.0;
}

// ---------------------------------------------------------------------------
// Report IO
// ---------------------------------------------------------------------------

void EvalReport::save_json(const std::string& path) const {
    json j;
    j["scenario"] = scenario;
    j["n_rows"] = n_rows;
    j["macro"] = {{"auroc", macro}, {"ci_lo", macro_lo}, {"ci_hi", macro_hi}};
    json labels_json = json::array();
    for (const auto& r : per_label) {
        json entry;
        entry["name"] = r.name;
        if (r.auroc) {
            entry["auroc"] = *r.auroc;
            entry["ci_lo"] = r.ci_lo;
            entry["ci_hi"] = r.ci_hi;
        } else {
            entry["auroc"] = nullptr;
        }
        entry["n_pos"] = r.n_pos;
        entry["n_neg"] = r.n_neg;
        labels_json.push_back(std::move(entry));
    }
    j["labels"] = labels_json;
    json chapters_json = json::array();
    for (const auto& c : chapters) {
        chapters_json.push_back({{"chapter", c.chapter},
                                 {"name", c.name},
                                 {"mean_auroc", c.mean_auroc},
                                 {"n_labels", c.n_labels},
                                 {"n_ci_above_080", c.n_above_080}});
    }
    j["chapters"] = chapters_json;
    if (deterioration) {
        j["deterioration"] = {{"clinical_deterioration", deterioration->clinical_deterioration},
                              {"icu", deterioration->icu},
                              {"mortality", deterioration->mortality}};
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write eval report: " + path);
    out << j.dump(2) << "\n";
}

EvalReport EvalReport::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open eval report: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("invalid eval report json: " + std::string(e.what()));
    }
    EvalReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.n_rows = j.at("n_rows").get<std::size_t>();
    r.macro = j.at("macro").at("auroc").get<double>();
    r.macro_lo = j.at("macro").at("ci_lo").get<double>();
    r.macro_hi = j.at("macro").at("ci_hi").get<double>();
    for (const auto& entry : j.at("labels")) {
        LabelResult lr;
        lr.name = entry.at("name").get<std::string>();
        if (!entry.at("auroc").is_null()) {
            lr.auroc = entry.at("auroc").get<double>();
            lr.ci_lo = entry.at("ci_lo").get<double>();
            lr.ci_hi = entry.at("ci_hi").get<double>();
        }
        lr.n_pos = entry.at("n_pos").get<std::size_t>();
        lr.n_neg = entry.at("n_neg").get<std::size_t>();
        r.per_label.push_back(std::move(lr));
    }
    for (const auto& entry : j.at("chapters")) {
        ChapterRow c;
        c.chapter = entry.at("chapter").get<std::string>();
        c.name = entry.at("name").get<std::string>();
        c.mean_auroc = entry.at("mean_auroc").get<double>();
        c.n_labels = entry.at("n_labels").get<std::size_t>();
        c.n_above_080 = entry.at("n_ci_above_080").get<std::size_t>();
        r.chapters.push_back(std::move(c));
    }
    if (j.contains("deterioration")) {
        DeteriorationReport d;
        d.clinical_deterioration = j.at("deterioration").at("clinical_deterioration").get<double>();
        d.icu = j.at("deterioration").at("icu").get<double>();
        d.mortality = j.at("deterioration").at("mortality").get<double>();
        r.deterioration = d;
    }
    return r;
}

namespace {

std::string fixed4(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

}  // namespace

std::string EvalReport::text() const {
    std::ostringstream os;
    os << "scenario: " << scenario << "\n";
    os << "evaluated rows (first record per visit): " << n_rows << "\n";
    os << "macro AUROC " << fixed4(macro) << " (" << fixed4(macro_lo) << ", " << fixed4(macro_hi)
       << ")\n\n";

    std::size_t name_width = 5;
    for (const auto& r : per_label) name_width = std::max(name_width, r.name.size());
    os << std::left << std::setw(static_cast<int>(name_width) + 2) << "label"
       << "auroc   ci_lo   ci_hi   n_pos  n_neg\n";
    for (const auto& r : per_label) {
        os << std::left << std::setw(static_cast<int>(name_width) + 2) << r.name;
        if (r.auroc) {
            os << fixed4(*r.auroc) << "  " << fixed4(r.ci_lo) << "  " << fixed4(r.ci_hi);
        } else {
            os << "undefined                ";
        }
        os << "  " << std::setw(5) << r.n_pos << "  " << r.n_neg << "\n";
    }
    if (!chapters.empty()) {
        os << "\nICD chapters (mean AUROC over defined labels; labels with CI lower bound > "
              "0.80)\n";
        for (const auto& c : chapters) {
            os << "  " << std::left << std::setw(6) << c.chapter << fixed4(c.mean_auroc) << "  ("
               << c.n_above_080 << "/" << c.n_labels << ")  " << c.name << "\n";
        }
    }
    if (deterioration) {
        os << "\ndeterioration category means\n";
        os << "  clinical deterioration  " << fixed4(deterioration->clinical_deterioration) << "\n";
        os << "  icu admission           " << fixed4(deterioration->icu) << "\n";
        os << "  mortality               " << fixed4(deterioration->mortality) << "\n";
    }
    return os.str();
}

}  // namespace edbench::eval
