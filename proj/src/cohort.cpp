#include "edbench/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "edbench/csv.hpp"

namespace edbench::cohort {

std::string age_bin(double age) {
    if (age < 50.0) return "18-49";
    if (age < 65.0) return "50-64";
    if (age < 78.0) return "65-77";
    return "78+";
}

LinkResult link_ecg_to_stays(const std::vector<StayRecord>& stays,
                             const std::vector<EcgManifestRow>& ecgs) {
    LinkResult out;

    // subject -> stays sorted by intime, so multi-stay ties resolve to the
    // earliest arrival deterministically.
    std::map<std::string, std::vector<const StayRecord*>> stays_by_subject;
    for (const auto& s : stays) stays_by_subject[s.subject_id].push_back(&s);
    for (auto& [_, list] : stays_by_subject) {
        std::sort(list.begin(), list.end(), [](const StayRecord* a, const StayRecord* b) {
            if (a->intime != b->intime) return a->intime < b->intime;
            return a->stay_id < b->stay_id;
        });
    }

    for (const auto& ecg : ecgs) {
        auto it = stays_by_subject.find(ecg.subject_id);
        if (it == stays_by_subject.end()) continue;
        std::vector<const StayRecord*> matches;
        for (const StayRecord* stay : it->second) {
            Timestamp window_end = stay->intime + kWindowSeconds;
            if (ecg.ecg_time >= stay->intime && ecg.ecg_time <= window_end) {
                matches.push_back(stay);
            }
        }
        if (matches.empty()) continue;
        if (matches.size() > 1) {
            out.log.push_back("ecg " + ecg.record_id + " matches " +
                              std::to_string(matches.size()) +
                              " stays; keeping earliest intime " + matches[0]->stay_id);
        }
        const StayRecord* stay = matches[0];
        if (stay->age < kMinAge) continue;

        Sample s;
        s.sample_id = stay->stay_id + "_" + ecg.record_id;
        s.subject_id = stay->subject_id;
        s.stay_id = stay->stay_id;
        s.hadm_id = stay->hadm_id;
        s.record_id = ecg.record_id;
        s.arrival = stay->intime;
        s.window_end = stay->intime + kWindowSeconds;
        s.ecg_time = ecg.ecg_time;
        out.samples.push_back(std::move(s));
    }

    std::sort(out.samples.begin(), out.samples.end(), [](const Sample& a, const Sample& b) {
        if (a.stay_id != b.stay_id) return a.stay_id < b.stay_id;
        if (a.ecg_time != b.ecg_time) return a.ecg_time < b.ecg_time;
        return a.record_id < b.record_id;
    });
    std::string current_stay;
    for (auto& s : out.samples) {
        s.is_first_of_visit = (s.stay_id != current_stay);
        current_stay = s.stay_id;
    }
    return out;
}

CohortStats cohort_stats(const std::vector<Sample>& samples,
                         const std::vector<StayRecord>& stays) {
    if (samples.empty()) throw DataError("empty cohort");

    std::map<std::string, const StayRecord*> stay_by_id;
    for (const auto& s : stays) stay_by_id[s.stay_id] = &s;

    CohortStats stats;
    stats.samples = samples.size();
    std::set<std::string> subjects;
    std::set<std::string> visits;
    for (const auto& s : samples) {
        subjects.insert(s.subject_id);
        if (!visits.insert(s.stay_id).second) continue;
        auto it = stay_by_id.find(s.stay_id);
        if (it == stay_by_id.end()) {
            throw DataError("sample references unknown stay_id: " + s.stay_id);
        }
        const StayRecord& stay = *it->second;
        stats.by_gender[stay.gender.empty() ? "unknown" : stay.gender]++;
        stats.by_race[stay.race.empty() ? "unknown" : stay.race]++;
        stats.by_age_bin[age_bin(stay.age)]++;
    }
    stats.patients = subjects.size();
    stats.visits = visits.size();
    return stats;
}

std::string CohortStats::text() const {
    std::ostringstream os;
    os << "patients " << patients << ", visits " << visits << ", samples " << samples << "\n";
    auto block = [&](const char* title, const std::map<std::string, std::size_t>& m) {
        os << title << ":\n";
        for (const auto& [key, n] : m) {
            double pct = visits ? 100.0 * static_cast<double>(n) / static_cast<double>(visits) : 0.0;
            os << "  " << key << "  " << n << " (" << fmt_double(std::round(pct * 100.0) / 100.0)
               << "%)\n";
        }
    };
    block("gender", by_gender);
    block("age", by_age_bin);
    block("race", by_race);
    return os.str();
}

void write_sample_index(const std::string& path, const std::vector<Sample>& samples) {
    CsvWriter w({"sample_id", "subject_id", "stay_id", "hadm_id", "record_id", "arrival",
                 "window_end", "is_first_of_visit", "fold"});
    for (const auto& s : samples) {
        w.add_row({s.sample_id, s.subject_id, s.stay_id, s.hadm_id, s.record_id,
                   format_timestamp(s.arrival), format_timestamp(s.window_end),
                   s.is_first_of_visit ? "1" : "0", std::to_string(s.fold)});
    }
    w.write_file(path);
}

std::vector<Sample> read_sample_index(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_sample = t.column("sample_id");
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_stay = t.column("stay_id");
    std::size_t c_hadm = t.column("hadm_id");
    std::size_t c_record = t.column("record_id");
    std::size_t c_arrival = t.column("arrival");
    std::size_t c_end = t.column("window_end");
    std::size_t c_first = t.column("is_first_of_visit");
    std::size_t c_fold = t.column("fold");

    std::vector<Sample> out;
    out.reserve(t.row_count());
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        Sample s;
        s.sample_id = t.cell(i, c_sample);
        s.subject_id = t.cell(i, c_subject);
        s.stay_id = t.cell(i, c_stay);
        s.hadm_id = t.cell(i, c_hadm);
        s.record_id = t.cell(i, c_record);
        s.arrival = parse_timestamp(t.cell(i, c_arrival));
        s.window_end = parse_timestamp(t.cell(i, c_end));
        s.ecg_time = s.arrival;  // not persisted; only needed during linking
        s.is_first_of_visit = t.cell(i, c_first) == "1";
        auto fold = try_parse_int(t.cell(i, c_fold));
        s.fold = fold ? static_cast<int>(*fold) : -1;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace edbench::cohort
