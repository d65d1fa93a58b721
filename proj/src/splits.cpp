#include "edbench/splits.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "edbench/csv.hpp"

namespace edbench::splits {

int FoldAssignment::fold_of(const std::string& subject_id) const {
    auto it = fold_by_subject.find(subject_id);
    if (it == fold_by_subject.end()) {
        throw DataError("subject has no fold assignment: " + subject_id);
    }
    return it->second;
}

std::vector<PatientKeys> stratification_keys(const std::vector<cohort::Sample>& samples,
                                             const std::map<std::string, const StayRecord*>& stays,
                                             const labels::LabelMatrix& label_matrix,
                                             const labels::LabelSpace& space) {
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < label_matrix.sample_ids.size(); ++i) {
        row_of[label_matrix.sample_ids[i]] = i;
    }

    std::map<std::string, std::set<std::string>> keys_by_subject;
    for (const auto& s : samples) {
        auto& keys = keys_by_subject[s.subject_id];
        auto stay_it = stays.find(s.stay_id);
        if (stay_it != stays.end()) {
            const StayRecord& stay = *stay_it->second;
            if (!stay.gender.empty()) keys.insert("gender:" + stay.gender);
            keys.insert("age:" + cohort::age_bin(stay.age));
        }
        auto row_it = row_of.find(s.sample_id);
        if (row_it == row_of.end()) continue;
        for (std::size_t c = 0; c < space.n_diagnosis; ++c) {
            if (label_matrix.at(row_it->second, c) == labels::kPositive) {
                keys.insert("dx:" + space.names[c]);
            }
        }
    }

    std::vector<PatientKeys> out;
    out.reserve(keys_by_subject.size());
    for (const auto& [subject, keys] : keys_by_subject) {
        out.push_back({subject, std::vector<std::string>(keys.begin(), keys.end())});
    }
    return out;
}

FoldAssignment assign_folds(const std::vector<PatientKeys>& patients, int n_folds,
                            std::uint64_t seed) {
    if (n_folds <= 0) throw UsageError("n_folds must be positive");
    if (static_cast<std::size_t>(n_folds) > patients.size()) {
        throw DataError("n_folds (" + std::to_string(n_folds) + ") exceeds patient count (" +
                        std::to_string(patients.size()) + ")");
    }

    // Deterministic base order, then a seeded shuffle so tie-breaking is
    // randomized but reproducible.
    std::vector<std::size_t> order(patients.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return patients[a].subject_id < patients[b].subject_id;
    });
    Rng rng(seed);
    rng.shuffle(order);

    // Global key counts and per-fold desired counts.
    std::map<std::string, double> total_by_key;
    for (const auto& p : patients) {
        for (const auto& k : p.keys) total_by_key[k] += 1.0;
    }

    std::vector<std::map<std::string, double>> desire(static_cast<std::size_t>(n_folds));
    for (const auto& [key, total] : total_by_key) {
        for (int f = 0; f < n_folds; ++f) {
            desire[static_cast<std::size_t>(f)][key] = total / n_folds;
        }
    }
    std::vector<double> capacity(static_cast<std::size_t>(n_folds),
                                 static_cast<double>(patients.size()) / n_folds);

    std::vector<bool> assigned(patients.size(), false);
    FoldAssignment folds;
    folds.n_folds = n_folds;

    // Remaining unassigned patients carrying each key.
    std::map<std::string, std::size_t> remaining_by_key;
    for (const auto& p : patients) {
        for (const auto& k : p.keys) remaining_by_key[k] += 1;
    }

    auto place = [&](std::size_t patient_idx) {
        const PatientKeys& p = patients[patient_idx];
        int best_fold = 0;
        double best_score = -1e300;
        for (int f = 0; f < n_folds; ++f) {
            auto uf = static_cast<std::size_t>(f);
            double score = 0.0;
            for (const auto& k : p.keys) score += desire[uf][k];
            // Capacity dominates ties among equally-demanding folds.
            score += capacity[uf] * 1e-6;
            if (score > best_score + 1e-12) {
                best_score = score;
                best_fold = f;
            }
        }
        auto uf = static_cast<std::size_t>(best_fold);
        for (const auto& k : p.keys) {
            desire[uf][k] -= 1.0;
            remaining_by_key[k] -= 1;
        }
        capacity[uf] -= 1.0;
        assigned[patient_idx] = true;
        folds.fold_by_subject[p.subject_id] = best_fold;
    };

    std::size_t n_assigned = 0;
    while (n_assigned < patients.size()) {
        // Scarcest key still represented among the unassigned.
        std::string scarcest;
        std::size_t scarcest_count = SIZE_MAX;
        for (const auto& [key, count] : remaining_by_key) {
            if (count > 0 && count < scarcest_count) {
                scarcest_count = count;
                scarcest = key;
            }
        }
        if (scarcest.empty()) {
            // Patients without keys: fill by remaining capacity.
            for (std::size_t i : order) {
                if (assigned[i]) continue;
                place(i);
                ++n_assigned;
            }
            break;
        }
        for (std::size_t i : order) {
            if (assigned[i]) continue;
            const auto& keys = patients[i].keys;
            if (std::find(keys.begin(), keys.end(), scarcest) == keys.end()) continue;
            place(i);
            ++n_assigned;
        }
    }
    return folds;
}

void write_fold_file(const std::string& path, const FoldAssignment& folds) {
    CsvWriter w({"subject_id", "fold"});
    for (const auto& [subject, fold] : folds.fold_by_subject) {
        w.add_row({subject, std::to_string(fold)});
    }
    w.write_file(path);
}

FoldAssignment read_fold_file(const std::string& path) {
    CsvTable t = CsvTable::read_file(path);
    std::size_t c_subject = t.column("subject_id");
    std::size_t c_fold = t.column("fold");
    FoldAssignment folds;
    int max_fold = -1;
    for (std::size_t i = 0; i < t.row_count(); ++i) {
        std::string subject = trim(t.cell(i, c_subject));
        auto fold = try_parse_int(trim(t.cell(i, c_fold)));
        if (subject.empty() || !fold || *fold < 0) {
            throw FormatError("invalid fold file row " + std::to_string(i) + " in " + path);
        }
        if (!folds.fold_by_subject.emplace(subject, static_cast<int>(*fold)).second) {
            throw FormatError("duplicate subject in fold file: " + subject);
        }
        max_fold = std::max(max_fold, static_cast<int>(*fold));
    }
    folds.n_folds = max_fold + 1;
    return folds;
}

void apply_folds(std::vector<cohort::Sample>& samples, const FoldAssignment& folds) {
    for (auto& s : samples) s.fold = folds.fold_of(s.subject_id);
}

Role role_of(int fold, int val_fold, int test_fold) {
    if (fold == val_fold) return Role::Val;
    if (fold == test_fold) return Role::Test;
    return Role::Train;
}

SplitIndices split_indices(const std::vector<cohort::Sample>& samples, int val_fold,
                           int test_fold) {
    SplitIndices out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].fold < 0) throw DataError("sample without fold: " + samples[i].sample_id);
        switch (role_of(samples[i].fold, val_fold, test_fold)) {
            case Role::Train: out.train.push_back(i); break;
            case Role::Val: out.val.push_back(i); break;
            case Role::Test: out.test.push_back(i); break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

namespace {

double column_median(const std::vector<std::size_t>& rows, std::size_t col, std::size_t width,
                     const std::vector<double>& data, bool* observed) {
    std::vector<double> values;
    values.reserve(rows.size());
    for (std::size_t r : rows) {
        double v = data[r * width + col];
        if (!is_missing(v)) values.push_back(v);
    }
    *observed = !values.empty();
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    return (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

Imputer fit_imputer(const features::FeatureMatrix& matrix,
                    const std::vector<std::size_t>& train_rows) {
    Imputer imp;
    const std::size_t n_num = matrix.schema.numeric_names.size();
    const std::size_t n_ecg = matrix.schema.ecg_names.size();
    imp.numeric_medians.resize(n_num);
    imp.ecg_medians.resize(n_ecg);
    for (std::size_t c = 0; c < n_num; ++c) {
        bool observed = false;
        imp.numeric_medians[c] = column_median(train_rows, c, n_num, matrix.numeric,
                                               &observed);
        if (!observed) {
            imp.warnings.push_back("column fully missing in train; imputing 0: " +
                                   matrix.schema.numeric_names[c]);
        }
    }
    for (std::size_t c = 0; c < n_ecg; ++c) {
        bool observed = false;
        imp.ecg_medians[c] = column_median(train_rows, c, n_ecg, matrix.ecg, &observed);
        if (!observed) {
            imp.warnings.push_back("column fully missing in train; imputing 0: ecg_" +
                                   matrix.schema.ecg_names[c]);
        }
    }
    return imp;
}

ImputedMatrix apply_imputer(const features::FeatureMatrix& matrix, const Imputer& imputer) {
    const std::size_t n_num = matrix.schema.numeric_names.size();
    const std::size_t n_ecg = matrix.schema.ecg_names.size();
    if (imputer.numeric_medians.size() != n_num || imputer.ecg_medians.size() != n_ecg) {
        throw DataError("imputer shape does not match feature matrix");
    }
    ImputedMatrix out;
    out.numeric = matrix.numeric;
    out.ecg = matrix.ecg;
    out.numeric_mask.assign(matrix.numeric.size(), 0);
    out.ecg_mask.assign(matrix.ecg.size(), 0);
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        for (std::size_t c = 0; c < n_num; ++c) {
            std::size_t i = r * n_num + c;
            if (is_missing(out.numeric[i])) {
                out.numeric[i] = imputer.numeric_medians[c];
                out.numeric_mask[i] = 1;
            }
        }
        for (std::size_t c = 0; c < n_ecg; ++c) {
            std::size_t i = r * n_ecg + c;
            if (is_missing(out.ecg[i])) {
                out.ecg[i] = imputer.ecg_medians[c];
                out.ecg_mask[i] = 1;
            }
        }
    }
    return out;
}

}  // namespace edbench::splits
