#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edbench/cohort.hpp"
#include "edbench/features.hpp"
#include "edbench/labels.hpp"

namespace edbench::splits {

struct FoldAssignment {
    int n_folds = 0;
    std::map<std::string, int> fold_by_subject;

    int fold_of(const std::string& subject_id) const;
};

/// Stratification keys for one patient: gender, age bin, and every positive
/// diagnosis code across their samples.
struct PatientKeys {
    std::string subject_id;
    std::vector<std::string> keys;
};

/// Greedy iterative multi-key stratification at patient granularity
/// (scarcest key first, fold with the largest remaining demand wins).
FoldAssignment assign_folds(const std::vector<PatientKeys>& patients, int n_folds,
                            std::uint64_t seed);

/// Builds PatientKeys from samples + stays + diagnosis labels.
std::vector<PatientKeys> stratification_keys(const std::vector<cohort::Sample>& samples,
                                             const std::map<std::string, const StayRecord*>& stays,
                                             const labels::LabelMatrix& label_matrix,
                                             const labels::LabelSpace& space);

void write_fold_file(const std::string& path, const FoldAssignment& folds);
/// External fold file (subject_id, fold) taken verbatim.
FoldAssignment read_fold_file(const std::string& path);

/// Applies folds to samples in place (by subject).
void apply_folds(std::vector<cohort::Sample>& samples, const FoldAssignment& folds);

enum class Role { Train, Val, Test };

/// 18:1:1 role layout: fold == val_fold -> Val, fold == test_fold -> Test,
/// all other folds -> Train.
Role role_of(int fold, int val_fold, int test_fold);

/// Row indices of the matrix per role, given per-sample folds.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};
SplitIndices split_indices(const std::vector<cohort::Sample>& samples, int val_fold, int test_fold);

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

struct Imputer {
    std::vector<double> numeric_medians;  // one per numeric column
    std::vector<double> ecg_medians;      // one per ecg column
    std::vector<std::string> warnings;    // columns with no observed train value
};

/// Per-column median over observed train-row values; columns with no
/// observed value impute 0 with a warning.
Imputer fit_imputer(const features::FeatureMatrix& matrix,
                    const std::vector<std::size_t>& train_rows);

struct ImputedMatrix {
    std::vector<double> numeric;      // filled, row-major
    std::vector<double> ecg;          // filled, row-major
    std::vector<std::uint8_t> numeric_mask;  // 1 where value was imputed
    std::vector<std::uint8_t> ecg_mask;
};

/// Fills every row with the train medians; mask bits mark replacements.
ImputedMatrix apply_imputer(const features::FeatureMatrix& matrix, const Imputer& imputer);

}  // namespace edbench::splits
