#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace edbench::gbdt {

struct TreeConfig {
    int n_trees = 50;
    int max_depth = 3;
    double learning_rate = 0.3;
    double lambda = 1.0;            // L2 on leaf weights
    double min_child_weight = 1.0;  // hessian mass per child
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    bool missing_left = true;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf weight (shrinkage applied)
};

struct Tree {
    std::vector<TreeNode> nodes;
    double predict(const double* x) const;
};

/// Newton-boosted binary classifier with logistic loss and learned default
/// directions for missing values (NaN).
struct GbdtModel {
    TreeConfig config;
    double base_score = 0.0;  // initial log-odds
    std::vector<Tree> trees;

    double predict_logit(const double* x) const;
    double predict_proba(const double* x) const;
    nlohmann::json to_json() const;
    static GbdtModel from_json(const nlohmann::json& j);
};

/// X row-major n_rows x n_cols, NaN = missing; y in {0,1}; rows selects the
/// training subset. Deterministic: exact greedy splits, ties resolve to the
/// lowest feature index and threshold.
GbdtModel train_gbdt(const double* X, std::size_t n_rows, std::size_t n_cols,
                     const std::vector<std::int8_t>& y, const std::vector<std::size_t>& rows,
                     const TreeConfig& config);

}  // namespace edbench::gbdt
