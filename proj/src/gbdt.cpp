#include "edbench/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "edbench/core.hpp"
#include "edbench/nn.hpp"

using nlohmann::json;

namespace edbench::gbdt {

double Tree::predict(const double* x) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const TreeNode& n = nodes[static_cast<std::size_t>(node)];
        double v = x[n.feature];
        bool go_left = std::isnan(v) ? n.missing_left : v < n.threshold;
        node = go_left ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(node)].value;
}

double GbdtModel::predict_logit(const double* x) const {
    double z = base_score;
    for (const auto& tree : trees) z += tree.predict(x);
    return z;
}

double GbdtModel::predict_proba(const double* x) const { return nn::sigmoid(predict_logit(x)); }

namespace {

struct SplitChoice {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    bool missing_left = true;
};

double leaf_objective(double g, double h, double lambda) { return g * g / (h + lambda); }

}  // namespace

GbdtModel train_gbdt(const double* X, std::size_t n_rows, std::size_t n_cols,
                     const std::vector<std::int8_t>& y, const std::vector<std::size_t>& rows,
                     const TreeConfig& config) {
    if (rows.empty()) throw DataError("train_gbdt: empty row subset");
    if (y.size() != n_rows) throw DataError("train_gbdt: label length mismatch");

    GbdtModel model;
    model.config = config;

    double pos = 0.0;
    for (std::size_t r : rows) pos += y[r] == 1 ? 1.0 : 0.0;
    double prior = std::clamp(pos / static_cast<double>(rows.size()), 1e-6, 1.0 - 1e-6);
    model.base_score = std::log(prior / (1.0 - prior));

    const std::size_t n = rows.size();

    // Per feature: training-subset indices (into `rows`) sorted by value,
    // missing excluded. Computed once.
    std::vector<std::vector<std::uint32_t>> sorted_by_feature(n_cols);
    for (std::size_t f = 0; f < n_cols; ++f) {
        auto& order = sorted_by_feature[f];
        order.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            if (!std::isnan(X[rows[i] * n_cols + f])) order.push_back(i);
        }
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            double va = X[rows[a] * n_cols + f];
            double vb = X[rows[b] * n_cols + f];
            if (va != vb) return va < vb;
            return a < b;
        });
    }

    std::vector<double> logits(n, model.base_score);
    std::vector<double> grad(n);
    std::vector<double> hess(n);
    std::vector<int> node_of(n);

    for (int tree_i = 0; tree_i < config.n_trees; ++tree_i) {
        for (std::size_t i = 0; i < n; ++i) {
            double p = nn::sigmoid(logits[i]);
            grad[i] = p - (y[rows[i]] == 1 ? 1.0 : 0.0);
            hess[i] = std::max(p * (1.0 - p), 1e-16);
        }

        Tree tree;
        tree.nodes.push_back(TreeNode{});
        std::fill(node_of.begin(), node_of.end(), 0);
        std::vector<int> frontier = {0};  // node ids open at the current depth

        struct NodeStats {
            double g = 0.0;
            double h = 0.0;
        };

        for (int depth = 0; depth < config.max_depth && !frontier.empty(); ++depth) {
            std::size_t max_node = tree.nodes.size();
            std::vector<bool> in_frontier(max_node, false);
            for (int node : frontier) in_frontier[static_cast<std::size_t>(node)] = true;
            std::vector<NodeStats> totals(max_node);
            for (std::size_t i = 0; i < n; ++i) {
                if (node_of[i] < 0) continue;
                totals[static_cast<std::size_t>(node_of[i])].g += grad[i];
                totals[static_cast<std::size_t>(node_of[i])].h += hess[i];
            }

            std::vector<SplitChoice> best(max_node);

            // One pass per feature over its global sorted order, maintaining
            // per-node prefix sums of the non-missing rows.
            std::vector<NodeStats> known_totals(max_node);
            for (std::size_t f = 0; f < n_cols; ++f) {
                const auto& order = sorted_by_feature[f];
                for (auto& s : known_totals) s = NodeStats{};
                for (std::uint32_t i : order) {
                    if (node_of[i] < 0) continue;
                    auto nd = static_cast<std::size_t>(node_of[i]);
                    known_totals[nd].g += grad[i];
                    known_totals[nd].h += hess[i];
                }

                std::vector<NodeStats> left(max_node);
                std::vector<double> last_value(max_node,
                                               -std::numeric_limits<double>::infinity());
                std::vector<bool> has_last(max_node, false);
                for (std::uint32_t i : order) {
                    int node = node_of[i];
                    if (node < 0) continue;
                    auto nd = static_cast<std::size_t>(node);
                    if (!in_frontier[nd]) continue;
                    double value = X[rows[i] * n_cols + f];
                    if (has_last[nd] && value > last_value[nd]) {
                        // candidate split between last_value and value
                        double threshold = 0.5 * (last_value[nd] + value);
                        const NodeStats& total = totals[nd];
                        const NodeStats& known = known_totals[nd];
                        double g_missing = total.g - known.g;
                        double h_missing = total.h - known.h;
                        double parent_obj = leaf_objective(total.g, total.h, config.lambda);
                        for (int missing_left = 1; missing_left >= 0; --missing_left) {
                            double gl = left[nd].g + (missing_left ? g_missing : 0.0);
                            double hl = left[nd].h + (missing_left ? h_missing : 0.0);
                            double gr = total.g - gl;
                            double hr = total.h - hl;
                            if (hl < config.min_child_weight || hr < config.min_child_weight) {
                                continue;
                            }
                            double gain = 0.5 * (leaf_objective(gl, hl, config.lambda) +
                                                 leaf_objective(gr, hr, config.lambda) -
                                                 parent_obj);
                            SplitChoice& b = best[nd];
                            if (gain > b.gain + 1e-12) {
                                b.gain = gain;
                                b.feature = static_cast<int>(f);
                                b.threshold = threshold;
                                b.missing_left = missing_left == 1;
                            }
                        }
                    }
                    left[nd].g += grad[i];
                    left[nd].h += hess[i];
                    last_value[nd] = value;
                    has_last[nd] = true;
                }
            }

            // Materialize accepted splits.
            std::vector<int> next_frontier;
            std::vector<int> remap(max_node, -1);
            for (int node : frontier) {
                auto nd = static_cast<std::size_t>(node);
                if (best[nd].feature < 0 || best[nd].gain <= 1e-12) continue;
                // Grow both children before touching the parent: push_back
                // may reallocate the node array.
                int left_child = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{});
                tree.nodes.push_back(TreeNode{});
                TreeNode& parent = tree.nodes[nd];
                parent.feature = best[nd].feature;
                parent.threshold = best[nd].threshold;
                parent.missing_left = best[nd].missing_left;
                parent.left = left_child;
                parent.right = left_child + 1;
                next_frontier.push_back(left_child);
                next_frontier.push_back(left_child + 1);
                remap[nd] = left_child;
            }
            if (next_frontier.empty()) break;

            for (std::size_t i = 0; i < n; ++i) {
                int node = node_of[i];
                if (node < 0) continue;
                auto nd = static_cast<std::size_t>(node);
                if (remap[nd] < 0) continue;
                const TreeNode& parent = tree.nodes[nd];
                double v = X[rows[i] * n_cols + parent.feature];
                bool go_left = std::isnan(v) ? parent.missing_left : v < parent.threshold;
                node_of[i] = go_left ? parent.left : parent.right;
            }
            frontier = std::move(next_frontier);
        }

        // Leaf weights from accumulated stats.
        {
            std::vector<double> leaf_g(tree.nodes.size(), 0.0);
            std::vector<double> leaf_h(tree.nodes.size(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                auto nd = static_cast<std::size_t>(node_of[i]);
                leaf_g[nd] += grad[i];
                leaf_h[nd] += hess[i];
            }
            for (std::size_t nd = 0; nd < tree.nodes.size(); ++nd) {
                if (tree.nodes[nd].feature >= 0) continue;
                tree.nodes[nd].value =
                    -config.learning_rate * leaf_g[nd] / (leaf_h[nd] + config.lambda);
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            logits[i] += tree.nodes[static_cast<std::size_t>(node_of[i])].value;
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

json GbdtModel::to_json() const {
    json j;
    j["base_score"] = base_score;
    j["config"] = {{"n_trees", config.n_trees},
                   {"max_depth", config.max_depth},
                   {"learning_rate", config.learning_rate},
                   {"lambda", config.lambda},
                   {"min_child_weight", config.min_child_weight}};
    json trees_json = json::array();
    for (const auto& tree : trees) {
        json nodes = json::array();
        for (const auto& n : tree.nodes) {
            nodes.push_back({{"f", n.feature},
                             {"t", n.threshold},
                             {"ml", n.missing_left},
                             {"l", n.left},
                             {"r", n.right},
                             {"v", n.value}});
        }
        trees_json.push_back(std::move(nodes));
    }
    j["trees"] = trees_json;
    return j;
}

GbdtModel GbdtModel::from_json(const json& j) {
    GbdtModel m;
    m.base_score = j.at("base_score").get<double>();
    const auto& cfg = j.at("config");
    m.config.n_trees = cfg.at("n_trees").get<int>();
    m.config.max_depth = cfg.at("max_depth").get<int>();
    m.config.learning_rate = cfg.at("learning_rate").get<double>();
    m.config.lambda = cfg.at("lambda").get<double>();
    m.config.min_child_weight = cfg.at("min_child_weight").get<double>();
    for (const auto& tree_json : j.at("trees")) {
        Tree tree;
        for (const auto& n : tree_json) {
            TreeNode node;
            node.feature = n.at("f").get<int>();
            node.threshold = n.at("t").get<double>();
            node.missing_left = n.at("ml").get<bool>();
            node.left = n.at("l").get<int>();
            node.right = n.at("r").get<int>();
            node.value = n.at("v").get<double>();
            tree.nodes.push_back(node);
        }
        m.trees.push_back(std::move(tree));
    }
    return m;
}

}  // namespace edbench::gbdt
