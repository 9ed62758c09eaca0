#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "sasvfuse/backends/config.hpp"

namespace sasvfuse {

struct TreeNode {
    std::int32_t feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;     ///< x[feature] <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;         ///< positive-class fraction at a leaf
};

struct CartTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        std::int32_t i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
};

/// score(x) = mean over trees of the leaf positive fraction, in [0, 1].
struct ForestModel {
    std::vector<CartTree> trees;

    double score(std::span<const double> x) const {
        double s = 0.0;
        for (const auto& t : trees) s += t.predict(x);
        return s / static_cast<double>(trees.size());
    }
};

namespace detail {

struct SplitCandidate {
    double gain = 0.0;  ///< decrease of weighted Gini impurity
    std::int32_t feature = -1;
    double threshold = 0.0;
};

inline double gini(double pos, double total) {
    if (total <= 0) return 0.0;
    const double p = pos / total;
    return 2.0 * p * (1.0 - p);
}

/// Grows one CART tree on the samples listed in `sample` (bootstrap indices,
/// duplicates allowed). Candidate features are visited in ascending index
/// order and only a strictly better gain replaces the incumbent, which breaks
/// ties by lowest feature and then lowest threshold.
class CartBuilder {
public:
    CartBuilder(const Matrix& X, std::span<const int> y, std::size_t max_features, std::size_t min_leaf,
                std::uint64_t seed)
        : X_(X), y_(y), max_features_(max_features), min_leaf_(std::max<std::size_t>(1, min_leaf)), rng_(seed) {
        features_.resize(static_cast<std::size_t>(X.cols()));
        std::iota(features_.begin(), features_.end(), 0);
    }

    CartTree build(std::vector<std::size_t> sample) {
        CartTree tree;
        tree.nodes.emplace_back();
        struct Pending { std::int32_t node; std::size_t begin, end; };
        samples_ = std::move(sample);
        std::vector<Pending> stack{{0, 0, samples_.size()}};
        while (!stack.empty()) {
            const Pending p = stack.back();
            stack.pop_back();
            double pos = 0;
            for (std::size_t k = p.begin; k < p.end; ++k) pos += y_[samples_[k]] == 1 ? 1 : 0;
            const double total = static_cast<double>(p.end - p.begin);
            tree.nodes[static_cast<std::size_t>(p.node)].value = total > 0 ? pos / total : 0.0;
            if (pos == 0 || pos == total || p.end - p.begin < 2 * min_leaf_) continue;

            const SplitCandidate best = find_split(p.begin, p.end, pos);
            if (best.feature < 0) continue;
            auto mid = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(p.begin),
                                      samples_.begin() + static_cast<std::ptrdiff_t>(p.end), [&](std::size_t s) {
                                          return X_(static_cast<Eigen::Index>(s), best.feature) <= best.threshold;
                                      });
            const std::size_t m = static_cast<std::size_t>(mid - samples_.begin());
            const auto left = static_cast<std::int32_t>(tree.nodes.size());
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
            node.feature = best.feature;
            node.threshold = best.threshold;
            node.left = left;
            node.right = left + 1;
            stack.push_back({left + 1, m, p.end});
            stack.push_back({left, p.begin, m});
        }
        return tree;
    }

private:
    SplitCandidate find_split(std::size_t begin, std::size_t end, double pos_total) {
        const double total = static_cast<double>(end - begin);
        const double parent = gini(pos_total, total) * total;
        // sample max_features distinct features, then visit them in index order
        std::vector<std::size_t> chosen;
        const std::size_t mtry = std::min(max_features_, features_.size());
        for (std::size_t k = 0; k < mtry; ++k) {
            std::uniform_int_distribution<std::size_t> u(k, features_.size() - 1);
            std::swap(features_[k], features_[u(rng_)]);
        }
        chosen.assign(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry));
        std::sort(chosen.begin(), chosen.end());

        SplitCandidate best;
        std::vector<std::pair<double, int>> vals(end - begin);
        for (std::size_t f : chosen) {
            for (std::size_t k = begin; k < end; ++k) {
                vals[k - begin] = {X_(static_cast<Eigen::Index>(samples_[k]), static_cast<Eigen::Index>(f)),
                                   y_[samples_[k]]};
            }
            std::sort(vals.begin(), vals.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            double left_pos = 0;
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                left_pos += vals[k].second == 1 ? 1 : 0;
                if (vals[k].first == vals[k + 1].first) continue;
                const double nl = static_cast<double>(k + 1);
                const double nr = total - nl;
                if (nl < static_cast<double>(min_leaf_) || nr < static_cast<double>(min_leaf_)) continue;
                const double child = gini(left_pos, nl) * nl + gini(pos_total - left_pos, nr) * nr;
                const double gain = parent - child;
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = static_cast<std::int32_t>(f);
                    double thr = 0.5 * (vals[k].first + vals[k + 1].first);
                    if (thr >= vals[k + 1].first) thr = vals[k].first;  // midpoint rounded up
                    best.threshold = thr;
                }
            }
        }
        return best;
    }

    const Matrix& X_;
    std::span<const int> y_;
    std::size_t max_features_;
    std::size_t min_leaf_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> features_;
    std::vector<std::size_t> samples_;
};

}  // namespace detail

/// Bagged CART trees: bootstrap of size n, floor(sqrt(d)) candidate features per
/// split unless max_features is set, Gini impurity, grown to purity. Tree t is
/// seeded from (seed, t) so results do not depend on the thread count.
/// A bootstrap holding a single class is redrawn (up to 64 times), since it
/// would only yield a constant tree.
inline ForestModel train_random_forest(const Matrix& X, std::span<const int> y, const TrainConfig& cfg) {
    detail::check_training_data(X, y, "backends/random_forest", false);
    if (cfg.n_trees == 0) throw TrainError("backends/random_forest", "n_trees must be positive");
    const auto n = static_cast<std::size_t>(X.rows());
    const auto d = static_cast<std::size_t>(X.cols());
    const std::size_t mtry =
        cfg.max_features > 0 ? cfg.max_features
                             : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(double(d)))));
    ForestModel forest;
    forest.trees.resize(cfg.n_trees);
    parallel_for(cfg.n_trees, [&](std::size_t t) {
        const std::uint64_t tree_seed = detail::mix_seed(cfg.seed ^ detail::mix_seed(t));
        std::mt19937_64 rng(tree_seed);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<std::size_t> sample(n);
        for (int attempt = 0; attempt < 64; ++attempt) {
            std::size_t pos = 0;
            for (auto& s : sample) {
                s = pick(rng);
                pos += y[s] == 1 ? 1 : 0;
            }
            if (pos > 0 && pos < n) break;
        }
        detail::CartBuilder builder(X, y, mtry, cfg.min_leaf, detail::mix_seed(tree_seed));
        forest.trees[t] = builder.build(std::move(sample));
    });
    return forest;
}

}  // namespace sasvfuse
