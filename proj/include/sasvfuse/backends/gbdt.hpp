#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "sasvfuse/backends/config.hpp"
#include "sasvfuse/backends/linear.hpp"

namespace sasvfuse {

/// Symmetric tree: level l tests x[features[l]] > thresholds[l]; the outcomes
/// form the bits of the leaf index (level 0 is the most significant bit).
struct ObliviousTree {
    std::vector<std::int32_t> features;
    std::vector<double> thresholds;
    std::vector<double> leaf_values;

    std::size_t leaf_index(std::span<const double> x) const {
        std::size_t idx = 0;
        for (std::size_t l = 0; l < features.size(); ++l) {
            idx = (idx << 1) | (x[static_cast<std::size_t>(features[l])] > thresholds[l] ? 1u : 0u);
        }
        return idx;
    }
    double predict(std::span<const double> x) const { return leaf_values[leaf_index(x)]; }
};

/// score(x) = base + sum of tree outputs (shrinkage already folded into leaves); log-odds.
struct GbdtModel {
    double base_score = 0.0;
    std::vector<ObliviousTree> trees;

    double score(std::span<const double> x) const {
        double s = base_score;
        for (const auto& t : trees) s += t.predict(x);
        return s;
    }
};

namespace detail {

/// Candidate thresholds per feature: midpoints between quantiles of the distinct
/// values, at most max_borders of them. bins(i, f) counts the borders strictly
/// below x(i, f), so x > borders[f][b] <=> bins(i, f) > b.
struct Quantized {
    std::vector<std::vector<double>> borders;
    std::vector<std::vector<std::uint16_t>> bins;  ///< [feature][sample]
};

inline Quantized quantize(const Matrix& X, std::size_t max_borders) {
    Quantized q;
    const auto n = static_cast<std::size_t>(X.rows());
    const auto d = static_cast<std::size_t>(X.cols());
    q.borders.resize(d);
    q.bins.assign(d, std::vector<std::uint16_t>(n));
    max_borders = std::clamp<std::size_t>(max_borders, 1, 65534);
    for (std::size_t f = 0; f < d; ++f) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        auto& b = q.borders[f];
        if (v.size() > 1) {
            const std::size_t gaps = v.size() - 1;
            const std::size_t take = std::min(gaps, max_borders);
            for (std::size_t k = 0; k < take; ++k) {
                // evenly spaced gap indices across the distinct values
                const std::size_t g = take == gaps ? k : (k * gaps + gaps / 2) / take;
                const double mid = 0.5 * (v[g] + v[g + 1]);
                b.push_back(mid < v[g + 1] ? mid : v[g]);
            }
            b.erase(std::unique(b.begin(), b.end()), b.end());
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double x = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
            q.bins[f][i] = static_cast<std::uint16_t>(std::lower_bound(b.begin(), b.end(), x) - b.begin());
        }
    }
    return q;
}

inline double mean_logloss(std::span<const double> F, std::span<const int> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < F.size(); ++i) s += log1pexp_neg(y[i] == 1 ? F[i] : -F[i]);
    return s / static_cast<double>(F.size());
}

}  // namespace detail

struct GbdtSplit {
    std::int32_t feature = -1;
    std::size_t border = 0;
    double score = 0.0;
};

/// Best level split for an oblivious tree: maximizes sum over resulting leaves
/// of G^2 / (count + l2) where G sums the negative gradients. Scans features
/// and borders in ascending order, replacing only on a strictly larger score.
/// When `noise` is set, its draw is added to each candidate's score before comparing.
inline GbdtSplit best_oblivious_split(const detail::Quantized& q, std::span<const double> neg_grad,
                                      std::span<const std::size_t> leaf_of, std::size_t n_leaves, double l2,
                                      const std::function<double()>& noise = nullptr) {
    GbdtSplit best;
    best.score = -std::numeric_limits<double>::infinity();
    const std::size_t n = neg_grad.size();
    std::vector<double> gsum, cnt;
    for (std::size_t f = 0; f < q.borders.size(); ++f) {
        const std::size_t nb = q.borders[f].size();
        if (nb == 0) continue;
        const std::size_t bins = nb + 1;
        gsum.assign(n_leaves * bins, 0.0);
        cnt.assign(n_leaves * bins, 0.0);
        const auto& fb = q.bins[f];
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t cell = leaf_of[i] * bins + fb[i];
            gsum[cell] += neg_grad[i];
            cnt[cell] += 1.0;
        }
        std::vector<double> g_tot(n_leaves, 0.0), c_tot(n_leaves, 0.0);
        for (std::size_t l = 0; l < n_leaves; ++l) {
            for (std::size_t b = 0; b < bins; ++b) {
                g_tot[l] += gsum[l * bins + b];
                c_tot[l] += cnt[l * bins + b];
            }
        }
        std::vector<double> g_left(n_leaves, 0.0), c_left(n_leaves, 0.0);
        for (std::size_t b = 0; b < nb; ++b) {
            double score = 0.0;
            for (std::size_t l = 0; l < n_leaves; ++l) {
                g_left[l] += gsum[l * bins + b];
                c_left[l] += cnt[l * bins + b];
                const double gr = g_tot[l] - g_left[l];
                const double cr = c_tot[l] - c_left[l];
                score += g_left[l] * g_left[l] / (c_left[l] + l2) + gr * gr / (cr + l2);
            }
            if (noise) score += noise();
            if (score > best.score) {
                best.score = score;
                best.feature = static_cast<std::int32_t>(f);
                best.border = b;
            }
        }
    }
    return best;
}

/// Plain gradient boosting of symmetric trees under logistic loss. Leaves
/// take learning_rate * G / (count + l2_leaf_reg), a shrunken gradient step,
/// so the training loss cannot increase while learning_rate < 8.
/// Split scores get seeded Gaussian noise with standard deviation
/// random_strength * mean(g^2); it breaks exact ties on small or symmetric
/// data and vanishes next to real gains, which grow with the sample count.
/// trace->objective holds the mean training loss before round 1 and after each round.
inline GbdtModel train_gbdt(const Matrix& X, std::span<const int> y, const TrainConfig& cfg,
                            TrainTrace* trace = nullptr) {
    detail::check_training_data(X, y, "backends/gbdt", false);
    const auto n = static_cast<std::size_t>(X.rows());
    double pos = 0;
    for (int v : y) pos += v == 1 ? 1 : 0;
    if (pos == 0 || pos == static_cast<double>(n)) {
        throw TrainError("backends/gbdt", "training data has a single class");
    }
    GbdtModel model;
    const double prior = pos / static_cast<double>(n);
    model.base_score = std::log(prior / (1.0 - prior));
    if (cfg.n_trees == 0) return model;
    if (cfg.depth == 0 || cfg.depth > 16) throw TrainError("backends/gbdt", "depth must be in [1, 16]");

    const detail::Quantized q = detail::quantize(X, cfg.border_count);
    std::vector<double> F(n, model.base_score), neg_grad(n);
    std::vector<std::size_t> leaf_of(n);
    if (trace) trace->objective.push_back(detail::mean_logloss(F, y));
    std::mt19937_64 rng(detail::mix_seed(cfg.seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    double noise_sd = 0.0;
    std::function<double()> noise;
    if (cfg.random_strength > 0) noise = [&] { return noise_sd * normal(rng); };

    for (std::size_t round = 0; round < cfg.n_trees; ++round) {
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            neg_grad[i] = (y[i] == 1 ? 1.0 : 0.0) - detail::sigmoid(F[i]);
            sq += neg_grad[i] * neg_grad[i];
        }
        noise_sd = cfg.random_strength * sq / static_cast<double>(n);
        std::fill(leaf_of.begin(), leaf_of.end(), 0);
        ObliviousTree tree;
        std::size_t n_leaves = 1;
        for (std::size_t level = 0; level < cfg.depth; ++level) {
            const GbdtSplit s = best_oblivious_split(q, neg_grad, leaf_of, n_leaves, cfg.l2_leaf_reg, noise);
            if (s.feature < 0) break;  // every feature is constant
            const auto& fb = q.bins[static_cast<std::size_t>(s.feature)];
            for (std::size_t i = 0; i < n; ++i) leaf_of[i] = (leaf_of[i] << 1) | (fb[i] > s.border ? 1u : 0u);
            tree.features.push_back(s.feature);
            tree.thresholds.push_back(q.borders[static_cast<std::size_t>(s.feature)][s.border]);
            n_leaves <<= 1;
        }
        std::vector<double> g(n_leaves, 0.0), c(n_leaves, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            g[leaf_of[i]] += neg_grad[i];
            c[leaf_of[i]] += 1.0;
        }
        tree.leaf_values.resize(n_leaves);
        for (std::size_t l = 0; l < n_leaves; ++l) tree.leaf_values[l] = cfg.learning_rate * g[l] / (c[l] + cfg.l2_leaf_reg);
        for (std::size_t i = 0; i < n; ++i) F[i] += tree.leaf_values[leaf_of[i]];
        model.trees.push_back(std::move(tree));
        if (trace) trace->objective.push_back(detail::mean_logloss(F, y));
    }
    if (trace) {
        trace->iterations = cfg.n_trees;
        trace->converged = true;
    }
    return model;
}

}  // namespace sasvfuse
