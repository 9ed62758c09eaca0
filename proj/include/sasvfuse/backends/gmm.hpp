#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "sasvfuse/backends/config.hpp"

namespace sasvfuse {

/// Diagonal-covariance Gaussian mixture.
struct DiagGmm {
    Vector weights;    ///< K
    Matrix means;      ///< K x d
    Matrix variances;  ///< K x d

    std::size_t components() const { return static_cast<std::size_t>(weights.size()); }

    /// log N(x | k) + log w_k for every component
    void component_log_joint(std::span<const double> x, std::span<double> out) const {
        const Eigen::Index d = means.cols();
        const double log2pi = std::log(2.0 * std::numbers::pi);
        for (Eigen::Index k = 0; k < weights.size(); ++k) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) {
                const double diff = x[static_cast<std::size_t>(j)] - means(k, j);
                acc += std::log(variances(k, j)) + diff * diff / variances(k, j);
            }
            out[static_cast<std::size_t>(k)] = std::log(weights(k)) - 0.5 * (acc + static_cast<double>(d) * log2pi);
        }
    }

    double log_likelihood(std::span<const double> x) const {
        std::vector<double> lj(components());
        component_log_joint(x, lj);
        const double mx = *std::max_element(lj.begin(), lj.end());
        double s = 0.0;
        for (double v : lj) s += std::exp(v - mx);
        return mx + std::log(s);
    }
};

/// E-step: fills resp (n x K) with posteriors and returns the mean log-likelihood.
inline double gmm_expectation(const DiagGmm& g, const Matrix& X, Matrix& resp) {
    const auto K = static_cast<Eigen::Index>(g.components());
    const auto d = static_cast<std::size_t>(X.cols());
    resp.resize(X.rows(), K);
    std::vector<double> lj(static_cast<std::size_t>(K));
    double total = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        g.component_log_joint(std::span(X.row(i).data(), d), lj);
        const double mx = *std::max_element(lj.begin(), lj.end());
        double s = 0.0;
        for (double v : lj) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        total += lse;
        for (Eigen::Index k = 0; k < K; ++k) resp(i, k) = std::exp(lj[static_cast<std::size_t>(k)] - lse);
    }
    return total / static_cast<double>(X.rows());
}

/// M-step with variances floored. Components with no mass keep their parameters.
inline void gmm_maximization(DiagGmm& g, const Matrix& X, const Matrix& resp, double floor) {
    const double n = static_cast<double>(X.rows());
    for (Eigen::Index k = 0; k < resp.cols(); ++k) {
        const double nk = resp.col(k).sum();
        g.weights(k) = std::max(nk / n, std::numeric_limits<double>::min());
        if (nk <= 1e-300) continue;
        Eigen::RowVectorXd mean = (resp.col(k).transpose() * X) / nk;
        Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(X.cols());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            var += resp(i, k) * (X.row(i) - mean).array().square().matrix();
        }
        var /= nk;
        g.means.row(k) = mean;
        g.variances.row(k) = var.cwiseMax(floor);
    }
    g.weights /= g.weights.sum();
}

namespace detail {

/// k-means++ seeding followed by a few Lloyd iterations; hard assignments
/// give the initial mixture.
inline DiagGmm init_gmm_kmeans(const Matrix& X, std::size_t K, double floor, std::uint64_t seed) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    std::mt19937_64 rng(seed);
    Matrix centers(static_cast<Eigen::Index>(K), d);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = X.row(pick(rng));
    Vector dist2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (std::size_t c = 1; c < K; ++c) {
        const double total = dist2.sum();
        Eigen::Index chosen = 0;
        if (total > 0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (chosen = 0; chosen < n - 1; ++chosen) {
                r -= dist2(chosen);
                if (r <= 0) break;
            }
        } else {
            chosen = pick(rng);
        }
        centers.row(static_cast<Eigen::Index>(c)) = X.row(chosen);
        dist2 = dist2.cwiseMin((X.rowwise() - centers.row(static_cast<Eigen::Index>(c))).rowwise().squaredNorm());
    }
    std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), 0);
    for (int iter = 0; iter < 10; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            (centers.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&assign[static_cast<std::size_t>(i)]);
        }
        Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(K), d);
        std::vector<double> counts(K, 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
            counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += 1.0;
        }
        for (std::size_t c = 0; c < K; ++c) {
            if (counts[c] > 0) centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / counts[c];
        }
    }
    Matrix resp = Matrix::Zero(n, static_cast<Eigen::Index>(K));
    for (Eigen::Index i = 0; i < n; ++i) resp(i, assign[static_cast<std::size_t>(i)]) = 1.0;
    DiagGmm g;
    g.weights = Vector::Constant(static_cast<Eigen::Index>(K), 1.0 / static_cast<double>(K));
    g.means = centers;
    g.variances = Matrix::Ones(static_cast<Eigen::Index>(K), d);
    // seed the variances from the global spread so empty clusters stay sane
    Eigen::RowVectorXd global_var = (X.rowwise() - X.colwise().mean()).array().square().colwise().mean();
    for (Eigen::Index k = 0; k < g.variances.rows(); ++k) g.variances.row(k) = global_var.cwiseMax(floor);
    gmm_maximization(g, X, resp, floor);
    return g;
}

}  // namespace detail

/// EM until the mean log-likelihood gain drops below em_tol or max_iterations.
/// trace->objective is the mean log-likelihood of each parameter set visited.
inline DiagGmm fit_gmm(const Matrix& X, const TrainConfig& cfg, TrainTrace* trace = nullptr) {
    if (X.rows() < static_cast<Eigen::Index>(cfg.n_components) || cfg.n_components == 0) {
        throw TrainError("backends/gmm", "need at least " + std::to_string(cfg.n_components) +
                                             " samples to fit, got " + std::to_string(X.rows()));
    }
    DiagGmm g = detail::init_gmm_kmeans(X, cfg.n_components, cfg.cov_floor, cfg.seed);
    Matrix resp;
    double ll = gmm_expectation(g, X, resp);
    if (!std::isfinite(ll)) throw NumericalError("backends/gmm", "non-finite log-likelihood");
    if (trace) trace->objective.push_back(ll);
    std::uint64_t it = 0;
    bool converged = false;
    while (cfg.max_iterations == 0 || it < cfg.max_iterations) {
        gmm_maximization(g, X, resp, cfg.cov_floor);
        const double next = gmm_expectation(g, X, resp);
        if (!std::isfinite(next)) throw NumericalError("backends/gmm", "non-finite log-likelihood");
        ++it;
        if (trace) trace->objective.push_back(next);
        const double gain = next - ll;
        ll = next;
        if (gain < cfg.em_tol) {
            converged = true;
            break;
        }
    }
    if (trace) {
        trace->iterations = it;
        trace->converged = converged;
    }
    return g;
}

/// score(x) = log p(x | positive) - log p(x | negative)
struct GmmLlrModel {
    DiagGmm positive;
    DiagGmm negative;

    double score(std::span<const double> x) const { return positive.log_likelihood(x) - negative.log_likelihood(x); }
};

inline GmmLlrModel train_gmm_llr(const Matrix& X, std::span<const int> y, const TrainConfig& cfg,
                                 TrainTrace* pos_trace = nullptr, TrainTrace* neg_trace = nullptr) {
    detail::check_training_data(X, y, "backends/gmm");
    std::vector<Eigen::Index> pos, neg;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(static_cast<Eigen::Index>(i));
    for (auto* idx : {&pos, &neg}) {
        if (idx->size() < cfg.n_components) {
            throw TrainError("backends/gmm", std::string(idx == &pos ? "positive" : "negative") + " class has " +
                                                 std::to_string(idx->size()) + " samples, fewer than " +
                                                 std::to_string(cfg.n_components) + " components");
        }
    }
    Matrix Xp = X(pos, Eigen::all);
    Matrix Xn = X(neg, Eigen::all);
    GmmLlrModel m;
    TrainConfig pc = cfg;
    m.positive = fit_gmm(Xp, pc, pos_trace);
    pc.seed = detail::mix_seed(cfg.seed);
    m.negative = fit_gmm(Xn, pc, neg_trace);
    return m;
}

}  // namespace sasvfuse
