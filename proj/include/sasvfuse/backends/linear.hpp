#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "sasvfuse/backends/config.hpp"

namespace sasvfuse {

/// score(x) = w.x + b
struct LinearModel {
    Vector w;
    double b = 0.0;

    double score(std::span<const double> x) const {
        return Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())).dot(w) + b;
    }
};

namespace detail {
/// log(1 + exp(-z)) without overflow.
inline double log1pexp_neg(double z) {
    return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}
inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}
}  // namespace detail

/// J(w, b) = mean log(1 + exp(-y_i (w.x_i + b))) + (lambda/2) |w|^2 with y in {-1, +1}.
/// params = [w..., b]; grad receives dJ/dparams.
inline double logreg_objective(const Matrix& X, std::span<const int> labels, const Vector& params, double lambda,
                               Vector* grad) {
    const Eigen::Index d = X.cols();
    const double n = static_cast<double>(X.rows());
    const auto w = params.head(d);
    const double b = params(d);
    Vector margins = X * w;
    double loss = 0.0;
    Vector coef(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double y = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
        const double z = y * (margins(i) + b);
        loss += detail::log1pexp_neg(z);
        coef(i) = -y * detail::sigmoid(-z);
    }
    loss = loss / n + 0.5 * lambda * w.squaredNorm();
    if (grad) {
        grad->resize(d + 1);
        grad->head(d) = X.transpose() * coef / n + lambda * w;
        (*grad)(d) = coef.sum() / n;
    }
    return loss;
}

/// Limited-memory BFGS with Armijo backtracking. Stops when |grad| < grad_tol,
/// after max_iterations (0 = unlimited), or when no further decrease is
/// representable in floating point.
inline Vector minimize_lbfgs(const std::function<double(const Vector&, Vector*)>& f, Vector x,
                             std::uint64_t max_iterations, double grad_tol, TrainTrace* trace,
                             const char* module, std::size_t memory = 10) {
    Vector g;
    double fx = f(x, &g);
    if (!std::isfinite(fx)) throw NumericalError(module, "non-finite loss at start");
    if (trace) trace->objective.push_back(fx);
    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::uint64_t it = 0;
    bool converged = g.norm() < grad_tol;
    while (!converged && (max_iterations == 0 || it < max_iterations)) {
        // two-loop recursion
        Vector q = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            alpha[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= alpha[k] * y_hist[k];
        }
        double h0 = 1.0;
        if (!s_hist.empty()) h0 = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        else h0 = 1.0 / std::max(1.0, g.norm());
        Vector dir = h0 * q;
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * y_hist[k].dot(dir);
            dir += (alpha[k] - beta) * s_hist[k];
        }
        dir = -dir;
        double slope = g.dot(dir);
        if (slope >= 0) {
            // not a descent direction: reset memory, fall back to steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -g / std::max(1.0, g.norm());
            slope = g.dot(dir);
        }
        double step = 1.0;
        Vector x_new, g_new;
        double f_new = fx;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * dir;
            f_new = f(x_new, &g_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++it;
        if (!accepted) {
            if (!std::isfinite(f_new)) throw NumericalError(module, "non-finite loss during line search");
            break;  // stalled at machine precision
        }
        Vector s = x_new - x;
        Vector yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * yv.squaredNorm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        const double prev = fx;
        x = std::move(x_new);
        g = std::move(g_new);
        fx = f_new;
        if (trace) trace->objective.push_back(fx);
        converged = g.norm() < grad_tol;
        if (!converged && prev - fx <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fx)) * 1e-3) {
            break;
        }
    }
    if (trace) {
        trace->iterations = it;
        trace->converged = converged;
    }
    return x;
}

inline LinearModel train_logreg(const Matrix& X, std::span<const int> y, const TrainConfig& cfg,
                                TrainTrace* trace = nullptr) {
    detail::check_training_data(X, y, "backends/logreg");
    const Eigen::Index d = X.cols();
    auto f = [&](const Vector& p, Vector* g) { return logreg_objective(X, y, p, cfg.reg_lambda, g); };
    Vector p = minimize_lbfgs(f, Vector::Zero(d + 1), cfg.max_iterations, cfg.grad_tol, trace, "backends/logreg");
    if (!p.allFinite()) throw NumericalError("backends/logreg", "non-finite parameters after training");
    return LinearModel{p.head(d), p(d)};
}

/// Primal objective (lambda/2)|w|^2 + mean hinge; the bias is included in w
/// through an augmented constant feature.
inline double svm_primal_objective(const Matrix& X, std::span<const int> y, const LinearModel& m, double lambda) {
    double hinge = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double yi = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
        hinge += std::max(0.0, 1.0 - yi * (X.row(i).dot(m.w) + m.b));
    }
    return 0.5 * lambda * (m.w.squaredNorm() + m.b * m.b) + hinge / static_cast<double>(X.rows());
}

/// L1-loss linear SVM by dual coordinate descent. Each epoch visits every
/// coordinate once in a seeded random order; trace->objective records the dual
/// objective in minimization form (scaled by lambda), which never increases.
inline LinearModel train_svm_linear(const Matrix& X, std::span<const int> y, const TrainConfig& cfg,
                                    TrainTrace* trace = nullptr) {
    detail::check_training_data(X, y, "backends/svm_linear");
    if (cfg.reg_lambda <= 0) throw TrainError("backends/svm_linear", "reg_lambda must be positive");
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const double C = 1.0 / (cfg.reg_lambda * static_cast<double>(n));

    Vector w = Vector::Zero(d);
    double b = 0.0;
    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    std::vector<double> qd(static_cast<std::size_t>(n));
    std::vector<double> ys(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        qd[static_cast<std::size_t>(i)] = X.row(i).squaredNorm() + 1.0;
        ys[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    }
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);

    auto dual_min = [&] {
        return cfg.reg_lambda * (0.5 * (w.squaredNorm() + b * b) - std::accumulate(alpha.begin(), alpha.end(), 0.0));
    };
    if (trace) trace->objective.push_back(dual_min());

    std::uint64_t epoch = 0;
    bool converged = false;
    while (cfg.max_iterations == 0 || epoch < cfg.max_iterations) {
        std::shuffle(order.begin(), order.end(), rng);
        double pg_max = -std::numeric_limits<double>::infinity();
        double pg_min = std::numeric_limits<double>::infinity();
        for (std::size_t i : order) {
            const auto row = X.row(static_cast<Eigen::Index>(i));
            const double G = ys[i] * (row.dot(w) + b) - 1.0;
            double pg = G;
            if (alpha[i] == 0.0) pg = std::min(G, 0.0);
            else if (alpha[i] == C) pg = std::max(G, 0.0);
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);
            if (pg != 0.0) {
                const double old = alpha[i];
                alpha[i] = std::clamp(old - G / qd[i], 0.0, C);
                const double delta = (alpha[i] - old) * ys[i];
                w += delta * row.transpose();
                b += delta;
            }
        }
        ++epoch;
        if (trace) trace->objective.push_back(dual_min());
        if (pg_max - pg_min < cfg.svm_tol) {
            converged = true;
            break;
        }
    }
    if (trace) {
        trace->iterations = epoch;
        trace->converged = converged;
    }
    if (!w.allFinite() || !std::isfinite(b)) throw NumericalError("backends/svm_linear", "non-finite parameters");
    return LinearModel{w, b};
}

}  // namespace sasvfuse
