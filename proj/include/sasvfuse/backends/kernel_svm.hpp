#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "sasvfuse/backends/config.hpp"

namespace sasvfuse {

enum class KernelType : std::uint32_t { Linear = 0, Rbf = 1, Poly = 2 };

struct Kernel {
    KernelType type = KernelType::Rbf;
    double gamma = 1.0;
    double coef0 = 0.0;
    int degree = 3;

    double operator()(std::span<const double> a, std::span<const double> b) const {
        switch (type) {
            case KernelType::Linear: return dot(a, b);
            case KernelType::Rbf: {
                double d2 = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) {
                    const double t = a[i] - b[i];
                    d2 += t * t;
                }
                return std::exp(-gamma * d2);
            }
            case KernelType::Poly: return std::pow(gamma * dot(a, b) + coef0, degree);
        }
        return 0.0;
    }

    static double dot(std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }
};

/// 1 / (d * Var(X)) over all entries of X; 1 when X has zero variance.
inline double scale_gamma(const Matrix& X) {
    const double n = static_cast<double>(X.size());
    const double mean = X.sum() / n;
    const double var = (X.array() - mean).square().sum() / n;
    if (!(var > 0.0)) return 1.0;
    return 1.0 / (static_cast<double>(X.cols()) * var);
}

/// score(x) = sum_i coef_i k(sv_i, x) - rho, coef_i = alpha_i y_i
struct KernelSvmModel {
    Kernel kernel;
    Matrix support_vectors;
    Vector coef;
    double rho = 0.0;

    double score(std::span<const double> x) const {
        double s = 0.0;
        const auto d = static_cast<std::size_t>(support_vectors.cols());
        for (Eigen::Index i = 0; i < support_vectors.rows(); ++i) {
            s += coef(i) * kernel(std::span(support_vectors.row(i).data(), d), x);
        }
        return s - rho;
    }
};

inline Kernel make_kernel(const Matrix& X, const TrainConfig& cfg, KernelType type) {
    Kernel k;
    k.type = type;
    k.gamma = cfg.gamma ? *cfg.gamma : scale_gamma(X);
    k.coef0 = cfg.coef0;
    k.degree = cfg.degree;
    return k;
}

/// Soft-margin dual solved by sequential minimal optimization with
/// second-order working-set selection. The box bound is C = 1/(lambda n), which
/// makes the primal (lambda/2)|w|^2 + mean hinge. trace->objective holds the
/// dual objective (minimization form) every 1000 iterations and at exit.
inline KernelSvmModel train_svm_kernel(const Matrix& X, std::span<const int> labels, const TrainConfig& cfg,
                                       KernelType type, TrainTrace* trace = nullptr) {
    constexpr const char* kModule = "backends/svm_kernel";
    detail::check_training_data(X, labels, kModule);
    if (cfg.reg_lambda <= 0) throw TrainError(kModule, "reg_lambda must be positive");
    const auto n = static_cast<std::size_t>(X.rows());
    const auto d = static_cast<std::size_t>(X.cols());
    const std::uint64_t kernel_bytes = static_cast<std::uint64_t>(n) * n * sizeof(float);
    if (kernel_bytes > cfg.max_kernel_bytes) {
        throw TrainError(kModule, "kernel matrix for " + std::to_string(n) + " samples needs " +
                                      std::to_string(kernel_bytes) + " bytes, over the limit of " +
                                      std::to_string(cfg.max_kernel_bytes));
    }
    const Kernel kernel = make_kernel(X, cfg, type);
    const double C = 1.0 / (cfg.reg_lambda * static_cast<double>(n));
    constexpr double kTau = 1e-12;

    std::vector<float> K;
    try {
        K.resize(n * n);
    } catch (const std::bad_alloc&) {
        throw TrainError(kModule, "cannot allocate kernel matrix of " + std::to_string(kernel_bytes) + " bytes");
    }
    auto row = [&](std::size_t i) { return std::span<const double>(X.row(static_cast<Eigen::Index>(i)).data(), d); };
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j <= i; ++j) K[i * n + j] = static_cast<float>(kernel(row(i), row(j)));
    });
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) K[i * n + j] = K[j * n + i];
    }

    std::vector<double> y(n), alpha(n, 0.0), G(n, -1.0);
    for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == 1 ? 1.0 : -1.0;
    auto upper = [&](std::size_t t) { return alpha[t] >= C; };
    auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
    auto objective = [&] {
        double f = 0.0;
        for (std::size_t t = 0; t < n; ++t) f += alpha[t] * (G[t] - 1.0);
        return 0.5 * f;
    };

    std::uint64_t it = 0;
    bool converged = false;
    if (trace) trace->objective.push_back(objective());
    while (cfg.max_iterations == 0 || it < cfg.max_iterations) {
        // select i: maximal violating index in I_up
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (!upper(t) && -G[t] >= gmax) { gmax = -G[t]; i = t; }
            } else {
                if (!lower(t) && G[t] >= gmax) { gmax = G[t]; i = t; }
            }
        }
        if (i == n) { converged = true; break; }
        // select j: second-order gain in I_low
        const float* Ki = &K[i * n];
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            const double quad_base = static_cast<double>(Ki[i]) + K[t * n + t] - 2.0 * Ki[t];
            if (y[t] > 0) {
                if (!lower(t)) {
                    const double diff = gmax + G[t];
                    gmax2 = std::max(gmax2, G[t]);
                    if (diff > 0) {
                        const double obj = -(diff * diff) / (quad_base > 0 ? quad_base : kTau);
                        if (obj <= best) { best = obj; j = t; }
                    }
                }
            } else {
                if (!upper(t)) {
                    const double diff = gmax - G[t];
                    gmax2 = std::max(gmax2, -G[t]);
                    if (diff > 0) {
                        const double obj = -(diff * diff) / (quad_base > 0 ? quad_base : kTau);
                        if (obj <= best) { best = obj; j = t; }
                    }
                }
            }
        }
        if (gmax + gmax2 < cfg.kkt_tol || j == n) { converged = true; break; }

        const float* Kj = &K[j * n];
        const double old_i = alpha[i];
        const double old_j = alpha[j];
        if (y[i] != y[j]) {
            double quad = static_cast<double>(Ki[i]) + Kj[j] - 2.0 * Ki[j];
            if (quad <= 0) quad = kTau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
            } else {
                if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
            }
            if (diff > 0) {
                if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
            } else {
                if (alpha[j] > C) { alpha[j] = C; alpha[i] = C + diff; }
            }
        } else {
            double quad = static_cast<double>(Ki[i]) + Kj[j] - 2.0 * Ki[j];
            if (quad <= 0) quad = kTau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
                if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
            } else {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
                if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
            }
        }
        const double di = (alpha[i] - old_i) * y[i];
        const double dj = (alpha[j] - old_j) * y[j];
        for (std::size_t t = 0; t < n; ++t) G[t] += y[t] * (Ki[t] * di + Kj[t] * dj);
        ++it;
        if (trace && it % 1000 == 0) trace->objective.push_back(objective());
    }
    if (trace) {
        trace->objective.push_back(objective());
        trace->iterations = it;
        trace->converged = converged;
    }

    // rho from free support vectors, else the midpoint of the feasible interval
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yG = y[t] * G[t];
        if (upper(t)) {
            if (y[t] < 0) ub = std::min(ub, yG); else lb = std::max(lb, yG);
        } else if (lower(t)) {
            if (y[t] > 0) ub = std::min(ub, yG); else lb = std::max(lb, yG);
        } else {
            ++n_free;
            sum_free += yG;
        }
    }
    KernelSvmModel model;
    model.kernel = kernel;
    model.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

    std::vector<std::size_t> sv;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0) sv.push_back(t);
    }
    model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), static_cast<Eigen::Index>(d));
    model.coef.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t k = 0; k < sv.size(); ++k) {
        model.support_vectors.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(sv[k]));
        model.coef(static_cast<Eigen::Index>(k)) = alpha[sv[k]] * y[sv[k]];
    }
    if (!std::isfinite(model.rho)) throw NumericalError(kModule, "non-finite bias");
    return model;
}

}  // namespace sasvfuse
