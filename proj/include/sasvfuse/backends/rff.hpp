#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <span>

#include "sasvfuse/backends/kernel_svm.hpp"
#include "sasvfuse/backends/linear.hpp"
#include "sasvfuse/features.hpp"

namespace sasvfuse {

/// z(x) = sqrt(2/D) cos(W x + offset), rows of W ~ N(0, 2 gamma I), offset ~ U[0, 2 pi).
/// E[z(x).z(y)] = exp(-gamma |x - y|^2).
struct RandomFourierMap {
    Matrix weights;  ///< D x k
    Vector offset;   ///< D
    double gamma = 1.0;

    static RandomFourierMap sample(std::size_t input_dim, std::size_t n_features, double gamma, std::uint64_t seed) {
        RandomFourierMap m;
        m.gamma = gamma;
        m.weights.resize(static_cast<Eigen::Index>(n_features), static_cast<Eigen::Index>(input_dim));
        m.offset.resize(static_cast<Eigen::Index>(n_features));
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 * gamma));
        std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
        for (Eigen::Index r = 0; r < m.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.weights.cols(); ++c) m.weights(r, c) = normal(rng);
        }
        for (Eigen::Index r = 0; r < m.offset.size(); ++r) m.offset(r) = uniform(rng);
        return m;
    }

    std::size_t output_dim() const { return static_cast<std::size_t>(weights.rows()); }

    Matrix transform(const Matrix& X) const {
        Matrix Z = X * weights.transpose();
        const double scale = std::sqrt(2.0 / static_cast<double>(weights.rows()));
        Z.rowwise() += offset.transpose();
        return (Z.array().cos() * scale).matrix();
    }

    Vector transform(std::span<const double> x) const {
        Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
        Vector z = weights * xv + offset;
        const double scale = std::sqrt(2.0 / static_cast<double>(weights.rows()));
        return (z.array().cos() * scale).matrix();
    }
};

/// scaler -> PCA -> random Fourier features -> logistic regression
struct RffModel {
    ScalerModel scaler;
    PcaModel pca;
    RandomFourierMap rff;
    LinearModel head;

    double score(std::span<const double> x) const {
        Matrix row = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
        Matrix z = rff.transform(apply_pca(pca, apply_scaler(scaler, row)));
        return head.score(std::span<const double>(z.data(), static_cast<std::size_t>(z.cols())));
    }
};

/// PCA width is min(pca_dim, n, d). With gamma unset, gamma = 1/(k Var) of the
/// PCA output.
inline RffModel train_rff_logreg(const Matrix& X, std::span<const int> y, const TrainConfig& cfg,
                                 TrainTrace* trace = nullptr) {
    detail::check_training_data(X, y, "backends/rff_logreg");
    if (cfg.rff_dim == 0) throw TrainError("backends/rff_logreg", "rff_dim must be positive");
    RffModel m;
    m.scaler = fit_scaler(X);
    Matrix scaled = apply_scaler(m.scaler, X);
    const std::size_t k =
        std::min({cfg.pca_dim, static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(X.cols())});
    if (k == 0) throw TrainError("backends/rff_logreg", "pca_dim must be positive");
    m.pca = fit_pca(scaled, k);
    Matrix projected = apply_pca(m.pca, scaled);
    const double gamma = cfg.gamma ? *cfg.gamma : scale_gamma(projected);
    m.rff = RandomFourierMap::sample(k, cfg.rff_dim, gamma, cfg.seed);
    Matrix Z = m.rff.transform(projected);
    m.head = train_logreg(Z, y, cfg, trace);
    return m;
}

}  // namespace sasvfuse
