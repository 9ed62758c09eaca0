#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sasvfuse/backends/rff.hpp"

using namespace sasvfuse;

namespace {

struct KernelError {
    double max = 0.0;
    double rms = 0.0;
};

KernelError kernel_error(std::size_t D, std::uint64_t seed, double gamma, std::size_t pairs, std::size_t dim) {
    const auto map = RandomFourierMap::sample(dim, D, gamma, seed);
    std::mt19937_64 rng(seed + 1000);
    KernelError e;
    for (std::size_t p = 0; p < pairs; ++p) {
        const Matrix M = gen::matrix(rng, 2, dim, 0.5);
        const Vector zx = map.transform(std::span(M.row(0).data(), dim));
        const Vector zy = map.transform(std::span(M.row(1).data(), dim));
        const double exact = std::exp(-gamma * (M.row(0) - M.row(1)).squaredNorm());
        const double err = zx.dot(zy) - exact;
        e.max = std::max(e.max, std::abs(err));
        e.rms += err * err;
    }
    e.rms = std::sqrt(e.rms / static_cast<double>(pairs));
    return e;
}

}  // namespace

TEST(Rff, Defaults) {
    const auto c = default_config(BackendKind::RffLogReg);
    EXPECT_EQ(c.pca_dim, 1024u);
    EXPECT_EQ(c.rff_dim, 5000u);
}

TEST(Rff, SelfProductNearOne) {
    const auto map = RandomFourierMap::sample(6, 5000, 0.7, 3);
    std::mt19937_64 rng(8);
    for (int c = 0; c < 50; ++c) {
        const Matrix M = gen::matrix(rng, 1, 6);
        const Vector z = map.transform(std::span(M.row(0).data(), 6));
        EXPECT_LT(std::abs(z.squaredNorm() - 1.0), 0.05);
    }
}

TEST(Rff, ApproximatesRbfKernel) {
    EXPECT_LT(kernel_error(5000, 0, 0.5, 100, 5).max, 0.05);
    // per-pair variance of the estimator is at most 1/D
    for (std::uint64_t s = 0; s < 10; ++s) EXPECT_LT(kernel_error(5000, s, 0.5, 100, 5).rms, 1.5 / std::sqrt(5000.0));
}

TEST(Rff, ErrorShrinksWithMoreFeatures) {
    double small = 0, large = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        small += kernel_error(500, s, 0.5, 50, 5).max;
        large += kernel_error(5000, s, 0.5, 50, 5).max;
    }
    EXPECT_LT(large, small);
}

TEST(Rff, SeedDeterminism) {
    const auto a = RandomFourierMap::sample(4, 100, 1.0, 7);
    const auto b = RandomFourierMap::sample(4, 100, 1.0, 7);
    const auto c = RandomFourierMap::sample(4, 100, 1.0, 8);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.offset, b.offset);
    EXPECT_NE(a.weights, c.weights);

    std::mt19937_64 rng(2);
    auto [X, y] = gen::xor_points(rng, 200, 0.2);
    TrainConfig cfg = default_config(BackendKind::RffLogReg);
    cfg.rff_dim = 300;
    const auto m1 = train_rff_logreg(X, y, cfg);
    const auto m2 = train_rff_logreg(X, y, cfg);
    EXPECT_EQ(m1.head.w, m2.head.w);
    EXPECT_EQ(m1.head.b, m2.head.b);
}

TEST(Rff, LearnsXor) {
    std::mt19937_64 rng(3);
    auto [X, y] = gen::xor_points(rng, 400, 0.2);
    TrainConfig cfg = default_config(BackendKind::RffLogReg);
    cfg.rff_dim = 500;
    const auto m = train_rff_logreg(X, y, cfg);
    int ok = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        ok += (m.score(std::span(X.row(i).data(), 2)) > 0) == (y[static_cast<std::size_t>(i)] == 1) ? 1 : 0;
    }
    EXPECT_GE(ok, 390);
}
