#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sasvfuse/backends/linear.hpp"

using namespace sasvfuse;

namespace {

std::pair<Matrix, std::vector<int>> two_points() {
    Matrix X(2, 1);
    X << -1, 1;
    return {X, {0, 1}};
}

}  // namespace

TEST(LogReg, SeparableSignAndDefaults) {
    auto [X, y] = two_points();
    TrainConfig c = default_config(BackendKind::LogReg);
    EXPECT_EQ(c.max_iterations, 1000u);
    EXPECT_DOUBLE_EQ(c.reg_lambda, 1.0 / 25380.0);
    c.reg_lambda = 0.5;
    const auto m = train_logreg(X, y, c);
    EXPECT_GT(m.w(0), 0.0);
    EXPECT_GT(m.score(std::vector<double>{1.0}), m.score(std::vector<double>{-1.0}));
}

TEST(LogReg, HeavyRegularizationShrinksWeights) {
    std::mt19937_64 rng(1);
    auto [X, y] = gen::blobs(rng, 60, 4, 2.0);
    TrainConfig c = default_config(BackendKind::LogReg);
    c.reg_lambda = 1e6;
    EXPECT_LT(train_logreg(X, y, c).w.norm(), 1e-3);
}

TEST(LogReg, SingleClassRejected) {
    Matrix X = Matrix::Ones(3, 2);
    EXPECT_THROW(train_logreg(X, std::vector<int>{1, 1, 1}, default_config(BackendKind::LogReg)), TrainError);
}

TEST(LogReg, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(2);
    for (int c = 0; c < 20; ++c) {
        const Matrix X = gen::matrix(rng, 5, 8);
        const auto y = gen::labels(rng, 5);
        const double lambda = 0.1;
        std::vector<double> p(9);
        std::normal_distribution<double> normal(0, 0.5);
        for (auto& v : p) v = normal(rng);
        auto f = [&](const std::vector<double>& q) {
            return logreg_objective(X, y, Eigen::Map<const Vector>(q.data(), 9), lambda, nullptr);
        };
        Vector g;
        logreg_objective(X, y, Eigen::Map<const Vector>(p.data(), 9), lambda, &g);
        const auto num = oracle::numeric_gradient(f, p);
        EXPECT_LT(oracle::max_rel_error(std::vector<double>(g.data(), g.data() + 9), num), 1e-5);
    }
}

TEST(LogReg, ReachesStationaryPoint) {
    std::mt19937_64 rng(3);
    auto [X, y] = gen::blobs(rng, 200, 3, 1.0);
    TrainConfig c = default_config(BackendKind::LogReg);
    c.max_iterations = 0;
    TrainTrace trace;
    const auto m = train_logreg(X, y, c, &trace);
    Vector p(4);
    p << m.w, m.b;
    Vector g;
    logreg_objective(X, y, p, c.reg_lambda, &g);
    EXPECT_LT(g.norm(), 1e-6);
    for (std::size_t i = 1; i < trace.objective.size(); ++i) EXPECT_LE(trace.objective[i], trace.objective[i - 1]);
}

TEST(SvmLinear, TwoPointHardMargin) {
    auto [X, y] = two_points();
    TrainConfig c = default_config(BackendKind::SvmLinear);
    c.reg_lambda = 1e-6;
    c.max_iterations = 0;
    c.svm_tol = 1e-12;
    const auto m = train_svm_linear(X, y, c);
    EXPECT_NEAR(m.w(0), 1.0, 1e-6);
    EXPECT_NEAR(m.b, 0.0, 1e-6);
}

TEST(SvmLinear, DuplicatedTrainingSetSameFunction) {
    std::mt19937_64 rng(4);
    auto [X, y] = gen::blobs(rng, 40, 3, 1.0);
    Matrix X2(80, 3);
    X2 << X, X;
    std::vector<int> y2 = y;
    y2.insert(y2.end(), y.begin(), y.end());
    TrainConfig c = default_config(BackendKind::SvmLinear);
    c.reg_lambda = 0.01;
    c.max_iterations = 0;
    c.svm_tol = 1e-12;
    const auto a = train_svm_linear(X, y, c);
    const auto b = train_svm_linear(X2, y2, c);
    EXPECT_LT((a.w - b.w).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(a.b, b.b, 1e-6);
}

TEST(SvmLinear, ReportedObjectiveNonIncreasing) {
    std::mt19937_64 rng(5);
    for (int c = 0; c < 20; ++c) {
        auto [X, y] = gen::blobs(rng, gen::size_in(rng, 10, 80), 4, 0.5);
        TrainConfig cfg = default_config(BackendKind::SvmLinear);
        cfg.reg_lambda = 0.01;
        cfg.seed = static_cast<std::uint64_t>(c);
        TrainTrace trace;
        const auto m = train_svm_linear(X, y, cfg, &trace);
        ASSERT_GE(trace.objective.size(), 2u);
        for (std::size_t i = 1; i < trace.objective.size(); ++i) {
            EXPECT_LE(trace.objective[i], trace.objective[i - 1] + 1e-12);
        }
        // weak duality: primal >= -dual (both scaled by lambda)
        EXPECT_GE(svm_primal_objective(X, y, m, cfg.reg_lambda) + 1e-9, -trace.objective.back());
    }
}

TEST(LinearModel, Score) {
    LinearModel m{Vector::Zero(2), 0.0};
    m.w(0) = 1.0;
    EXPECT_EQ(m.score(std::vector<double>{2, 5}), 2.0);
}
