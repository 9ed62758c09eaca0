#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sasvfuse/backends/model.hpp"

using namespace sasvfuse;

namespace {

TrainConfig small_config(BackendKind kind) {
    TrainConfig c = default_config(kind);
    c.seed = 17;
    c.n_trees = kind == BackendKind::Gbdt ? 20 : 10;
    c.rff_dim = 64;
    c.layer_sizes = {8, 4};
    c.epochs = 3;
    c.batch_size = 16;
    c.max_iterations = kind == BackendKind::Gmm ? 50 : 200;
    return c;
}

}  // namespace

TEST(Model, KindNamesAndTags) {
    EXPECT_EQ(parse_backend_kind("gbdt"), BackendKind::Gbdt);
    EXPECT_EQ(static_cast<int>(BackendKind::Mlp), 1);
    EXPECT_EQ(static_cast<int>(BackendKind::Gbdt), 9);
    EXPECT_THROW(parse_backend_kind("catboost"), ConfigError);
}

TEST(Model, ConfigJsonRoundTripAndOverrides) {
    for (auto kind : kAllBackends) {
        TrainConfig c = default_config(kind);
        c.gamma = 0.25;
        c.seed = 99;
        EXPECT_EQ(train_config_from_json(to_json(c)), c);
        EXPECT_EQ(train_config_from_json(to_json(default_config(kind))), default_config(kind));
    }
    const auto sf = train_config_from_json({{"kind", "logreg"}, {"regularization_c", 10000}, {"max_iterations", 0}});
    EXPECT_DOUBLE_EQ(sf.reg_lambda, 1e-4);
    EXPECT_EQ(sf.max_iterations, 0u);
    EXPECT_THROW(train_config_from_json({{"kind", "gbdt"}, {"n_tree", 5}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"n_trees", 5}}), ConfigError);
}

TEST(Model, EveryKindRoundTripsBitExactly) {
    std::mt19937_64 rng(1);
    auto [X, y] = gen::blobs(rng, 60, 3, 1.0);
    const Matrix probe = gen::matrix(rng, 20, 3, 2.0);
    for (auto kind : kAllBackends) {
        SCOPED_TRACE(std::string(to_string(kind)));
        const FusionModel m = train_model(X, y, small_config(kind));
        const auto bytes = write_model(m);
        const FusionModel back = read_model(bytes);
        EXPECT_EQ(back.kind(), kind);
        EXPECT_EQ(back.feature_dim(), 3u);
        EXPECT_EQ(back.config(), m.config());
        EXPECT_EQ(write_model(back), bytes);
        const auto a = m.score_rows(probe);
        const auto b = back.score_rows(probe);
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
            EXPECT_TRUE(std::isfinite(a[i]));
        }
        // scoring twice is bit-identical
        EXPECT_EQ(m.score_rows(probe), a);
    }
}

TEST(Model, EveryKindDeterministicUnderSeed) {
    std::mt19937_64 rng(2);
    auto [X, y] = gen::blobs(rng, 60, 3, 1.0);
    for (auto kind : kAllBackends) {
        SCOPED_TRACE(std::string(to_string(kind)));
        EXPECT_EQ(write_model(train_model(X, y, small_config(kind))), write_model(train_model(X, y, small_config(kind))));
    }
}

TEST(Model, CorruptFilesRejected) {
    std::mt19937_64 rng(3);
    auto [X, y] = gen::blobs(rng, 30, 2, 1.0);
    const auto bytes = write_model(train_model(X, y, small_config(BackendKind::LogReg)));
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(read_model(bad), LoadError);
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(read_model(truncated), LoadError);
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_THROW(read_model(extra), LoadError);
    auto kind = bytes;
    kind[4] = 42;
    EXPECT_THROW(read_model(kind), LoadError);
}

TEST(Model, ScoreChecksDimension) {
    const FusionModel m(default_config(BackendKind::LogReg), 2, LinearModel{Vector::Zero(2), 0.0});
    EXPECT_THROW(m.score(std::vector<double>{1, 2, 3}), Error);
    EXPECT_EQ(m.score(std::vector<double>{1, 2}), 0.0);
}

TEST(Model, GbdtZeroTreesBalancedPrior) {
    Matrix X(2, 1);
    X << 0, 1;
    TrainConfig c = default_config(BackendKind::Gbdt);
    c.n_trees = 0;
    const auto m = train_model(X, std::vector<int>{0, 1}, c);
    EXPECT_EQ(m.score(std::vector<double>{123.0}), 0.0);
}
