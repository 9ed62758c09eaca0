#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sasvfuse/detail/parallel.hpp"
#include "sasvfuse/error.hpp"
#include "sasvfuse/features.hpp"

namespace sasvfuse {

enum class BackendKind : std::uint32_t {
    Mlp = 1,
    LogReg = 2,
    SvmLinear = 3,
    SvmRbf = 4,
    SvmPoly = 5,
    RffLogReg = 6,
    Gmm = 7,
    RandomForest = 8,
    Gbdt = 9,
};

inline constexpr std::array<BackendKind, 9> kAllBackends{
    BackendKind::Mlp,  BackendKind::LogReg,       BackendKind::SvmLinear,
    BackendKind::SvmRbf, BackendKind::SvmPoly,    BackendKind::RffLogReg,
    BackendKind::Gmm,  BackendKind::RandomForest, BackendKind::Gbdt,
};

inline std::string_view to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::Mlp: return "mlp";
        case BackendKind::LogReg: return "logreg";
        case BackendKind::SvmLinear: return "svm_linear";
        case BackendKind::SvmRbf: return "svm_rbf";
        case BackendKind::SvmPoly: return "svm_poly";
        case BackendKind::RffLogReg: return "rff_logreg";
        case BackendKind::Gmm: return "gmm";
        case BackendKind::RandomForest: return "random_forest";
        case BackendKind::Gbdt: return "gbdt";
    }
    return "?";
}

inline BackendKind parse_backend_kind(std::string_view s) {
    for (auto k : kAllBackends) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("backends", "unknown backend kind '" + std::string(s) + "'");
}

/// Utterance count of the reference training partition; regularizers default to 1/m.
inline constexpr double kReferenceTrainUtterances = 25380.0;

struct TrainConfig {
    BackendKind kind = BackendKind::Gbdt;
    std::uint64_t max_iterations = 0;  ///< 0 = unlimited
    double reg_lambda = 1.0 / kReferenceTrainUtterances;
    std::uint64_t seed = 0;

    // logistic regression (also the head of rff_logreg)
    double grad_tol = 1e-8;

    // linear SVM (dual coordinate descent stopping rule on projected-gradient spread)
    double svm_tol = 1e-4;

    // kernel SVM
    int degree = 7;
    std::optional<double> gamma;  ///< nullopt = 1/(d * Var(X))
    double coef0 = 0.0;
    double kkt_tol = 1e-3;
    std::uint64_t max_kernel_bytes = 4ull << 30;

    // random Fourier features
    std::size_t pca_dim = 1024;
    std::size_t rff_dim = 5000;

    // GMM
    std::size_t n_components = 2;
    double em_tol = 1e-7;
    double cov_floor = 1e-6;

    // random forest (n_trees) and GBDT (n_trees = boosting rounds)
    std::size_t n_trees = 1000;
    std::size_t max_features = 0;  ///< 0 = floor(sqrt(d))
    std::size_t min_leaf = 1;
    std::size_t depth = 6;
    double learning_rate = 0.03;
    double l2_leaf_reg = 3.0;
    double random_strength = 1.0;  ///< split-score noise, in units of the mean squared gradient
    std::size_t border_count = 254;

    // MLP (learning_rate shared)
    std::vector<std::size_t> layer_sizes{256, 128, 64};
    double negative_slope = 0.3;
    double momentum = 0.9;
    std::size_t batch_size = 256;
    std::size_t epochs = 100;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Per-kind defaults carrying the reference hyperparameters.
inline TrainConfig default_config(BackendKind kind) {
    TrainConfig c;
    c.kind = kind;
    switch (kind) {
        case BackendKind::LogReg: c.max_iterations = 1000; break;
        case BackendKind::SvmLinear:
        case BackendKind::SvmRbf:
        case BackendKind::SvmPoly:
        case BackendKind::RffLogReg: c.max_iterations = 50000; break;
        case BackendKind::Gmm: c.max_iterations = 1000; break;
        case BackendKind::RandomForest: c.n_trees = 1000; break;
        case BackendKind::Gbdt:
            c.n_trees = 700;
            c.learning_rate = 0.03;
            break;
        case BackendKind::Mlp: c.learning_rate = 1e-3; break;
    }
    return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["kind"] = to_string(c.kind);
    j["max_iterations"] = c.max_iterations;
    j["reg_lambda"] = c.reg_lambda;
    j["seed"] = c.seed;
    j["grad_tol"] = c.grad_tol;
    j["svm_tol"] = c.svm_tol;
    j["degree"] = c.degree;
    j["gamma"] = c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json("scale");
    j["coef0"] = c.coef0;
    j["kkt_tol"] = c.kkt_tol;
    j["max_kernel_bytes"] = c.max_kernel_bytes;
    j["pca_dim"] = c.pca_dim;
    j["rff_dim"] = c.rff_dim;
    j["n_components"] = c.n_components;
    j["em_tol"] = c.em_tol;
    j["cov_floor"] = c.cov_floor;
    j["n_trees"] = c.n_trees;
    j["max_features"] = c.max_features;
    j["min_leaf"] = c.min_leaf;
    j["depth"] = c.depth;
    j["learning_rate"] = c.learning_rate;
    j["l2_leaf_reg"] = c.l2_leaf_reg;
    j["random_strength"] = c.random_strength;
    j["border_count"] = c.border_count;
    j["layer_sizes"] = c.layer_sizes;
    j["negative_slope"] = c.negative_slope;
    j["momentum"] = c.momentum;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    return j;
}

/// Starts from default_config(kind) and overrides the keys present.
/// Unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("backends", "backend config needs a 'kind'");
    TrainConfig c = default_config(parse_backend_kind(j.at("kind").get<std::string>()));
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "kind") continue;
            else if (key == "max_iterations") c.max_iterations = v.get<std::uint64_t>();
            else if (key == "reg_lambda") c.reg_lambda = v.get<double>();
            else if (key == "regularization_c") c.reg_lambda = 1.0 / v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "grad_tol") c.grad_tol = v.get<double>();
            else if (key == "svm_tol") c.svm_tol = v.get<double>();
            else if (key == "degree") c.degree = v.get<int>();
            else if (key == "gamma") {
                if (v.is_string()) {
                    if (v.get<std::string>() != "scale") throw ConfigError("backends", "gamma must be a number or \"scale\"");
                    c.gamma.reset();
                } else {
                    c.gamma = v.get<double>();
                }
            }
            else if (key == "coef0") c.coef0 = v.get<double>();
            else if (key == "kkt_tol") c.kkt_tol = v.get<double>();
            else if (key == "max_kernel_bytes") c.max_kernel_bytes = v.get<std::uint64_t>();
            else if (key == "pca_dim") c.pca_dim = v.get<std::size_t>();
            else if (key == "rff_dim") c.rff_dim = v.get<std::size_t>();
            else if (key == "n_components") c.n_components = v.get<std::size_t>();
            else if (key == "em_tol") c.em_tol = v.get<double>();
            else if (key == "cov_floor") c.cov_floor = v.get<double>();
            else if (key == "n_trees") c.n_trees = v.get<std::size_t>();
            else if (key == "max_features") c.max_features = v.get<std::size_t>();
            else if (key == "min_leaf") c.min_leaf = v.get<std::size_t>();
            else if (key == "depth") c.depth = v.get<std::size_t>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "l2_leaf_reg") c.l2_leaf_reg = v.get<double>();
            else if (key == "random_strength") c.random_strength = v.get<double>();
            else if (key == "border_count") c.border_count = v.get<std::size_t>();
            else if (key == "layer_sizes") c.layer_sizes = v.get<std::vector<std::size_t>>();
            else if (key == "negative_slope") c.negative_slope = v.get<double>();
            else if (key == "momentum") c.momentum = v.get<double>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "epochs") c.epochs = v.get<std::size_t>();
            else throw ConfigError("backends", "unknown backend option '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("backends", std::string("bad backend option: ") + e.what());
    }
    if (c.reg_lambda < 0) throw ConfigError("backends", "reg_lambda must be nonnegative");
    if (c.random_strength < 0) throw ConfigError("backends", "random_strength must be nonnegative");
    return c;
}

/// Optimization diagnostics; objective holds one value per reported step.
struct TrainTrace {
    std::vector<double> objective;
    std::uint64_t iterations = 0;
    bool converged = false;
};

namespace detail {

inline void check_training_data(const Matrix& X, std::span<const int> y, std::string_view module,
                                bool need_both_classes = true) {
    if (X.rows() == 0 || X.cols() == 0) throw TrainError(std::string(module), "empty training data");
    if (static_cast<std::size_t>(X.rows()) != y.size()) {
        throw TrainError(std::string(module), "row count does not match label count");
    }
    if (!X.allFinite()) throw TrainError(std::string(module), "training data contains non-finite values");
    if (need_both_classes) {
        std::size_t pos = 0;
        for (int v : y) pos += v == 1 ? 1 : 0;
        if (pos == 0 || pos == y.size()) {
            throw TrainError(std::string(module), "training data has a single class (" + std::to_string(pos) +
                                                      " positive of " + std::to_string(y.size()) + ")");
        }
    }
}

/// splitmix64 step, used to derive independent per-task seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace detail

}  // namespace sasvfuse
