#pragma once

#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sasvfuse/backends/config.hpp"
#include "sasvfuse/backends/forest.hpp"
#include "sasvfuse/backends/gbdt.hpp"
#include "sasvfuse/backends/gmm.hpp"
#include "sasvfuse/backends/kernel_svm.hpp"
#include "sasvfuse/backends/linear.hpp"
#include "sasvfuse/backends/mlp.hpp"
#include "sasvfuse/backends/rff.hpp"
#include "sasvfuse/detail/binary_io.hpp"
#include "sasvfuse/detail/file_io.hpp"

namespace sasvfuse {

using ModelParameters =
    std::variant<LinearModel, KernelSvmModel, RffModel, GmmLlrModel, ForestModel, GbdtModel, MlpNet>;

/// A trained back-end of any kind behind one score() interface. Immutable
/// after training; score() is const and deterministic.
class FusionModel {
public:
    FusionModel(TrainConfig config, std::size_t feature_dim, ModelParameters params)
        : config_(std::move(config)), feature_dim_(feature_dim), params_(std::move(params)) {}

    BackendKind kind() const { return config_.kind; }
    const TrainConfig& config() const { return config_; }
    std::size_t feature_dim() const { return feature_dim_; }
    const ModelParameters& parameters() const { return params_; }

    double score(std::span<const double> x) const {
        if (x.size() != feature_dim_) {
            throw Error("backends", "score: expected " + std::to_string(feature_dim_) + " features, got " +
                                        std::to_string(x.size()));
        }
        const double s = std::visit([&](const auto& m) { return m.score(x); }, params_);
        if (!std::isfinite(s)) throw NumericalError("backends", "score is not finite");
        return s;
    }

    std::vector<double> score_rows(const Matrix& X) const {
        std::vector<double> out(static_cast<std::size_t>(X.rows()));
        parallel_for(out.size(), [&](std::size_t i) {
            out[i] = score(std::span(X.row(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(X.cols())));
        });
        return out;
    }

private:
    TrainConfig config_;
    std::size_t feature_dim_;
    ModelParameters params_;
};

inline FusionModel train_model(const Matrix& X, std::span<const int> y, const TrainConfig& cfg,
                               TrainTrace* trace = nullptr) {
    const auto d = static_cast<std::size_t>(X.cols());
    switch (cfg.kind) {
        case BackendKind::LogReg: return {cfg, d, train_logreg(X, y, cfg, trace)};
        case BackendKind::SvmLinear: return {cfg, d, train_svm_linear(X, y, cfg, trace)};
        case BackendKind::SvmRbf: return {cfg, d, train_svm_kernel(X, y, cfg, KernelType::Rbf, trace)};
        case BackendKind::SvmPoly: return {cfg, d, train_svm_kernel(X, y, cfg, KernelType::Poly, trace)};
        case BackendKind::RffLogReg: return {cfg, d, train_rff_logreg(X, y, cfg, trace)};
        case BackendKind::Gmm: return {cfg, d, train_gmm_llr(X, y, cfg, trace)};
        case BackendKind::RandomForest: return {cfg, d, train_random_forest(X, y, cfg)};
        case BackendKind::Gbdt: return {cfg, d, train_gbdt(X, y, cfg, trace)};
        case BackendKind::Mlp: return {cfg, d, train_mlp(X, y, cfg, trace)};
    }
    throw TrainError("backends", "unsupported backend kind");
}

inline FusionModel train_model(const LabeledMatrix& data, const TrainConfig& cfg, TrainTrace* trace = nullptr) {
    return train_model(data.rows, data.labels, cfg, trace);
}

// ---------------------------------------------------------------------------
// FMD1 persistence:
//   "FMD1" | u32 kind | u32 feature_dim | u64 seed | u32 len + config JSON |
//   u64 len + kind-specific parameter blob. All little-endian, doubles raw.

inline constexpr std::string_view kModelMagic = "FMD1";

namespace detail {

inline void put_matrix(ByteWriter& w, const Matrix& m) {
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}
inline Matrix get_matrix(ByteReader& r, std::string_view what) {
    const auto rows = r.u64(what);
    const auto cols = r.u64(what);
    if (cols != 0 && rows > r.remaining() / 8 / cols) throw LoadError("backends", std::string(what) + ": bad matrix shape");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64(what);
    return m;
}
inline void put_vector(ByteWriter& w, const Vector& v) { w.f64s(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))); }
inline Vector get_vector(ByteReader& r, std::string_view what) {
    auto v = r.f64s(what);
    return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void put_linear(ByteWriter& w, const LinearModel& m) {
    put_vector(w, m.w);
    w.f64(m.b);
}
inline LinearModel get_linear(ByteReader& r) {
    LinearModel m;
    m.w = get_vector(r, "linear weights");
    m.b = r.f64("linear bias");
    return m;
}
inline void put_gmm(ByteWriter& w, const DiagGmm& g) {
    put_vector(w, g.weights);
    put_matrix(w, g.means);
    put_matrix(w, g.variances);
}
inline DiagGmm get_gmm(ByteReader& r) {
    DiagGmm g;
    g.weights = get_vector(r, "gmm weights");
    g.means = get_matrix(r, "gmm means");
    g.variances = get_matrix(r, "gmm variances");
    return g;
}

struct ParamWriter {
    ByteWriter& w;
    void operator()(const LinearModel& m) const { put_linear(w, m); }
    void operator()(const KernelSvmModel& m) const {
        w.u32(static_cast<std::uint32_t>(m.kernel.type));
        w.f64(m.kernel.gamma);
        w.f64(m.kernel.coef0);
        w.u32(static_cast<std::uint32_t>(m.kernel.degree));
        put_matrix(w, m.support_vectors);
        put_vector(w, m.coef);
        w.f64(m.rho);
    }
    void operator()(const RffModel& m) const {
        put_vector(w, m.scaler.mean);
        put_vector(w, m.scaler.stddev);
        put_vector(w, m.pca.mean);
        put_matrix(w, m.pca.components);
        put_vector(w, m.pca.explained_variance);
        put_matrix(w, m.rff.weights);
        put_vector(w, m.rff.offset);
        w.f64(m.rff.gamma);
        put_linear(w, m.head);
    }
    void operator()(const GmmLlrModel& m) const {
        put_gmm(w, m.positive);
        put_gmm(w, m.negative);
    }
    void operator()(const ForestModel& m) const {
        w.u64(m.trees.size());
        for (const auto& t : m.trees) {
            w.u64(t.nodes.size());
            for (const auto& n : t.nodes) {
                w.u32(static_cast<std::uint32_t>(n.feature));
                w.f64(n.threshold);
                w.u32(static_cast<std::uint32_t>(n.left));
                w.u32(static_cast<std::uint32_t>(n.right));
                w.f64(n.value);
            }
        }
    }
    void operator()(const GbdtModel& m) const {
        w.f64(m.base_score);
        w.u64(m.trees.size());
        for (const auto& t : m.trees) {
            w.u64(t.features.size());
            for (auto f : t.features) w.u32(static_cast<std::uint32_t>(f));
            w.f64s(t.thresholds);
            w.f64s(t.leaf_values);
        }
    }
    void operator()(const MlpNet& m) const {
        w.f64(m.negative_slope);
        w.u64(m.weights.size());
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            put_matrix(w, m.weights[l]);
            put_vector(w, m.biases[l]);
        }
    }
};

inline ModelParameters read_parameters(BackendKind kind, ByteReader& r) {
    switch (kind) {
        case BackendKind::LogReg:
        case BackendKind::SvmLinear: return get_linear(r);
        case BackendKind::SvmRbf:
        case BackendKind::SvmPoly: {
            KernelSvmModel m;
            m.kernel.type = static_cast<KernelType>(r.u32("kernel"));
            m.kernel.gamma = r.f64("kernel");
            m.kernel.coef0 = r.f64("kernel");
            m.kernel.degree = static_cast<int>(r.u32("kernel"));
            m.support_vectors = get_matrix(r, "support vectors");
            m.coef = get_vector(r, "dual coefficients");
            m.rho = r.f64("rho");
            return m;
        }
        case BackendKind::RffLogReg: {
            RffModel m;
            m.scaler.mean = get_vector(r, "scaler");
            m.scaler.stddev = get_vector(r, "scaler");
            m.pca.mean = get_vector(r, "pca");
            m.pca.components = get_matrix(r, "pca");
            m.pca.explained_variance = get_vector(r, "pca");
            m.rff.weights = get_matrix(r, "rff");
            m.rff.offset = get_vector(r, "rff");
            m.rff.gamma = r.f64("rff");
            m.head = get_linear(r);
            return m;
        }
        case BackendKind::Gmm: {
            GmmLlrModel m;
            m.positive = get_gmm(r);
            m.negative = get_gmm(r);
            return m;
        }
        case BackendKind::RandomForest: {
            ForestModel m;
            const auto nt = r.u64("forest");
            for (std::uint64_t t = 0; t < nt; ++t) {
                CartTree tree;
                const auto nn = r.u64("tree");
                if (nn > r.remaining() / 28) throw LoadError("backends", "tree: bad node count");
                tree.nodes.resize(nn);
                for (auto& node : tree.nodes) {
                    node.feature = static_cast<std::int32_t>(r.u32("node"));
                    node.threshold = r.f64("node");
                    node.left = static_cast<std::int32_t>(r.u32("node"));
                    node.right = static_cast<std::int32_t>(r.u32("node"));
                    node.value = r.f64("node");
                }
                m.trees.push_back(std::move(tree));
            }
            return m;
        }
        case BackendKind::Gbdt: {
            GbdtModel m;
            m.base_score = r.f64("gbdt");
            const auto nt = r.u64("gbdt");
            for (std::uint64_t t = 0; t < nt; ++t) {
                ObliviousTree tree;
                const auto depth = r.u64("tree");
                if (depth > 16) throw LoadError("backends", "tree: bad depth");
                for (std::uint64_t l = 0; l < depth; ++l) tree.features.push_back(static_cast<std::int32_t>(r.u32("tree")));
                tree.thresholds = r.f64s("tree");
                tree.leaf_values = r.f64s("tree");
                m.trees.push_back(std::move(tree));
            }
            return m;
        }
        case BackendKind::Mlp: {
            MlpNet m;
            m.negative_slope = r.f64("mlp");
            const auto nl = r.u64("mlp");
            for (std::uint64_t l = 0; l < nl; ++l) {
                m.weights.push_back(get_matrix(r, "mlp layer"));
                m.biases.push_back(get_vector(r, "mlp layer"));
            }
            return m;
        }
    }
    throw LoadError("backends", "unknown model kind");
}

}  // namespace detail

inline std::vector<std::uint8_t> write_model(const FusionModel& model) {
    detail::ByteWriter params;
    std::visit(detail::ParamWriter{params}, model.parameters());
    detail::ByteWriter w;
    w.bytes(kModelMagic);
    w.u32(static_cast<std::uint32_t>(model.kind()));
    w.u32(static_cast<std::uint32_t>(model.feature_dim()));
    w.u64(model.config().seed);
    w.str32(to_json(model.config()).dump());
    const auto& blob = params.buffer();
    w.u64(blob.size());
    w.bytes(std::string_view(reinterpret_cast<const char*>(blob.data()), blob.size()));
    return std::move(w).buffer();
}

inline FusionModel read_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kModelMagic) {
        throw LoadError("backends", "bad model magic (expected \"FMD1\")");
    }
    detail::ByteReader r(bytes.subspan(4), "backends");
    const auto kind_tag = r.u32("header");
    if (kind_tag < 1 || kind_tag > 9) throw LoadError("backends", "unknown model kind tag " + std::to_string(kind_tag));
    const auto kind = static_cast<BackendKind>(kind_tag);
    const auto dim = r.u32("header");
    const auto seed = r.u64("header");
    TrainConfig cfg;
    try {
        cfg = train_config_from_json(nlohmann::json::parse(r.str32("config")));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("backends", std::string("bad config echo: ") + e.what());
    }
    if (cfg.kind != kind || cfg.seed != seed) throw LoadError("backends", "config echo disagrees with header");
    const auto blob_len = r.u64("parameters");
    if (blob_len != r.remaining()) throw LoadError("backends", "parameter blob length mismatch");
    auto params = detail::read_parameters(kind, r);
    if (!r.at_end()) throw LoadError("backends", "trailing bytes after parameters");
    return FusionModel(cfg, dim, std::move(params));
}

inline void save_model(const std::filesystem::path& path, const FusionModel& m) {
    detail::write_file(path, write_model(m), "backends");
}

inline FusionModel load_model(const std::filesystem::path& path) {
    return read_model(detail::read_binary_file(path, "backends"));
}

}  // namespace sasvfuse
