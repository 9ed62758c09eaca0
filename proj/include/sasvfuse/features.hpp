#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sasvfuse/embstore.hpp"
#include "sasvfuse/error.hpp"
#include "sasvfuse/protocol.hpp"

namespace sasvfuse {

/// Row-major so each sample is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class KeyRole { Enroll, Test };

inline std::string_view to_string(KeyRole role) { return role == KeyRole::Enroll ? "enroll" : "test"; }

struct FeaturePart {
    std::string store;
    KeyRole role = KeyRole::Test;
    std::size_t expected_dim = 0;

    friend bool operator==(const FeaturePart&, const FeaturePart&) = default;
};

/// Ordered concatenation recipe.
class FeatureSpec {
public:
    FeatureSpec() = default;
    explicit FeatureSpec(std::vector<FeaturePart> parts) : parts_(std::move(parts)) {
        if (parts_.empty()) throw ConfigError("features", "feature spec has no parts");
        std::set<std::pair<std::string, KeyRole>> seen;
        for (const auto& p : parts_) {
            if (p.expected_dim == 0) throw ConfigError("features", "part '" + p.store + "' has zero dim");
            if (!seen.emplace(p.store, p.role).second) {
                throw ConfigError("features", "duplicate part '" + p.store + "/" + std::string(to_string(p.role)) + "'");
            }
            total_dim_ += p.expected_dim;
        }
    }

    const std::vector<FeaturePart>& parts() const { return parts_; }
    std::size_t total_dim() const { return total_dim_; }

private:
    std::vector<FeaturePart> parts_;
    std::size_t total_dim_ = 0;
};

using StoreMap = std::map<std::string, EmbeddingStore, std::less<>>;

/// Labels in the positive set map to 1. Default: Target only.
struct PositiveRule {
    std::array<bool, 3> positive{true, false, false};

    bool operator()(TrialLabel label) const { return positive[static_cast<std::size_t>(label)]; }
};

struct LabeledMatrix {
    Matrix rows;
    std::vector<int> labels;
    std::vector<TrialRecord> trials;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
};

namespace detail {
inline std::string describe(const TrialRecord& t) {
    return "'" + t.enroll_id + " " + t.test_id + "'";
}
}  // namespace detail

inline void assemble_trial_into(const TrialRecord& trial, const StoreMap& stores, const FeatureSpec& spec,
                                std::span<double> out) {
    std::size_t offset = 0;
    for (const auto& part : spec.parts()) {
        const std::string part_name = part.store + "/" + std::string(to_string(part.role));
        auto it = stores.find(part.store);
        if (it == stores.end()) {
            throw AssemblyError("features", "trial " + detail::describe(trial) + ", part " + part_name +
                                                ": store '" + part.store + "' not loaded");
        }
        const auto& store = it->second;
        if (store.dim() != part.expected_dim) {
            throw AssemblyError("features", "trial " + detail::describe(trial) + ", part " + part_name +
                                                ": expects dim " + std::to_string(part.expected_dim) +
                                                " but store holds dim " + std::to_string(store.dim()));
        }
        const std::string& key = part.role == KeyRole::Enroll ? trial.enroll_id : trial.test_id;
        if (!store.contains(key)) {
            throw AssemblyError("features", "trial " + detail::describe(trial) + ", part " + part_name + ": id '" +
                                                key + "' missing from store '" + part.store + "'");
        }
        auto v = store.get(key);
        std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += v.size();
    }
}

inline std::vector<double> assemble_trial(const TrialRecord& trial, const StoreMap& stores, const FeatureSpec& spec) {
    std::vector<double> out(spec.total_dim());
    assemble_trial_into(trial, stores, spec, out);
    return out;
}

inline LabeledMatrix assemble_dataset(const TrialList& trials, const StoreMap& stores, const FeatureSpec& spec,
                                      PositiveRule rule = {}) {
    LabeledMatrix data;
    data.rows.resize(static_cast<Eigen::Index>(trials.size()), static_cast<Eigen::Index>(spec.total_dim()));
    data.labels.reserve(trials.size());
    data.trials = trials.records();
    for (std::size_t i = 0; i < trials.size(); ++i) {
        try {
            assemble_trial_into(trials[i], stores, spec,
                                std::span(data.rows.row(static_cast<Eigen::Index>(i)).data(), spec.total_dim()));
        } catch (const AssemblyError& e) {
            throw AssemblyError("features", "trial index " + std::to_string(i) + ": " + e.what());
        }
        data.labels.push_back(rule(trials[i].label) ? 1 : 0);
    }
    return data;
}

// ---------------------------------------------------------------------------
// Standard scaler

inline constexpr double kScalerFloor = 1e-12;

struct ScalerModel {
    Vector mean;
    Vector stddev;  ///< population stddev, floored at kScalerFloor
};

inline ScalerModel fit_scaler(const Matrix& X) {
    if (X.rows() == 0 || X.cols() == 0) throw Error("features", "fit_scaler: empty matrix");
    ScalerModel m;
    const double n = static_cast<double>(X.rows());
    m.mean = X.colwise().sum().transpose() / n;
    m.stddev.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double ss = (X.col(j).array() - m.mean(j)).square().sum();
        m.stddev(j) = std::max(std::sqrt(ss / n), kScalerFloor);
    }
    return m;
}

inline Matrix apply_scaler(const ScalerModel& m, const Matrix& X) {
    if (X.cols() != m.mean.size()) throw Error("features", "apply_scaler: dim mismatch");
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (m.stddev(j) <= kScalerFloor) {
            out.col(j).setZero();
        } else {
            out.col(j) = (X.col(j).array() - m.mean(j)) / m.stddev(j);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
    Vector mean;
    Matrix components;      ///< k x d, orthonormal rows
    Vector explained_variance;  ///< length k, non-increasing
};

/// Eigen-decomposition of the sample covariance. Each component's sign is
/// fixed so that its largest-magnitude coordinate is positive.
inline PcaModel fit_pca(const Matrix& X, std::size_t k) {
    if (X.rows() == 0 || X.cols() == 0) throw Error("features", "fit_pca: empty matrix");
    const auto n = static_cast<std::size_t>(X.rows());
    const auto d = static_cast<std::size_t>(X.cols());
    if (k < 1 || k > std::min(n, d)) {
        throw Error("features", "fit_pca: k=" + std::to_string(k) + " out of range [1, " +
                                    std::to_string(std::min(n, d)) + "]");
    }
    PcaModel m;
    m.mean = X.colwise().mean().transpose();
    Matrix centered = X.rowwise() - m.mean.transpose();
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericalError("features", "fit_pca: eigen-decomposition failed");

    // Eigen returns ascending eigenvalues; take the top k in descending order.
    m.components.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    m.explained_variance.resize(static_cast<Eigen::Index>(k));
    for (std::size_t c = 0; c < k; ++c) {
        const auto src = static_cast<Eigen::Index>(d - 1 - c);
        Eigen::VectorXd v = eig.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        m.components.row(static_cast<Eigen::Index>(c)) = v.transpose();
        m.explained_variance(static_cast<Eigen::Index>(c)) = std::max(0.0, eig.eigenvalues()(src));
    }
    return m;
}

inline Matrix apply_pca(const PcaModel& m, const Matrix& X) {
    if (X.cols() != m.mean.size()) throw Error("features", "apply_pca: dim mismatch");
    Matrix centered = X.rowwise() - m.mean.transpose();
    return centered * m.components.transpose();
}

// ---------------------------------------------------------------------------

inline double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("features", "cosine: dim mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error("features", "cosine: zero-norm input");
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

}  // namespace sasvfuse
