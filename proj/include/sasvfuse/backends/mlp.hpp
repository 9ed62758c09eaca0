#pragma once

#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "sasvfuse/backends/config.hpp"
#include "sasvfuse/backends/linear.hpp"

namespace sasvfuse {

inline double leaky_relu(double x, double slope) { return x >= 0 ? x : slope * x; }

/// Fully connected net: hidden layers with LeakyReLU, one linear output unit.
struct MlpNet {
    std::vector<Matrix> weights;  ///< layer l: out x in
    std::vector<Vector> biases;
    double negative_slope = 0.3;

    static MlpNet create(std::size_t input_dim, const std::vector<std::size_t>& hidden, double slope,
                         std::uint64_t seed) {
        MlpNet net;
        net.negative_slope = slope;
        std::mt19937_64 rng(seed);
        std::size_t in = input_dim;
        auto add_layer = [&](std::size_t out) {
            // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            std::uniform_real_distribution<double> u(-bound, bound);
            Matrix W(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = u(rng);
            Vector b(static_cast<Eigen::Index>(out));
            for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = u(rng);
            net.weights.push_back(std::move(W));
            net.biases.push_back(std::move(b));
            in = out;
        };
        for (std::size_t h : hidden) add_layer(h);
        add_layer(1);
        return net;
    }

    std::size_t input_dim() const { return static_cast<std::size_t>(weights.front().cols()); }

    /// Activations of every layer for a batch (rows = samples). acts[0] is the
    /// input, acts.back() the n x 1 pre-sigmoid output.
    std::vector<Matrix> forward(const Matrix& X) const {
        std::vector<Matrix> acts;
        acts.push_back(X);
        for (std::size_t l = 0; l < weights.size(); ++l) {
            Matrix z = acts.back() * weights[l].transpose();
            z.rowwise() += biases[l].transpose();
            if (l + 1 < weights.size()) {
                z = z.unaryExpr([s = negative_slope](double v) { return leaky_relu(v, s); });
            }
            acts.push_back(std::move(z));
        }
        return acts;
    }

    double score(std::span<const double> x) const {
        Vector a = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
        for (std::size_t l = 0; l < weights.size(); ++l) {
            Vector z = weights[l] * a + biases[l];
            if (l + 1 < weights.size()) z = z.unaryExpr([s = negative_slope](double v) { return leaky_relu(v, s); });
            a = std::move(z);
        }
        return a(0);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        return n;
    }

    /// Mean logistic loss over the batch; grads mirror weights/biases.
    double loss_and_gradient(const Matrix& X, std::span<const int> y, std::vector<Matrix>& grad_w,
                             std::vector<Vector>& grad_b) const {
        const auto acts = forward(X);
        const double n = static_cast<double>(X.rows());
        const Matrix& out = acts.back();
        Matrix delta(out.rows(), 1);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double t = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
            const double z = out(i, 0);
            loss += detail::log1pexp_neg(t > 0 ? z : -z);
            delta(i, 0) = (detail::sigmoid(z) - t) / n;
        }
        grad_w.resize(weights.size());
        grad_b.resize(biases.size());
        for (std::size_t l = weights.size(); l-- > 0;) {
            grad_w[l] = delta.transpose() * acts[l];
            grad_b[l] = delta.colwise().sum().transpose();
            if (l == 0) break;
            Matrix back = delta * weights[l];
            const Matrix& a = acts[l];
            for (Eigen::Index i = 0; i < back.rows(); ++i)
                for (Eigen::Index j = 0; j < back.cols(); ++j)
                    if (a(i, j) < 0) back(i, j) *= negative_slope;
            delta = std::move(back);
        }
        return loss / n;
    }
};

/// Mini-batch SGD with momentum (v = mu v + g; p -= lr v), seeded shuffling.
/// trace->objective holds the mean training loss after each epoch.
inline MlpNet train_mlp(const Matrix& X, std::span<const int> y, const TrainConfig& cfg, TrainTrace* trace = nullptr) {
    detail::check_training_data(X, y, "backends/mlp");
    if (cfg.batch_size == 0) throw TrainError("backends/mlp", "batch_size must be positive");
    MlpNet net = MlpNet::create(static_cast<std::size_t>(X.cols()), cfg.layer_sizes, cfg.negative_slope, cfg.seed);
    std::vector<Matrix> vel_w, gw;
    std::vector<Vector> vel_b, gb;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        vel_w.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
        vel_b.push_back(Vector::Zero(net.biases[l].size()));
    }
    const auto n = static_cast<std::size_t>(X.rows());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(detail::mix_seed(cfg.seed));
    std::vector<int> batch_y;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            Matrix xb = X(idx, Eigen::all);
            batch_y.resize(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) batch_y[k] = y[static_cast<std::size_t>(idx[k])];
            const double loss = net.loss_and_gradient(xb, batch_y, gw, gb);
            if (!std::isfinite(loss)) throw NumericalError("backends/mlp", "non-finite loss at epoch " + std::to_string(epoch));
            epoch_loss += loss * static_cast<double>(idx.size());
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                vel_w[l] = cfg.momentum * vel_w[l] + gw[l];
                vel_b[l] = cfg.momentum * vel_b[l] + gb[l];
                net.weights[l] -= cfg.learning_rate * vel_w[l];
                net.biases[l] -= cfg.learning_rate * vel_b[l];
            }
        }
        if (trace) trace->objective.push_back(epoch_loss / static_cast<double>(n));
    }
    if (trace) {
        trace->iterations = cfg.epochs;
        trace->converged = true;
    }
    return net;
}

}  // namespace sasvfuse
