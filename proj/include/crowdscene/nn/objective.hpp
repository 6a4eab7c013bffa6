#pragma once

#include "crowdscene/dsp.hpp"
#include "crowdscene/nn/model.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace crowdscene::nn {

using dsp::Patch;
using SoftLabel = ProbVector;

/// Probabilities are clipped to this floor before taking logarithms.
inline constexpr double kLogClip = 1e-12;

/// Stacks patches into the (channels, batch * h * w) layout the network consumes.
template <typename Scalar>
Tensor<Scalar> pack_batch(std::span<const Patch<Scalar>> patches, int channels, int size) {
    const Eigen::Index hw = static_cast<Eigen::Index>(size) * size;
    Tensor<Scalar> x(channels, static_cast<Eigen::Index>(patches.size()) * hw);
    for (std::size_t b = 0; b < patches.size(); ++b) {
        const auto& p = patches[b];
        if (p.channels != channels || p.values.rows() != channels || p.values.cols() != hw) {
            throw ShapeMismatch("patch " + std::to_string(b) + " does not match the network input (" +
                                std::to_string(channels) + " x " + std::to_string(size) + " x " +
                                std::to_string(size) + ")");
        }
        x.middleCols(static_cast<Eigen::Index>(b) * hw, hw) = p.values;
    }
    return x;
}

template <typename Scalar>
std::vector<ProbVector> unpack_probs(const Tensor<Scalar>& probs) {
    std::vector<ProbVector> out(static_cast<std::size_t>(probs.cols()));
    for (Eigen::Index b = 0; b < probs.cols(); ++b) {
        out[static_cast<std::size_t>(b)] = probs.col(b).template cast<double>();
    }
    return out;
}

template <typename Scalar>
std::vector<ProbVector> forward(const Network<Scalar>& net, std::span<const Patch<Scalar>> batch,
                                Mode mode, Rng* rng = nullptr,
                                std::vector<StageShape>* trace = nullptr) {
    if (batch.empty()) return {};
    const Tensor<Scalar> x = pack_batch(batch, net.spec.input_channels, net.spec.input_size);
    return unpack_probs(forward_tensor(net, x, static_cast<Eigen::Index>(batch.size()), mode, rng,
                                       static_cast<ForwardCache<Scalar>*>(nullptr), trace));
}

/// Data term of the KL objective: sum_n sum_c y log(y / y_hat); zero-target terms vanish.
inline double kl_divergence_sum(std::span<const SoftLabel> y, std::span<const ProbVector> y_hat) {
    if (y.size() != y_hat.size()) throw ShapeMismatch("kl_loss: batch sizes differ");
    double total = 0.0;
    for (std::size_t n = 0; n < y.size(); ++n) {
        for (int c = 0; c < kClassCount; ++c) {
            const double t = y[n](c);
            if (t <= 0.0) continue;
            total += t * (std::log(t) - std::log(std::max(y_hat[n](c), kLogClip)));
        }
    }
    return total;
}

/// sum_n KL(y_n || y_hat_n) + (lambda / 2) * ||theta||^2 over trainable parameters.
template <typename Scalar>
double kl_loss(std::span<const SoftLabel> y, std::span<const ProbVector> y_hat,
               const Network<Scalar>& params, double lambda) {
    const double data = kl_divergence_sum(y, y_hat);
    return lambda == 0.0 ? data : data + 0.5 * lambda * params.squared_norm();
}

template <typename Scalar>
struct GradientResult {
    Network<Scalar> grads;
    double loss = 0.0;
    std::vector<ProbVector> probs;
    ForwardCache<Scalar> cache;
};

/// Train-mode forward and backward pass of the KL objective. Dropout masks come
/// from `rng`, so a copied generator reproduces the same pass exactly.
template <typename Scalar>
GradientResult<Scalar> gradients(const Network<Scalar>& net, std::span<const Patch<Scalar>> batch,
                                 std::span<const SoftLabel> labels, double lambda, Rng& rng) {
    if (batch.size() != labels.size()) throw ShapeMismatch("gradients: batch and labels differ in size");
    if (batch.empty()) throw ShapeMismatch("gradients: empty batch");
    const auto n = static_cast<Eigen::Index>(batch.size());
    GradientResult<Scalar> out;
    const Tensor<Scalar> x = pack_batch(batch, net.spec.input_channels, net.spec.input_size);
    const Tensor<Scalar> probs = forward_tensor(net, x, n, Mode::Train, &rng, &out.cache);
    out.probs = unpack_probs(probs);

    // d/dz of sum_c y_c log(y_c / softmax(z)_c) is softmax(z) * sum(y) - y.
    Tensor<Scalar> dlogits(probs.rows(), n);
    for (Eigen::Index b = 0; b < n; ++b) {
        const ProbVector& y = labels[static_cast<std::size_t>(b)];
        dlogits.col(b) = probs.col(b) * static_cast<Scalar>(y.sum()) - y.cast<Scalar>();
    }
    out.grads = net.zeros_like();
    backward(net, out.cache, dlogits, out.grads);
    if (lambda != 0.0) {
        const auto lam = static_cast<Scalar>(lambda);
        std::vector<const Tensor<Scalar>*> params;
        net.visit([&](const std::string&, const Tensor<Scalar>& t, bool trainable) {
            params.push_back(trainable ? &t : nullptr);
        });
        std::size_t k = 0;
        out.grads.visit([&](const std::string&, Tensor<Scalar>& t, bool) {
            if (params[k] != nullptr) t += lam * *params[k];
            ++k;
        });
    }
    out.loss = kl_loss<Scalar>(labels, out.probs, net, lambda);
    return out;
}

}  // namespace crowdscene::nn
