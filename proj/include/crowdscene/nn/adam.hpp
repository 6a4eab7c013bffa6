#pragma once

#include "crowdscene/nn/network.hpp"

#include <cmath>
#include <vector>

namespace crowdscene::nn {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
    Network<Scalar> m;
    Network<Scalar> v;
    long step = 0;

    static AdamState init(const Network<Scalar>& params) {
        AdamState s;
        s.m = params.zeros_like();
        s.v = params.zeros_like();
        return s;
    }
};

/// One bias-corrected Adam update of every trainable tensor.
template <typename Scalar>
void adam_step(Network<Scalar>& params, const Network<Scalar>& grads, AdamState<Scalar>& state,
               const AdamConfig& cfg) {
    state.step += 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const auto b1 = static_cast<Scalar>(cfg.beta1);
    const auto b2 = static_cast<Scalar>(cfg.beta2);
    const auto step_size = static_cast<Scalar>(cfg.learning_rate / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(cfg.epsilon);

    std::vector<Tensor<Scalar>*> ms, vs;
    std::vector<const Tensor<Scalar>*> gs;
    state.m.visit([&](const std::string&, Tensor<Scalar>& t, bool) { ms.push_back(&t); });
    state.v.visit([&](const std::string&, Tensor<Scalar>& t, bool) { vs.push_back(&t); });
    grads.visit([&](const std::string&, const Tensor<Scalar>& t, bool) { gs.push_back(&t); });
    std::size_t k = 0;
    params.visit([&](const std::string& name, Tensor<Scalar>& p, bool trainable) {
        const std::size_t i = k++;
        if (!trainable) return;
        const auto& g = *gs[i];
        if (g.rows() != p.rows() || g.cols() != p.cols()) {
            throw ShapeMismatch("adam_step: gradient shape differs for " + name);
        }
        auto& m = *ms[i];
        auto& v = *vs[i];
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
        p.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + eps);
    });
}

}  // namespace crowdscene::nn
