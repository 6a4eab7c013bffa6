#pragma once
// Independent reference computations used by the unit tests and the acceptance suite.

#include "crowdscene/fusion.hpp"
#include "crowdscene/nn/objective.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using namespace crowdscene;

/// Table 2 output column, one entry per stage ({h, w, c} or {units}).
inline std::vector<nn::StageShape> vgg15_table(int classes = kClassCount) {
    return {{128, 128, 32}, {64, 64, 32},  {64, 64, 64},  {32, 32, 64},  {32, 32, 128},
            {32, 32, 128},  {32, 32, 128}, {16, 16, 128}, {16, 16, 256}, {16, 16, 256},
            {16, 16, 256},  {256},         {1024},        {1024},        {classes}};
}

/// Two conv blocks and one FC layer on 4 x 4 inputs.
inline nn::NetworkSpec tiny_spec(int channels = 2) {
    nn::NetworkSpec s;
    s.input_channels = channels;
    s.input_size = 4;
    s.conv = {{3, nn::Pool::Avg2, 0.3}, {4, nn::Pool::Global, 0.2}};
    s.dense = {};
    return s;
}

template <typename Scalar>
std::vector<dsp::Patch<Scalar>> random_patches(int count, int channels, int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<dsp::Patch<Scalar>> out(static_cast<std::size_t>(count));
    for (auto& p : out) {
        p.channels = channels;
        p.values.resize(channels, static_cast<Eigen::Index>(size) * size);
        for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values.data()[i] = static_cast<Scalar>(g(rng));
    }
    return out;
}

inline std::vector<ProbVector> random_soft_labels(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ProbVector> out(static_cast<std::size_t>(count));
    for (auto& y : out) {
        for (int c = 0; c < kClassCount; ++c) y(c) = u(rng);
        y /= y.sum();
    }
    return out;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Central differences (step h) of the full objective against the analytic
/// gradient for every trainable scalar; the dropout masks are pinned by
/// replaying the same generator state.
inline GradCheck gradient_check(const nn::Network<double>& net, const std::vector<dsp::Patch<double>>& batch,
                                const std::vector<ProbVector>& labels, double lambda, std::uint64_t seed,
                                double h = 1e-4) {
    nn::Rng rng(seed);
    const auto analytic = nn::gradients<double>(net, batch, labels, lambda, rng);
    auto loss_at = [&](const nn::Network<double>& p) {
        nn::Rng r(seed);
        return nn::gradients<double>(p, batch, labels, lambda, r).loss;
    };
    std::vector<const nn::Tensor<double>*> grads;
    analytic.grads.visit([&](const std::string&, const nn::Tensor<double>& t, bool) { grads.push_back(&t); });

    GradCheck result;
    nn::Network<double> probe = net;
    std::size_t k = 0;
    probe.visit([&](const std::string&, nn::Tensor<double>& t, bool trainable) {
        const auto& g = *grads[k++];
        if (!trainable) return;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const double orig = t.data()[i];
            t.data()[i] = orig + h;
            const double up = loss_at(probe);
            t.data()[i] = orig - h;
            const double down = loss_at(probe);
            t.data()[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = g.data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            result.max_rel_error = std::max(result.max_rel_error, rel);
            ++result.checked;
        }
    });
    return result;
}

/// Straightforward per-segment fusion following the textbook formulas.
inline std::vector<ProbVector> brute_force_fuse(const std::vector<std::vector<ProbVector>>& frameworks,
                                                fusion::FusionScheme scheme) {
    const std::size_t s_count = frameworks.size();
    const std::size_t n = frameworks.front().size();
    std::vector<ProbVector> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < kClassCount; ++c) {
            double v = scheme == fusion::FusionScheme::Prod ? 1.0 : 0.0;
            for (std::size_t s = 0; s < s_count; ++s) {
                const double p = frameworks[s][i](c);
                if (scheme == fusion::FusionScheme::Mean) v += p;
                if (scheme == fusion::FusionScheme::Prod) v *= p;
                if (scheme == fusion::FusionScheme::Max) v = std::max(v, p);
            }
            if (scheme != fusion::FusionScheme::Max) v /= static_cast<double>(s_count);
            out[i](c) = v;
        }
    }
    return out;
}

/// First index holding the maximum.
inline int first_max(const ProbVector& p) {
    int best = 0;
    for (int c = 1; c < kClassCount; ++c) {
        if (p(c) > p(best)) best = c;
    }
    return best;
}

inline ProbVector random_prob(std::mt19937_64& rng) {
    std::gamma_distribution<double> g(0.5, 1.0);
    ProbVector p;
    for (int c = 0; c < kClassCount; ++c) p(c) = g(rng) + 1e-300;
    return p / p.sum();
}

}  // namespace oracle
