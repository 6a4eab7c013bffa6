#pragma once

#include "crowdscene/common.hpp"
#include "crowdscene/dsp.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace crowdscene::augment {

using dsp::kPatchSize;
using dsp::Patch;

/// Mixed target distribution; sums to one for every label produced here.
using SoftLabel = ProbVector;

enum class MixupDistribution { Uniform01, Beta };

struct AugmentConfig {
    int freq_mask_width = 10;
    int time_mask_width = 10;
    MixupDistribution mixup_distribution = MixupDistribution::Uniform01;
    double beta_alpha = 0.2;
    /// Probability that a patch receives the masking step.
    double apply_probability = 1.0;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (freq_mask_width < 0 || freq_mask_width > kPatchSize || time_mask_width < 0 ||
            time_mask_width > kPatchSize) {
            throw Error("mask widths must lie in [0, 128]");
        }
        if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) {
            throw Error("apply_probability must lie in [0, 1]");
        }
        if (mixup_distribution == MixupDistribution::Beta && !(beta_alpha > 0.0)) {
            throw Error("beta_alpha must be positive");
        }
    }
};

using Rng = std::mt19937_64;

/// Zeroes one band of `freq_mask_width` columns and one band of
/// `time_mask_width` rows. Mask positions are shared by all channels.
template <typename Scalar>
Patch<Scalar> spec_augment(Patch<Scalar> patch, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    if (patch.values.cols() != kPatchSize * kPatchSize) {
        throw ShapeMismatch("spec_augment expects 128x128 planes");
    }
    const int wf = cfg.freq_mask_width;
    const int wt = cfg.time_mask_width;
    std::uniform_int_distribution<int> f_start(0, kPatchSize - wf);
    std::uniform_int_distribution<int> t_start(0, kPatchSize - wt);
    const int f0 = f_start(rng);
    const int t0 = t_start(rng);
    for (int c = 0; c < patch.channels; ++c) {
        for (int r = 0; r < kPatchSize; ++r) {
            if (r >= t0 && r < t0 + wt) {
                for (int col = 0; col < kPatchSize; ++col) patch.at(c, r, col) = Scalar(0);
            } else {
                for (int col = f0; col < f0 + wf; ++col) patch.at(c, r, col) = Scalar(0);
            }
        }
    }
    return patch;
}

template <typename Scalar>
struct MixedPair {
    Patch<Scalar> x1;
    SoftLabel y1;
    Patch<Scalar> x2;
    SoftLabel y2;
};

/// x1 = g*a + (1-g)*b, x2 = (1-g)*a + g*b, labels mixed with the same weights.
template <typename Scalar>
MixedPair<Scalar> mixup_pair(const Patch<Scalar>& x_a, const SoftLabel& y_a,
                             const Patch<Scalar>& x_b, const SoftLabel& y_b, double gamma) {
    if (x_a.channels != x_b.channels || x_a.values.rows() != x_b.values.rows() ||
        x_a.values.cols() != x_b.values.cols()) {
        throw ShapeMismatch("mixup_pair: patch shapes differ");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("mixup gamma must lie in [0, 1]");
    const auto g = static_cast<Scalar>(gamma);
    const auto h = static_cast<Scalar>(1.0 - gamma);
    MixedPair<Scalar> out;
    out.x1 = x_a;
    out.x2 = x_b;
    out.x1.values = g * x_a.values + h * x_b.values;
    out.x2.values = h * x_a.values + g * x_b.values;
    out.y1 = gamma * y_a + (1.0 - gamma) * y_b;
    out.y2 = (1.0 - gamma) * y_a + gamma * y_b;
    return out;
}

inline double draw_gamma(const AugmentConfig& cfg, Rng& rng) {
    if (cfg.mixup_distribution == MixupDistribution::Uniform01) {
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }
    std::gamma_distribution<double> g(cfg.beta_alpha, 1.0);
    const double a = g(rng);
    const double b = g(rng);
    return a + b > 0.0 ? a / (a + b) : 0.5;
}

template <typename Scalar>
struct Batch {
    std::vector<Patch<Scalar>> patches;
    std::vector<SoftLabel> labels;
};

/// Masks every input patch (with cfg.apply_probability), then appends one mixed
/// copy per item paired with a partner drawn from a random permutation. The
/// result holds 2N items: the N masked originals followed by N mixtures.
template <typename Scalar>
Batch<Scalar> augment_batch(const std::vector<Patch<Scalar>>& patches,
                            const std::vector<SoftLabel>& labels, const AugmentConfig& cfg,
                            Rng& rng) {
    if (patches.size() != labels.size()) throw ShapeMismatch("augment_batch: size mismatch");
    cfg.validate();
    const std::size_t n = patches.size();
    Batch<Scalar> out;
    out.patches.reserve(2 * n);
    out.labels.reserve(2 * n);
    std::bernoulli_distribution apply(cfg.apply_probability);
    for (std::size_t i = 0; i < n; ++i) {
        out.patches.push_back(apply(rng) ? spec_augment(patches[i], cfg, rng) : patches[i]);
        out.labels.push_back(labels[i]);
    }
    std::vector<std::size_t> partner(n);
    std::iota(partner.begin(), partner.end(), std::size_t{0});
    std::shuffle(partner.begin(), partner.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        const double gamma = draw_gamma(cfg, rng);
        auto mixed = mixup_pair(out.patches[i], out.labels[i], out.patches[partner[i]],
                                out.labels[partner[i]], gamma);
        out.patches.push_back(std::move(mixed.x1));
        out.labels.push_back(mixed.y1);
    }
    return out;
}

}  // namespace crowdscene::augment
