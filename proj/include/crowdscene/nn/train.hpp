#pragma once

#include "crowdscene/augment.hpp"
#include "crowdscene/nn/adam.hpp"
#include "crowdscene/nn/objective.hpp"

#include <functional>
#include <span>
#include <vector>

namespace crowdscene::nn {

CROWDSCENE_DEFINE_ERROR(NonFiniteLoss);

struct TrainConfig {
    int epochs = 100;
    AdamConfig adam;
    double l2_lambda = 1e-4;
    /// Source patches per step; augmentation doubles the batch the network sees.
    int batch_size = 16;
    /// Patches drawn per segment each epoch; 0 uses every patch.
    int patches_per_segment = 0;
    /// Re-estimate batch-norm running statistics on the training patches after the last epoch.
    bool recalibrate_batchnorm = true;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// One labelled segment and its patches.
struct TrainSegment {
    std::vector<Patch<float>> patches;
    SceneLabel label = SceneLabel::Riot;
};

struct EpochStats {
    int epoch = 0;
    /// Mean per-sample objective over the augmented stream.
    double loss = 0.0;
    /// Argmax accuracy of the (masked, unmixed) training patches seen this epoch.
    double train_accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_loss = 0.0;
};

struct TrainResult {
    Network<float> params;
    TrainHistory history;
};

/// Called after every epoch with the current parameters; `improved` marks a new best loss.
using EpochCallback = std::function<void(const EpochStats&, const Network<float>&, bool improved)>;

/// Mini-batch Adam on the KL objective over masked + mixed batches. Returns the
/// parameters from the epoch with the lowest training loss.
TrainResult fit(Network<float> init, std::span<const TrainSegment> data, const TrainConfig& cfg,
                const augment::AugmentConfig& augment_cfg, const EpochCallback& on_epoch = {});

/// Replaces the running statistics with averages of batch statistics gathered
/// without dropout over `patches`.
void recalibrate_batchnorm(Network<float>& net, std::span<const Patch<float>> patches,
                           int batch_size);

}  // namespace crowdscene::nn
