#include "crowdscene/nn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace crowdscene::nn {

void TrainConfig::validate() const {
    if (epochs < 1) throw Error("train config: epochs must be >= 1");
    if (!(adam.learning_rate > 0.0)) throw Error("train config: learning rate must be positive");
    if (!(l2_lambda >= 0.0)) throw Error("train config: l2_lambda must be >= 0");
    if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
    if (patches_per_segment < 0) throw Error("train config: patches_per_segment must be >= 0");
}

namespace {

struct PatchRef {
    std::size_t segment;
    std::size_t patch;
};

std::vector<PatchRef> epoch_items(std::span<const TrainSegment> data, int per_segment, Rng& rng) {
    std::vector<PatchRef> items;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const std::size_t n = data[s].patches.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (per_segment > 0 && static_cast<std::size_t>(per_segment) < n) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(static_cast<std::size_t>(per_segment));
        }
        for (std::size_t p : idx) items.push_back({s, p});
    }
    std::shuffle(items.begin(), items.end(), rng);
    return items;
}

}  // namespace

TrainResult fit(Network<float> init, std::span<const TrainSegment> data, const TrainConfig& cfg,
                const augment::AugmentConfig& augment_cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    augment_cfg.validate();
    if (data.empty()) throw Error("fit: no training segments");

    Rng rng(cfg.rng_seed);
    augment::Rng aug_rng(augment_cfg.rng_seed);
    Network<float> net = std::move(init);
    AdamState<float> adam = AdamState<float>::init(net);

    TrainResult result;
    result.params = net;
    bool have_best = false;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto items = epoch_items(data, cfg.patches_per_segment, rng);
        double loss_sum = 0.0;
        std::size_t samples = 0, correct = 0, seen = 0;

        for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Patch<float>> patches;
            std::vector<SoftLabel> labels;
            for (std::size_t i = start; i < end; ++i) {
                const auto& seg = data[items[i].segment];
                patches.push_back(seg.patches[items[i].patch]);
                labels.push_back(one_hot(seg.label));
            }
            const auto batch = augment::augment_batch(patches, labels, augment_cfg, aug_rng);
            auto step = gradients<float>(net, batch.patches, batch.labels, cfg.l2_lambda, rng);
            if (!std::isfinite(step.loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch starting at item " << start
                    << " (loss " << step.loss << ", |theta|^2 " << net.squared_norm() << ")";
                throw NonFiniteLoss(msg.str());
            }
            adam_step(net, step.grads, adam, cfg.adam);
            update_running_stats(net, step.cache);

            loss_sum += step.loss;
            samples += batch.patches.size();
            for (std::size_t i = 0; i < patches.size(); ++i) {
                if (argmax_lowest(step.probs[i]) == argmax_lowest(labels[i])) ++correct;
                ++seen;
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, samples));
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, seen));
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.epochs.push_back(stats);

        const bool improved = !have_best || stats.loss < result.history.best_loss;
        if (improved) {
            have_best = true;
            result.history.best_loss = stats.loss;
            result.history.best_epoch = epoch;
            result.params = net;
        }
        if (on_epoch) on_epoch(stats, net, improved);
    }

    if (cfg.recalibrate_batchnorm) {
        std::vector<Patch<float>> all;
        for (const auto& seg : data) all.insert(all.end(), seg.patches.begin(), seg.patches.end());
        recalibrate_batchnorm(result.params, all, std::max(cfg.batch_size, 2));
    }
    return result;
}

void recalibrate_batchnorm(Network<float>& net, std::span<const Patch<float>> patches, int batch_size) {
    if (patches.empty() || net.conv.empty()) return;
    const std::size_t blocks = net.conv.size();
    struct Acc {
        Eigen::VectorXd mean, sq;
    };
    std::vector<Acc> acc_in(blocks), acc_out(blocks);
    double total = 0.0;
    auto add = [](Acc& a, const layers::BnCache<float>& c, double weight) {
        const Eigen::VectorXd m = c.batch_mean.cast<double>();
        const Eigen::VectorXd sq = c.batch_var.cast<double>() + m.cwiseAbs2();
        if (a.mean.size() == 0) {
            a.mean = Eigen::VectorXd::Zero(m.size());
            a.sq = Eigen::VectorXd::Zero(m.size());
        }
        a.mean += weight * m;
        a.sq += weight * sq;
    };
    const auto step = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t start = 0; start < patches.size(); start += step) {
        const std::size_t n = std::min(step, patches.size() - start);
        const auto batch = patches.subspan(start, n);
        const Tensor<float> x = pack_batch(batch, net.spec.input_channels, net.spec.input_size);
        ForwardCache<float> cache;
        forward_tensor(net, x, static_cast<Eigen::Index>(n), Mode::Calibrate, nullptr, &cache);
        const double w = static_cast<double>(n);
        for (std::size_t i = 0; i < blocks; ++i) {
            add(acc_in[i], cache.conv[i].bn_in, w);
            add(acc_out[i], cache.conv[i].bn_out, w);
        }
        total += w;
    }
    auto assign = [&](BatchNorm<float>& bn, const Acc& a) {
        const Eigen::VectorXd mean = a.mean / total;
        const Eigen::VectorXd var = (a.sq / total - mean.cwiseAbs2()).cwiseMax(0.0);
        bn.running_mean.col(0) = mean.cast<float>();
        bn.running_var.col(0) = var.cast<float>();
    };
    for (std::size_t i = 0; i < blocks; ++i) {
        assign(net.conv[i].bn_in, acc_in[i]);
        assign(net.conv[i].bn_out, acc_out[i]);
    }
}

}  // namespace crowdscene::nn
