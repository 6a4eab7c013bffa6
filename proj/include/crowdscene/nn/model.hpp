#pragma once

#include "crowdscene/nn/layers.hpp"

#include <span>
#include <vector>

namespace crowdscene::nn {

/// Train: batch statistics and dropout. Infer: running statistics, no dropout.
/// Calibrate: batch statistics without dropout, used to re-estimate running statistics.
enum class Mode { Train, Infer, Calibrate };

/// Output geometry of one block: {height, width, channels} for spatial stages,
/// {units} once flattened.
using StageShape = std::vector<int>;

template <typename Scalar>
struct ConvCache {
    int height = 0;
    int width = 0;
    layers::BnCache<Scalar> bn_in;
    Tensor<Scalar> conv_input;
    Tensor<Scalar> pre_relu;
    layers::BnCache<Scalar> bn_out;
    Tensor<Scalar> mask;
};

template <typename Scalar>
struct DenseCache {
    Tensor<Scalar> input;
    Tensor<Scalar> pre_relu;
    Tensor<Scalar> mask;
};

template <typename Scalar>
struct ForwardCache {
    Eigen::Index batch = 0;
    std::vector<ConvCache<Scalar>> conv;
    std::vector<DenseCache<Scalar>> dense;
    Tensor<Scalar> probs;
};

namespace detail {

/// Samples per im2col chunk; keeps the column buffer near 64 MB.
inline Eigen::Index conv_chunk(Eigen::Index rows, Eigen::Index hw, Eigen::Index batch) {
    constexpr Eigen::Index kBudget = Eigen::Index{16} << 20;  // elements
    return std::clamp<Eigen::Index>(kBudget / std::max<Eigen::Index>(1, rows * hw), 1, batch);
}

template <typename Scalar>
Tensor<Scalar> conv3x3(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel,
                       const Tensor<Scalar>& bias, Eigen::Index batch, int h, int w) {
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    Tensor<Scalar> z(kernel.rows(), batch * hw);
    Tensor<Scalar> col;
    const Eigen::Index chunk = conv_chunk(kernel.cols(), hw, batch);
    for (Eigen::Index b0 = 0; b0 < batch; b0 += chunk) {
        const Eigen::Index n = std::min(chunk, batch - b0);
        layers::im2col(x, b0, n, h, w, col);
        z.middleCols(b0 * hw, n * hw).noalias() = kernel * col;
    }
    z.colwise() += bias.col(0);
    return z;
}

}  // namespace detail

/// Runs the network on a (input_channels, batch * size * size) tensor and
/// returns (classes, batch) softmax probabilities. Train mode uses batch
/// statistics and draws dropout masks from `rng`; Infer mode uses running
/// statistics and no dropout. `cache` (Train only) keeps what backward needs.
template <typename Scalar>
Tensor<Scalar> forward_tensor(const Network<Scalar>& net, const Tensor<Scalar>& input,
                              Eigen::Index batch, Mode mode, Rng* rng,
                              ForwardCache<Scalar>* cache = nullptr,
                              std::vector<StageShape>* trace = nullptr) {
    const NetworkSpec& spec = net.spec;
    const Eigen::Index size = spec.input_size;
    if (input.rows() != spec.input_channels || input.cols() != batch * size * size) {
        throw ShapeMismatch("forward: expected (" + std::to_string(spec.input_channels) + ", " +
                            std::to_string(batch * size * size) + ") input, got (" +
                            std::to_string(input.rows()) + ", " + std::to_string(input.cols()) + ")");
    }
    const bool train = mode != Mode::Infer;
    const bool drop = mode == Mode::Train;
    if (drop && rng == nullptr) throw Error("forward: train mode needs an rng");
    if (cache != nullptr) {
        cache->batch = batch;
        cache->conv.assign(net.conv.size(), {});
        cache->dense.assign(net.dense.size(), {});
    }
    const double eps = spec.bn_epsilon;

    Tensor<Scalar> x = input;
    int h = spec.input_size, w = spec.input_size;
    for (std::size_t i = 0; i < net.conv.size(); ++i) {
        const auto& block = net.conv[i];
        const auto& bs = spec.conv[i];
        ConvCache<Scalar>* cc = cache != nullptr ? &cache->conv[i] : nullptr;
        if (cc != nullptr) {
            cc->height = h;
            cc->width = w;
        }
        Tensor<Scalar> a = train ? layers::batchnorm_train(x, block.bn_in, eps, cc ? &cc->bn_in : nullptr)
                                 : layers::batchnorm_infer(x, block.bn_in, eps);
        Tensor<Scalar> z = detail::conv3x3(a, block.kernel, block.bias, batch, h, w);
        if (cc != nullptr) cc->conv_input = std::move(a);
        Tensor<Scalar> r = z.cwiseMax(Scalar(0));
        if (cc != nullptr) cc->pre_relu = std::move(z);
        x = train ? layers::batchnorm_train(r, block.bn_out, eps, cc ? &cc->bn_out : nullptr)
                  : layers::batchnorm_infer(r, block.bn_out, eps);
        if (bs.pool == Pool::Avg2) {
            x = layers::avgpool2(x, batch, h, w);
            h /= 2;
            w /= 2;
        } else if (bs.pool == Pool::Global) {
            x = layers::global_avgpool(x, batch, static_cast<Eigen::Index>(h) * w);
            h = w = 1;
        }
        if (drop && bs.dropout > 0.0) {
            Tensor<Scalar> mask = layers::dropout_mask<Scalar>(x.rows(), x.cols(), bs.dropout, *rng);
            x.array() *= mask.array();
            if (cc != nullptr) cc->mask = std::move(mask);
        }
        if (trace != nullptr) {
            trace->push_back(bs.pool == Pool::Global ? StageShape{static_cast<int>(x.rows())}
                                                     : StageShape{h, w, static_cast<int>(x.rows())});
        }
    }
    if (net.conv.empty()) {
        // Without conv blocks the dense stack sees the flattened input.
        Tensor<Scalar> flat(x.rows() * size * size, batch);
        for (Eigen::Index b = 0; b < batch; ++b) {
            for (Eigen::Index c = 0; c < x.rows(); ++c) {
                flat.col(b).segment(c * size * size, size * size) =
                    x.row(c).segment(b * size * size, size * size).transpose();
            }
        }
        x = std::move(flat);
    }

    for (std::size_t i = 0; i < net.dense.size(); ++i) {
        const auto& layer = net.dense[i];
        DenseCache<Scalar>* dc = cache != nullptr ? &cache->dense[i] : nullptr;
        Tensor<Scalar> z = layer.weight * x;
        z.colwise() += layer.bias.col(0);
        if (dc != nullptr) dc->input = std::move(x);
        const bool hidden = i + 1 < net.dense.size();
        if (hidden) {
            x = z.cwiseMax(Scalar(0));
            const double rate = spec.dense[i].dropout;
            if (drop && rate > 0.0) {
                Tensor<Scalar> mask = layers::dropout_mask<Scalar>(x.rows(), x.cols(), rate, *rng);
                x.array() *= mask.array();
                if (dc != nullptr) dc->mask = std::move(mask);
            }
            if (dc != nullptr) dc->pre_relu = std::move(z);
        } else {
            x = std::move(z);
        }
        if (trace != nullptr) trace->push_back(StageShape{static_cast<int>(x.rows())});
    }
    Tensor<Scalar> probs = layers::softmax_columns(x);
    if (cache != nullptr) cache->probs = probs;
    return probs;
}

/// Backpropagates dL/dlogits through the cached forward pass into `grads`
/// (accumulated; running-statistic slots untouched).
template <typename Scalar>
void backward(const Network<Scalar>& net, const ForwardCache<Scalar>& cache,
              const Tensor<Scalar>& dlogits, Network<Scalar>& grads) {
    const NetworkSpec& spec = net.spec;
    const Eigen::Index batch = cache.batch;
    Tensor<Scalar> g = dlogits;

    for (std::size_t i = net.dense.size(); i-- > 0;) {
        const auto& layer = net.dense[i];
        const auto& dc = cache.dense[i];
        const bool hidden = i + 1 < net.dense.size();
        if (hidden) {
            if (dc.mask.size() > 0) g.array() *= dc.mask.array();
            g.array() *= (dc.pre_relu.array() > Scalar(0)).template cast<Scalar>();
        }
        grads.dense[i].weight.noalias() += g * dc.input.transpose();
        grads.dense[i].bias.col(0) += g.rowwise().sum();
        g = layer.weight.transpose() * g;
    }
    if (net.conv.empty()) return;

    for (std::size_t i = net.conv.size(); i-- > 0;) {
        const auto& block = net.conv[i];
        const auto& bs = spec.conv[i];
        const auto& cc = cache.conv[i];
        auto& gb = grads.conv[i];
        const int h = cc.height, w = cc.width;
        const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;

        if (cc.mask.size() > 0) g.array() *= cc.mask.array();
        if (bs.pool == Pool::Avg2) {
            g = layers::avgpool2_backward(g, batch, h, w);
        } else if (bs.pool == Pool::Global) {
            g = layers::global_avgpool_backward(g, hw);
        }
        g = layers::batchnorm_backward(g, block.bn_out, cc.bn_out, gb.bn_out);
        g.array() *= (cc.pre_relu.array() > Scalar(0)).template cast<Scalar>();

        gb.bias.col(0) += g.rowwise().sum();
        Tensor<Scalar> da = Tensor<Scalar>::Zero(cc.conv_input.rows(), cc.conv_input.cols());
        Tensor<Scalar> col, dcol;
        const Eigen::Index chunk = detail::conv_chunk(block.kernel.cols(), hw, batch);
        for (Eigen::Index b0 = 0; b0 < batch; b0 += chunk) {
            const Eigen::Index n = std::min(chunk, batch - b0);
            layers::im2col(cc.conv_input, b0, n, h, w, col);
            const auto g_chunk = g.middleCols(b0 * hw, n * hw);
            gb.kernel.noalias() += g_chunk * col.transpose();
            dcol.noalias() = block.kernel.transpose() * g_chunk;
            layers::col2im_add(dcol, b0, n, h, w, da);
        }
        g = layers::batchnorm_backward(da, block.bn_in, cc.bn_in, gb.bn_in);
    }
}

/// Folds the batch statistics of a cached Train pass into the running averages.
template <typename Scalar>
void update_running_stats(Network<Scalar>& net, const ForwardCache<Scalar>& cache) {
    for (std::size_t i = 0; i < net.conv.size(); ++i) {
        layers::update_running_stats(net.conv[i].bn_in, cache.conv[i].bn_in, net.spec.bn_momentum);
        layers::update_running_stats(net.conv[i].bn_out, cache.conv[i].bn_out, net.spec.bn_momentum);
    }
}

}  // namespace crowdscene::nn
