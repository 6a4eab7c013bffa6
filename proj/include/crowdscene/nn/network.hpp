#pragma once

#include "crowdscene/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace crowdscene::nn {

template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

enum class Pool { None, Avg2, Global };

struct ConvBlockSpec {
    int out_channels = 0;
    Pool pool = Pool::None;
    double dropout = 0.0;

    bool operator==(const ConvBlockSpec&) const = default;
};

struct DenseSpec {
    int units = 0;
    double dropout = 0.0;

    bool operator==(const DenseSpec&) const = default;
};

/// Layer plan. Every conv block is BN - Conv3x3 - ReLU - BN - [pool] - Dropout;
/// every hidden dense layer is FC - ReLU - Dropout; a final FC feeds the softmax.
struct NetworkSpec {
    int input_channels = 1;
    int input_size = 128;
    int classes = kClassCount;
    std::vector<ConvBlockSpec> conv;
    std::vector<DenseSpec> dense;
    double bn_momentum = 0.99;
    double bn_epsilon = 1e-5;

    /// 12 conv blocks (32,32,64,64,128x4,256x4) and FC 1024-1024-C.
    static NetworkSpec vgg15(int input_channels, int classes = kClassCount) {
        NetworkSpec s;
        s.input_channels = input_channels;
        s.input_size = 128;
        s.classes = classes;
        s.conv = {
            {32, Pool::None, 0.20},  {32, Pool::Avg2, 0.25},   {64, Pool::None, 0.25},
            {64, Pool::Avg2, 0.30},  {128, Pool::None, 0.30},  {128, Pool::None, 0.30},
            {128, Pool::None, 0.30}, {128, Pool::Avg2, 0.30},  {256, Pool::None, 0.35},
            {256, Pool::None, 0.35}, {256, Pool::None, 0.35},  {256, Pool::Global, 0.35},
        };
        s.dense = {{1024, 0.40}, {1024, 0.40}};
        return s;
    }

    void validate() const {
        if (input_channels <= 0 || input_size <= 0 || classes <= 0) {
            throw Error("network spec: channels, size and classes must be positive");
        }
        int size = input_size;
        bool flattened = false;
        for (const auto& b : conv) {
            if (flattened) throw Error("network spec: conv block after global pooling");
            if (b.out_channels <= 0) throw Error("network spec: conv block without channels");
            if (!(b.dropout >= 0.0 && b.dropout < 1.0)) throw Error("network spec: dropout outside [0,1)");
            if (b.pool == Pool::Avg2) {
                if (size % 2 != 0) throw Error("network spec: odd size before 2x2 pooling");
                size /= 2;
            }
            if (b.pool == Pool::Global) flattened = true;
        }
        if (!conv.empty() && !flattened) throw Error("network spec: conv stack must end in global pooling");
        for (const auto& d : dense) {
            if (d.units <= 0) throw Error("network spec: dense layer without units");
            if (!(d.dropout >= 0.0 && d.dropout < 1.0)) throw Error("network spec: dropout outside [0,1)");
        }
    }

    /// Width of the vector entering the dense stack.
    int flat_features() const {
        return conv.empty() ? input_channels * input_size * input_size : conv.back().out_channels;
    }

    bool operator==(const NetworkSpec&) const = default;
};

/// Per-channel batch normalization. Vectors are stored as n x 1 tensors so that
/// every parameter shares one type.
template <typename Scalar>
struct BatchNorm {
    Tensor<Scalar> gamma, beta, running_mean, running_var;

    static BatchNorm identity(int channels) {
        BatchNorm bn;
        bn.gamma = Tensor<Scalar>::Ones(channels, 1);
        bn.beta = Tensor<Scalar>::Zero(channels, 1);
        bn.running_mean = Tensor<Scalar>::Zero(channels, 1);
        bn.running_var = Tensor<Scalar>::Ones(channels, 1);
        return bn;
    }
};

template <typename Scalar>
struct ConvBlock {
    BatchNorm<Scalar> bn_in;
    Tensor<Scalar> kernel;  // out x (in * 9), column index = (ci * 3 + ky) * 3 + kx
    Tensor<Scalar> bias;    // out x 1
    BatchNorm<Scalar> bn_out;
};

template <typename Scalar>
struct Dense {
    Tensor<Scalar> weight;  // out x in
    Tensor<Scalar> bias;    // out x 1
};

/// All parameters of a network. A gradient has the same type and shapes;
/// its running-statistics slots stay zero.
template <typename Scalar>
struct Network {
    NetworkSpec spec;
    std::vector<ConvBlock<Scalar>> conv;
    std::vector<Dense<Scalar>> dense;  // hidden layers followed by the classifier

    /// Visits every tensor as f(name, tensor, trainable).
    template <typename F>
    void visit(F&& f) {
        for (std::size_t i = 0; i < conv.size(); ++i) {
            const std::string p = "conv" + std::to_string(i) + ".";
            auto& b = conv[i];
            f(p + "bn_in.gamma", b.bn_in.gamma, true);
            f(p + "bn_in.beta", b.bn_in.beta, true);
            f(p + "bn_in.running_mean", b.bn_in.running_mean, false);
            f(p + "bn_in.running_var", b.bn_in.running_var, false);
            f(p + "kernel", b.kernel, true);
            f(p + "bias", b.bias, true);
            f(p + "bn_out.gamma", b.bn_out.gamma, true);
            f(p + "bn_out.beta", b.bn_out.beta, true);
            f(p + "bn_out.running_mean", b.bn_out.running_mean, false);
            f(p + "bn_out.running_var", b.bn_out.running_var, false);
        }
        for (std::size_t i = 0; i < dense.size(); ++i) {
            const std::string p = "fc" + std::to_string(i) + ".";
            f(p + "weight", dense[i].weight, true);
            f(p + "bias", dense[i].bias, true);
        }
    }

    template <typename F>
    void visit(F&& f) const {
        const_cast<Network*>(this)->visit(
            [&](const std::string& name, Tensor<Scalar>& t, bool trainable) {
                f(name, static_cast<const Tensor<Scalar>&>(t), trainable);
            });
    }

    /// Same shapes, every tensor zero.
    Network zeros_like() const {
        Network z = *this;
        z.visit([](const std::string&, Tensor<Scalar>& t, bool) { t.setZero(); });
        return z;
    }

    std::size_t trainable_count() const {
        std::size_t n = 0;
        visit([&](const std::string&, const Tensor<Scalar>& t, bool trainable) {
            if (trainable) n += static_cast<std::size_t>(t.size());
        });
        return n;
    }

    /// Squared L2 norm of the trainable parameters (running statistics excluded).
    double squared_norm() const {
        double s = 0.0;
        visit([&](const std::string&, const Tensor<Scalar>& t, bool trainable) {
            if (trainable) s += t.template cast<double>().squaredNorm();
        });
        return s;
    }

    template <typename Other>
    Network<Other> cast() const {
        Network<Other> out;
        out.spec = spec;
        out.conv.resize(conv.size());
        out.dense.resize(dense.size());
        auto bn = [](const BatchNorm<Scalar>& b) {
            BatchNorm<Other> o;
            o.gamma = b.gamma.template cast<Other>();
            o.beta = b.beta.template cast<Other>();
            o.running_mean = b.running_mean.template cast<Other>();
            o.running_var = b.running_var.template cast<Other>();
            return o;
        };
        for (std::size_t i = 0; i < conv.size(); ++i) {
            out.conv[i].bn_in = bn(conv[i].bn_in);
            out.conv[i].kernel = conv[i].kernel.template cast<Other>();
            out.conv[i].bias = conv[i].bias.template cast<Other>();
            out.conv[i].bn_out = bn(conv[i].bn_out);
        }
        for (std::size_t i = 0; i < dense.size(); ++i) {
            out.dense[i].weight = dense[i].weight.template cast<Other>();
            out.dense[i].bias = dense[i].bias.template cast<Other>();
        }
        return out;
    }
};

/// He-normal kernels and weights, zero biases, identity batch norms.
template <typename Scalar>
Network<Scalar> build_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Network<Scalar> net;
    net.spec = spec;
    Rng rng(seed);
    auto he = [&](int rows, int cols, int fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        Tensor<Scalar> t(rows, cols);
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(dist(rng));
        return t;
    };
    int channels = spec.input_channels;
    for (const auto& b : spec.conv) {
        ConvBlock<Scalar> block;
        block.bn_in = BatchNorm<Scalar>::identity(channels);
        block.kernel = he(b.out_channels, channels * 9, channels * 9);
        block.bias = Tensor<Scalar>::Zero(b.out_channels, 1);
        block.bn_out = BatchNorm<Scalar>::identity(b.out_channels);
        net.conv.push_back(std::move(block));
        channels = b.out_channels;
    }
    int features = spec.flat_features();
    auto add_dense = [&](int units) {
        Dense<Scalar> d;
        d.weight = he(units, features, features);
        d.bias = Tensor<Scalar>::Zero(units, 1);
        net.dense.push_back(std::move(d));
        features = units;
    };
    for (const auto& d : spec.dense) add_dense(d.units);
    add_dense(spec.classes);
    return net;
}

template <typename Scalar>
Network<Scalar> build_vgg15(int input_channels, int class_count, std::uint64_t seed) {
    if (input_channels != 1 && input_channels != 3) throw Error("VGG15 takes 1 or 3 input channels");
    if (class_count != kClassCount) throw Error("VGG15 is built for 5 classes");
    return build_network<Scalar>(NetworkSpec::vgg15(input_channels, class_count), seed);
}

}  // namespace crowdscene::nn
