#pragma once

#include "crowdscene/nn/network.hpp"

#include <algorithm>

// Activations are (channels, batch * height * width) row-major tensors: each
// row is one channel, samples occupy consecutive column blocks of height*width.

namespace crowdscene::nn::layers {

/// Gathers 3x3 neighbourhoods (zero padding) of samples [b0, b0 + count) into
/// a (channels * 9, count * h * w) matrix.
template <typename Scalar>
void im2col(const Tensor<Scalar>& in, Eigen::Index b0, Eigen::Index count, int h, int w,
            Tensor<Scalar>& col) {
    const Eigen::Index channels = in.rows();
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    col.resize(channels * 9, count * hw);
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                Scalar* dst = col.row((c * 3 + ky) * 3 + kx).data();
                const int dx = kx - 1;
                const int x_lo = std::max(0, -dx);
                const int x_hi = std::min(w, w - dx);
                for (Eigen::Index b = 0; b < count; ++b) {
                    const Scalar* src = in.row(c).data() + (b0 + b) * hw;
                    Scalar* out = dst + b * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - 1;
                        Scalar* row_out = out + static_cast<Eigen::Index>(y) * w;
                        if (sy < 0 || sy >= h) {
                            std::fill(row_out, row_out + w, Scalar(0));
                            continue;
                        }
                        const Scalar* row_in = src + static_cast<Eigen::Index>(sy) * w;
                        for (int x = 0; x < x_lo; ++x) row_out[x] = Scalar(0);
                        std::copy(row_in + x_lo + dx, row_in + x_hi + dx, row_out + x_lo);
                        for (int x = x_hi; x < w; ++x) row_out[x] = Scalar(0);
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters-and-adds `col` back into samples [b0, b0 + count) of `dx`.
template <typename Scalar>
void col2im_add(const Tensor<Scalar>& col, Eigen::Index b0, Eigen::Index count, int h, int w,
                Tensor<Scalar>& dx) {
    const Eigen::Index channels = dx.rows();
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const Scalar* src = col.row((c * 3 + ky) * 3 + kx).data();
                const int ox = kx - 1;
                const int x_lo = std::max(0, -ox);
                const int x_hi = std::min(w, w - ox);
                for (Eigen::Index b = 0; b < count; ++b) {
                    Scalar* out = dx.row(c).data() + (b0 + b) * hw;
                    const Scalar* in = src + b * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= h) continue;
                        const Scalar* row_in = in + static_cast<Eigen::Index>(y) * w;
                        Scalar* row_out = out + static_cast<Eigen::Index>(sy) * w;
                        for (int x = x_lo; x < x_hi; ++x) row_out[x + ox] += row_in[x];
                    }
                }
            }
        }
    }
}

template <typename Scalar>
struct BnCache {
    Tensor<Scalar> xhat;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> batch_mean;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> batch_var;
};

/// Normalizes each row with its own batch statistics.
template <typename Scalar>
Tensor<Scalar> batchnorm_train(const Tensor<Scalar>& x, const BatchNorm<Scalar>& bn, double eps,
                               BnCache<Scalar>* cache) {
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const Vec mean = x.rowwise().mean();
    Tensor<Scalar> centered = x.colwise() - mean;
    const Vec var = centered.array().square().rowwise().mean();
    const Vec inv = (var.array() + static_cast<Scalar>(eps)).rsqrt();
    centered.array().colwise() *= inv.array();  // now xhat
    Tensor<Scalar> y = centered;
    y.array().colwise() *= bn.gamma.col(0).array();
    y.colwise() += bn.beta.col(0);
    if (cache != nullptr) {
        cache->xhat = std::move(centered);
        cache->inv_std = inv;
        cache->batch_mean = mean;
        cache->batch_var = var;
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> batchnorm_infer(const Tensor<Scalar>& x, const BatchNorm<Scalar>& bn, double eps) {
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const Vec scale = bn.gamma.col(0).array() *
                      (bn.running_var.col(0).array() + static_cast<Scalar>(eps)).rsqrt();
    const Vec shift = bn.beta.col(0).array() - bn.running_mean.col(0).array() * scale.array();
    Tensor<Scalar> y = x;
    y.array().colwise() *= scale.array();
    y.colwise() += shift;
    return y;
}

/// Returns dL/dx and accumulates dL/dgamma, dL/dbeta.
template <typename Scalar>
Tensor<Scalar> batchnorm_backward(const Tensor<Scalar>& grad, const BatchNorm<Scalar>& bn,
                                  const BnCache<Scalar>& cache, BatchNorm<Scalar>& dbn) {
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const auto n = static_cast<Scalar>(grad.cols());
    const Vec dgamma = (grad.array() * cache.xhat.array()).rowwise().sum();
    const Vec dbeta = grad.rowwise().sum();
    dbn.gamma.col(0) += dgamma;
    dbn.beta.col(0) += dbeta;
    const Vec coef = bn.gamma.col(0).array() * cache.inv_std.array() / n;
    Tensor<Scalar> dx = n * grad;
    dx.colwise() -= dbeta;
    dx.array() -= cache.xhat.array().colwise() * dgamma.array();
    dx.array().colwise() *= coef.array();
    return dx;
}

template <typename Scalar>
void update_running_stats(BatchNorm<Scalar>& bn, const BnCache<Scalar>& cache, double momentum) {
    const auto m = static_cast<Scalar>(momentum);
    bn.running_mean.col(0) = m * bn.running_mean.col(0) + (Scalar(1) - m) * cache.batch_mean;
    bn.running_var.col(0) = m * bn.running_var.col(0) + (Scalar(1) - m) * cache.batch_var;
}

template <typename Scalar>
Tensor<Scalar> avgpool2(const Tensor<Scalar>& x, Eigen::Index batch, int h, int w) {
    const int oh = h / 2, ow = w / 2;
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    const Eigen::Index ohw = static_cast<Eigen::Index>(oh) * ow;
    Tensor<Scalar> y(x.rows(), batch * ohw);
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        for (Eigen::Index b = 0; b < batch; ++b) {
            const Scalar* in = x.row(c).data() + b * hw;
            Scalar* out = y.row(c).data() + b * ohw;
            for (int r = 0; r < oh; ++r) {
                const Scalar* r0 = in + static_cast<Eigen::Index>(2 * r) * w;
                const Scalar* r1 = r0 + w;
                for (int q = 0; q < ow; ++q) {
                    out[r * ow + q] = Scalar(0.25) * (r0[2 * q] + r0[2 * q + 1] + r1[2 * q] + r1[2 * q + 1]);
                }
            }
        }
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> avgpool2_backward(const Tensor<Scalar>& grad, Eigen::Index batch, int h, int w) {
    const int oh = h / 2, ow = w / 2;
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    const Eigen::Index ohw = static_cast<Eigen::Index>(oh) * ow;
    Tensor<Scalar> dx(grad.rows(), batch * hw);
    for (Eigen::Index c = 0; c < grad.rows(); ++c) {
        for (Eigen::Index b = 0; b < batch; ++b) {
            const Scalar* g = grad.row(c).data() + b * ohw;
            Scalar* out = dx.row(c).data() + b * hw;
            for (int r = 0; r < oh; ++r) {
                Scalar* r0 = out + static_cast<Eigen::Index>(2 * r) * w;
                Scalar* r1 = r0 + w;
                for (int q = 0; q < ow; ++q) {
                    const Scalar v = Scalar(0.25) * g[r * ow + q];
                    r0[2 * q] = v;
                    r0[2 * q + 1] = v;
                    r1[2 * q] = v;
                    r1[2 * q + 1] = v;
                }
            }
        }
    }
    return dx;
}

/// (C, batch * hw) -> (C, batch)
template <typename Scalar>
Tensor<Scalar> global_avgpool(const Tensor<Scalar>& x, Eigen::Index batch, Eigen::Index hw) {
    Tensor<Scalar> y(x.rows(), batch);
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        for (Eigen::Index b = 0; b < batch; ++b) y(c, b) = x.row(c).segment(b * hw, hw).mean();
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> global_avgpool_backward(const Tensor<Scalar>& grad, Eigen::Index hw) {
    Tensor<Scalar> dx(grad.rows(), grad.cols() * hw);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(hw);
    for (Eigen::Index c = 0; c < grad.rows(); ++c) {
        for (Eigen::Index b = 0; b < grad.cols(); ++b) {
            dx.row(c).segment(b * hw, hw).setConstant(grad(c, b) * inv);
        }
    }
    return dx;
}

/// Inverted dropout: entries are 0 or 1 / (1 - rate).
template <typename Scalar>
Tensor<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Tensor<Scalar> mask(rows, cols);
    std::bernoulli_distribution keep(1.0 - rate);
    const auto scale = static_cast<Scalar>(1.0 / (1.0 - rate));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : Scalar(0);
    return mask;
}

/// Column-wise softmax with max subtraction.
template <typename Scalar>
Tensor<Scalar> softmax_columns(const Tensor<Scalar>& logits) {
    Tensor<Scalar> p(logits.rows(), logits.cols());
    for (Eigen::Index b = 0; b < logits.cols(); ++b) {
        const Scalar mx = logits.col(b).maxCoeff();
        p.col(b) = (logits.col(b).array() - mx).exp();
        p.col(b) /= p.col(b).sum();
    }
    return p;
}

}  // namespace crowdscene::nn::layers
