#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spikecomp/tensor.hpp"

namespace spikecomp {

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
/// c - a
Tensor rsub_scalar(double c, const Tensor& a);

/// a * s where s holds a single value; differentiable in both.
Tensor scale(const Tensor& a, const Tensor& s);
/// Element i of a 1-D tensor as a scalar tensor.
Tensor select(const Tensor& v, std::size_t i);
/// Packs scalar tensors into a 1-D tensor.
Tensor stack_scalars(std::span<const Tensor> scalars);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean over the listed axes; reduced axes are dropped from the shape.
Tensor mean(const Tensor& a, std::vector<std::size_t> axes);
Tensor dot(const Tensor& a, const Tensor& b);

/// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);
/// x (M,K), weight (N,K), bias (N) -> (M,N)
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// NCHW convolution, square odd kernel, zero padding, no bias.
Tensor conv2d(const Tensor& x, const Tensor& weight, std::size_t stride, std::size_t padding);
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Rows [begin, end) of the leading axis.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

/// Softmax of a 1-D tensor.
Tensor softmax(const Tensor& logits);
/// Mean cross-entropy of (M,K) logits against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of (M,C,H,W) with statistics over M, H and W.
/// Time is folded into M by the callers, so statistics are shared across
/// timesteps. Training mode also updates the running estimates.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

/// 1 where a >= threshold else 0. Zero gradient unless a custom rule is registered.
Tensor heaviside(const Tensor& a, double threshold);
/// Round half away from zero. Zero gradient unless a custom rule is registered.
Tensor round_half_away(const Tensor& a);

/// Stride-2 spatial subsampling followed by channel duplication:
/// (N,C,H,W) -> (N,2C,ceil(H/2),ceil(W/2)).
Tensor subsample_duplicate(const Tensor& x);

/// Mean over H and W: (N,C,H,W) -> (N,C).
Tensor global_avg_pool(const Tensor& x);

}  // namespace spikecomp
