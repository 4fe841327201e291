#pragma once

#include "dimnas/tensor.hpp"

namespace dimnas {

/// Convolution weights. The kernel is (out, in, k) for rank 1 and the
/// isotropic (out, in, k, k) for rank 2; the bias is stored as (1, out, 1).
template <typename Scalar>
struct ConvParams {
  Tensor<Scalar> kernel;
  Tensor<Scalar> bias;
  Index stride = 1;

  static ConvParams zeros(int rank, Index in_channels, Index out_channels, Index kernel_size,
                          Index stride = 1);

  int rank() const { return kernel.shape().spatial_rank(); }
  Index out_channels() const { return kernel.shape()[0]; }
  Index in_channels() const { return kernel.shape()[1]; }
  Index kernel_size() const { return kernel.shape().width(); }
  Index param_count() const { return kernel.numel() + bias.numel(); }
};

/// Per-channel batch normalization state.
template <typename Scalar>
struct NormParams {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor<Scalar> gamma;  // (1, C, 1)
  Tensor<Scalar> beta;   // (1, C, 1)
  Array running_mean;
  Array running_var;
  Scalar epsilon = Scalar(1e-5);
  Scalar momentum = Scalar(0.9);

  static NormParams identity(Index channels);
  Index channels() const { return gamma.numel(); }
};

enum class PoolKind { Avg, Max };

/// Cross-correlation with zero "same" padding: output spatial = ceil(input / stride).
template <typename Scalar>
Tensor<Scalar> conv(const Tensor<Scalar>& x, const ConvParams<Scalar>& p);

/// Stride-2 convolution; rejects parameters with any other stride.
template <typename Scalar>
Tensor<Scalar> downsample(const Tensor<Scalar>& x, const ConvParams<Scalar>& p);

/// Stride-1 pooling with "same" padding. Max ignores padded cells and routes
/// gradient to the first maximal element; avg divides by the valid count.
template <typename Scalar>
Tensor<Scalar> pool(const Tensor<Scalar>& x, PoolKind kind, Index kernel_size = 3);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);

/// Batch statistics (and a running-stat update) when training, running stats otherwise.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, NormParams<Scalar>& p, bool training);

/// Nearest-neighbour x2 along every spatial axis.
template <typename Scalar>
Tensor<Scalar> upsample(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> softmax_channels(const Tensor<Scalar>& x);

/// Sum of all elements as a (1,1,1) tensor.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x);

/// sum(x * weights) for a constant weight array; used to project outputs in gradient checks.
template <typename Scalar>
Tensor<Scalar> dot(const Tensor<Scalar>& x, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& weights);

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor);

/// Per-position argmax over the channel axis, as a flat (batch, spatial) label list.
template <typename Scalar>
std::vector<std::uint8_t> argmax_channels(const Tensor<Scalar>& x);

}  // namespace dimnas
