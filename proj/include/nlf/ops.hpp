// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nlf/autograd.hpp"

namespace nlf {

enum class Mode { train, eval };

/// Per-pixel channel mixing. weight is [Cout, Cin], bias is [Cout].
template <typename T>
Var<T> conv1x1(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

/// Transposed convolution with weight [Cin, Cout, k, k]. Only the exact
/// upsamplers are accepted: (k=4, stride=2, padding=1) and (k=3, stride=3, padding=0).
template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
                        int stride, int padding);

/// Output spatial extent of conv_transpose2d along one axis.
constexpr std::int64_t transposed_extent(std::int64_t in, int kernel, int stride, int padding) {
  return (in - 1) * stride - 2 * padding + kernel;
}

/// Running statistics owned by a batch-norm layer. Empty tensors mean the
/// statistics were never initialised.
template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  static BatchNormStats initialized(std::int64_t channels);
  bool ready(std::int64_t channels) const;
};

/// Train mode normalises with batch statistics (biased variance) and updates
/// the running estimates (unbiased variance); eval mode uses the running ones.
template <typename T>
Var<T> batchnorm2d(const Var<T>& input, const Var<T>& scale, const Var<T>& shift,
                   BatchNormStats<T>& stats, Mode mode);

/// Exact GeLU, x * Phi(x).
template <typename T>
Var<T> gelu(const Var<T>& input);

template <typename T>
Var<T> sigmoid(const Var<T>& input);

template <typename T>
Var<T> residual_add(const Var<T>& a, const Var<T>& b);

/// Mean squared error as a one-element tensor.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target);

/// Sum of all elements as a one-element tensor.
template <typename T>
Var<T> sum(const Var<T>& input);

}  // namespace nlf
