// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "nlf/autograd.hpp"

namespace nlf {

/// First/second moment estimates, one pair per parameter in registration order.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(std::span<const Var<T>> params);
};

/// Bias-corrected Adam update of every parameter from its accumulated grad.
template <typename T>
void adam_step(std::span<Var<T>> params, AdamState<T>& state, double lr);

template <typename T>
void zero_grad(std::span<Var<T>> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace nlf
