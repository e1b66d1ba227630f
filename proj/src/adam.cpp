// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/adam.hpp"

#include <cmath>

namespace nlf {

template <typename T>
AdamState<T> AdamState<T>::for_params(std::span<const Var<T>> params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& p : params) {
    state.m.emplace_back(p.value().dims());
    state.v.emplace_back(p.value().dims());
  }
  return state;
}

template <typename T>
void adam_step(std::span<Var<T>> params, AdamState<T>& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                                " slots for " + std::to_string(params.size()) + " parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(state.eps);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k].mutable_value();
    auto& g = params[k].mutable_grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    require_same_dims(w, m, "adam_step");
    for (std::int64_t i = 0; i < w.size(); ++i) {
      const T gi = g[i];
      m[i] = b1 * m[i] + (T(1) - b1) * gi;
      v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Var<float>>, AdamState<float>&, double);
template void adam_step(std::span<Var<double>>, AdamState<double>&, double);

}  // namespace nlf
