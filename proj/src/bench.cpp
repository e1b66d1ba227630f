// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nlf/random.hpp"

namespace nlf {

nlohmann::json LatencyStats::to_json() const {
  return {{"iters", samples_ms.size()}, {"mean_ms", mean_ms}, {"p50_ms", p50_ms},
          {"p95_ms", p95_ms},          {"min_ms", min_ms},   {"max_ms", max_ms}};
}

LatencyStats summarize_latency(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw std::invalid_argument("latency summary needs at least one sample");
  LatencyStats s;
  s.samples_ms = samples_ms;
  std::sort(samples_ms.begin(), samples_ms.end());
  const auto n = samples_ms.size();
  const auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return samples_ms[std::clamp<std::size_t>(k, 1, n) - 1];
  };
  s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / static_cast<double>(n);
  s.p50_ms = rank(0.50);
  s.p95_ms = rank(0.95);
  s.min_ms = samples_ms.front();
  s.max_ms = samples_ms.back();
  return s;
}

void BenchOptions::validate() const {
  if (input_size < 1) throw std::invalid_argument("input size must be >= 1");
  if (iters < 1) throw std::invalid_argument("iters must be >= 1, got " + std::to_string(iters));
  if (warmup < 0) throw std::invalid_argument("warmup must be >= 0");
}

LatencyStats bench_forward(Model<float>& model, const BenchOptions& options) {
  options.validate();
  const int s = options.input_size;
  Tensor<float> input({1, model.config.in_channels(), s, s});
  Rng rng(0xbe7c4);
  for (auto& v : input.span()) v = static_cast<float>(2 * uniform01(rng) - 1);
  for (int i = 0; i < options.warmup; ++i) model.infer(input);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(options.iters));
  for (int i = 0; i < options.iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<float> out = model.infer(input);
    samples.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    if (out.empty()) throw std::logic_error("empty forward output");
  }
  return summarize_latency(std::move(samples));
}

}  // namespace nlf
