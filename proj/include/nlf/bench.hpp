// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>
#include <vector>

#include "nlf/network.hpp"

namespace nlf {

struct LatencyStats {
  std::vector<double> samples_ms;  // one per timed iteration, warmup excluded
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  double min_ms = 0;
  double max_ms = 0;

  nlohmann::json to_json() const;  // summary only
};

/// Nearest-rank percentiles over the samples. Throws on an empty input.
LatencyStats summarize_latency(std::vector<double> samples_ms);

struct BenchOptions {
  int input_size = 32;  // square ray grid side
  int iters = 20;
  int warmup = 3;

  void validate() const;
};

/// Times `iters` eval-mode forwards of a [1, C, s, s] input after `warmup`
/// untimed ones.
LatencyStats bench_forward(Model<float>& model, const BenchOptions& options);

}  // namespace nlf
