// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "nlf/ops.hpp"

namespace nlf {

struct SrStageConfig {
  int factor = 2;  // 2 -> transpose kernel 4, 3 -> transpose kernel 3
  int out_channels = 64;
  bool operator==(const SrStageConfig&) const = default;
};

/// Architecture hyperparameters. The input channel count is derived from the
/// ray encoding: 3 * K * (2L + 1).
struct NetConfig {
  int K = 8;
  int L = 6;
  int width = 256;
  int n_res_blocks = 28;
  std::vector<SrStageConfig> sr_plan{{2, 64}, {2, 64}, {2, 16}};
  int rb_per_sr = 2;  // residual blocks per SR stage, counting the upsampling block
  bool use_norm = true;
  bool use_activation = true;

  int in_channels() const { return 3 * K * (2 * L + 1); }
  int upsample_factor() const;
  int head_in_channels() const { return sr_plan.empty() ? width : sr_plan.back().out_channels; }
  void validate() const;

  /// 3x2 SR stages, 8x upsampling: 100x100 rays -> 800x800 image.
  static NetConfig d60_sr3_8x();
  /// 2x,2x,3x SR stages, 12x upsampling: 84x63 rays -> 1008x756 image.
  static NetConfig d60_sr3_12x();
  /// Desk-scale preset: 4 residual blocks of width 32, two 2x SR stages.
  static NetConfig tiny();
  static NetConfig preset(const std::string& name);

  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& j);
  bool operator==(const NetConfig&) const = default;
};

/// FNV-1a over the canonical JSON of the config.
std::uint64_t config_hash(const NetConfig& config);
std::string config_hash_hex(const NetConfig& config);

/// conv (1x1 or transposed) -> optional batch norm -> optional GeLU.
template <typename T>
struct ConvUnit {
  bool transposed = false;
  int stride = 1;
  int padding = 0;
  Var<T> weight;
  Var<T> bias;
  bool has_norm = false;
  Var<T> bn_scale;
  Var<T> bn_shift;
  BatchNormStats<T> stats;
  bool activation = false;

  Var<T> forward(const Var<T>& x, Mode mode);
  std::int64_t out_channels() const;
};

template <typename T>
struct ResBlock {
  ConvUnit<T> conv1;
  ConvUnit<T> conv2;
};

/// Upsampling block (transpose conv, then two 1x1 convs skipped over) followed
/// by plain residual blocks.
template <typename T>
struct SrStage {
  int factor = 2;
  ConvUnit<T> up;
  ResBlock<T> first;
  std::vector<ResBlock<T>> extra;
};

template <typename T>
class Model {
 public:
  NetConfig config;
  Mode mode = Mode::train;
  bool folded = false;

  ConvUnit<T> stem;
  std::vector<ResBlock<T>> backbone;
  ConvUnit<T> tail;
  std::vector<SrStage<T>> sr;
  ConvUnit<T> head;

  /// Input [B, in_channels, h, w] -> image [B, 3, h*f, w*f] in (0, 1).
  Var<T> forward(const Var<T>& input, Mode run_mode);
  Var<T> forward(const Var<T>& input) { return forward(input, mode); }
  /// Eval-mode inference without recording a graph.
  Tensor<T> infer(const Tensor<T>& input);

  /// Visits every conv unit with its stable dotted name, in registration order.
  void for_each_unit(const std::function<void(const std::string&, ConvUnit<T>&)>& fn);
  void for_each_unit(const std::function<void(const std::string&, const ConvUnit<T>&)>& fn) const;

  /// Trainable parameters in registration order.
  std::vector<Var<T>> parameters();
  void zero_grad();
};

template <typename T>
Model<T> build_model(const NetConfig& config, std::uint64_t seed = 0);

template <typename T>
std::int64_t count_params(const Model<T>& model);

/// Number of batch-norm scale + shift elements.
template <typename T>
std::int64_t count_norm_params(const Model<T>& model);

/// Conv+BN pairs merged into single convs; requires an eval-mode, unfolded model.
template <typename T>
Model<T> fold_batchnorm(const Model<T>& model);

/// Deep copy (parameters are shared handles, so plain copies alias).
template <typename T>
Model<T> clone(const Model<T>& model);

}  // namespace nlf
