// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlf/adam.hpp"
#include "nlf/dataset.hpp"
#include "nlf/network.hpp"

namespace nlf {

struct TrainConfig {
  int batch_size = 4;
  std::int64_t iterations = 20000;
  double lr = 5e-4;
  std::int64_t decay_steps = 0;  // 0: one decade over `iterations`
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1000;  // 0 disables periodic checkpoints
  std::int64_t eval_every = 1000;        // 0 disables periodic evaluation

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep the values in `base`; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

/// lr0 * 0.1^(iter / decay_steps).
double lr_at(std::int64_t iter, const TrainConfig& config);

struct Batch {
  Tensor<float> input;   // [B, 3K(2L+1), h, w] low-resolution encoded rays
  Tensor<float> target;  // [B, 3, h*f, w*f]
};

/// One whole frame per batch element. Train mode draws stratified depths from
/// a generator seeded with (seed, element).
Batch make_batch(const SceneDataset& dataset, std::span<const std::size_t> indices, SampleMode mode, int K,
                 int L, std::uint64_t seed);

enum class Stage { pseudo, finetune };
std::string to_string(Stage stage);

struct EvalRecord {
  std::int64_t iteration = 0;  // iterations completed when measured
  double psnr = 0;
  double ssim = 0;
};

/// Mean PSNR/SSIM of the model's eval-mode renders over the dataset.
EvalRecord evaluate(Model<float>& model, const SceneDataset& dataset);

struct StageHistory {
  Stage stage = Stage::pseudo;
  std::int64_t start_iteration = 0;
  std::vector<double> losses;  // one per iteration run, starting at start_iteration
  std::vector<EvalRecord> evals;
  std::optional<std::filesystem::path> last_checkpoint;
  double wall_seconds = 0;

  double final_loss() const { return losses.empty() ? 0.0 : losses.back(); }
};

struct TrainOptions {
  const SceneDataset* eval_set = nullptr;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::optional<std::filesystem::path> resume_from;  // checkpoint sidecar JSON
  std::function<void(const std::string&)> log;
};

/// Runs `config.iterations` Adam steps on the dataset (pseudo split for the
/// pseudo stage, real-train for finetune). Resuming continues from the saved
/// iteration with the saved weights and optimizer moments. A non-finite loss
/// throws NonFiniteLoss; checkpoints already written are left in place.
StageHistory train_stage(Model<float>& model, const SceneDataset& dataset, const TrainConfig& config,
                         Stage stage, const TrainOptions& options = {});

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::int64_t iteration = 0;
  Stage stage = Stage::pseudo;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::filesystem::path weights;
  std::filesystem::path optimizer;
};

/// Writes <dir>/ckpt-<iter>.{nlfw,adam,json}; returns the sidecar path.
std::filesystem::path save_checkpoint(const std::filesystem::path& dir, Model<float>& model,
                                      const AdamState<float>& adam, std::int64_t iteration, Stage stage,
                                      const TrainConfig& config, const ModelCamera& camera);
Checkpoint read_checkpoint(const std::filesystem::path& sidecar);

struct DistillConfig {
  std::string scene = "checker";
  NetConfig net = NetConfig::tiny();
  int resolution = 128;  // teacher image side
  int n_pseudo = 200;
  int n_real_train = 40;
  int n_real_test = 20;
  RenderSettings render;
  HemispherePoseSampler sampler;
  // Desk scale: a 32-wide model at batch 4 underfits at the 5e-4 default.
  TrainConfig pretrain{.lr = 5e-3};
  TrainConfig finetune{.batch_size = 4, .iterations = 2000, .lr = 5e-5};
  std::uint64_t seed = 0;

  int sr_factor() const { return net.upsample_factor(); }
  void validate() const;
  nlohmann::json to_json() const;
  /// Partial configs are allowed: missing keys keep their defaults.
  static DistillConfig from_json(const nlohmann::json& j);
};

/// Teacher data -> stage-1 training -> stage-2 fine-tuning -> held-out eval.
/// Writes datasets, checkpoints, model.nlfw and report.json under out_dir and
/// returns the report.
nlohmann::json distill_scene(const RadianceField& field, const DistillConfig& config,
                             const std::filesystem::path& out_dir,
                             std::function<void(const std::string&)> log = {});

}  // namespace nlf
