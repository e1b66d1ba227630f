// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "nlf/rays.hpp"
#include "nlf/volume.hpp"

namespace nlf {

enum class Split { pseudo, real_train, real_test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct Frame {
  Pose pose;
  std::string image_path;  // relative to the dataset directory
  Tensor<float> image;     // [1,3,H,W] at the high resolution
};

/// Posed high-resolution images plus the camera model. The low-resolution
/// ray grid of each frame shares its pose and is derived from `lo`.
struct SceneDataset {
  std::string scene;
  Split split = Split::pseudo;
  CameraIntrinsics hi;
  CameraIntrinsics lo;
  int sr_factor = 1;
  double near = 2.0;
  double far = 6.0;
  std::vector<Frame> frames;

  std::size_t size() const { return frames.size(); }

  /// Throws if lo != downscale_intrinsics(hi, sr_factor) or an image does not
  /// match the high-resolution size.
  void validate() const;

  nlohmann::json manifest() const;
};

/// Camera a trained model renders with, stored in the weight-file meta.
struct ModelCamera {
  CameraIntrinsics lo;  // ray grid fed to the network
  int sr_factor = 1;
  double near = 2.0;
  double far = 6.0;

  CameraIntrinsics hi() const { return {lo.width * sr_factor, lo.height * sr_factor, lo.focal * sr_factor}; }
  nlohmann::json to_json() const;
  static ModelCamera from_json(const nlohmann::json& j);
  static ModelCamera of(const SceneDataset& dataset);
};

/// Writes manifest.json and every image (PNG) under `dir`.
void save_dataset(const SceneDataset& dataset, const std::filesystem::path& dir);
SceneDataset load_dataset(const std::filesystem::path& dir);

struct PseudoDatasetOptions {
  int n_images = 200;
  CameraIntrinsics hi{64, 64, 76.8};
  int sr_factor = 8;
  HemispherePoseSampler sampler;
  RenderSettings render;
  std::uint64_t seed = 0;
  Split split = Split::pseudo;

  void validate() const;
};

/// Renders n teacher images at poses drawn from the sampler (pose i uses a
/// generator seeded from (seed, i)) and writes them to `out_dir`.
SceneDataset generate_pseudo_dataset(const RadianceField& field, const PseudoDatasetOptions& options,
                                     const std::filesystem::path& out_dir);

}  // namespace nlf
