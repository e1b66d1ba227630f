// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlf/network.hpp"

namespace nlf {

// Weight file layout (all integers little-endian uint32):
//   "NLF1" | version | header_len | header JSON (canonical, sorted keys)
//   | tensor_count | { name_len | name | rank | dims[rank] | float32 data }*
// The header holds {"config": NetConfig, "folded": bool, "meta": {...}}.
inline constexpr char kWeightMagic[4] = {'N', 'L', 'F', '1'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

class WeightFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelWeights {
  std::uint32_t version = kWeightFormatVersion;
  NetConfig config;
  bool folded = false;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

/// Parameters plus batch-norm running statistics, in registration order.
ModelWeights weights_from_model(const Model<float>& model,
                                nlohmann::json meta = nlohmann::json::object());
/// Rebuilds a model; every tensor must be present with the config's shape.
Model<float> model_from_weights(const ModelWeights& weights);

std::string serialize_weights(const ModelWeights& weights);
ModelWeights deserialize_weights(const std::string& bytes);

void save_weights(const Model<float>& model, const std::filesystem::path& path,
                  nlohmann::json meta = nlohmann::json::object());
ModelWeights load_weights(const std::filesystem::path& path);

/// Named tensors without a config header (used for optimizer moments).
std::string serialize_tensors(const std::vector<std::pair<std::string, Tensor<float>>>& tensors,
                              const nlohmann::json& header);
std::pair<nlohmann::json, std::vector<std::pair<std::string, Tensor<float>>>> deserialize_tensors(
    const std::string& bytes);

void write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace nlf
