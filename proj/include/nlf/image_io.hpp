// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "nlf/tensor.hpp"

namespace nlf {

/// 8-bit RGB PNG from a [1,3,H,W] (or [3,H,W]-shaped batch slot) image in
/// [0,1]. Values are clamped and rounded to the nearest level.
std::string encode_png(const Tensor<float>& image, std::int64_t batch_index = 0);
Tensor<float> decode_png(const std::string& bytes);

void write_png(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_png(const std::filesystem::path& path);

/// Rounds every value to the nearest of 256 levels, as a PNG round trip would.
Tensor<float> quantize8(const Tensor<float>& image);

}  // namespace nlf
