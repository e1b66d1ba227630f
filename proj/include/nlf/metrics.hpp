// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nlf/tensor.hpp"

namespace nlf {

/// Returned when the two images are identical.
inline constexpr double kPsnrCap = 100.0;

struct PsnrOptions {
  bool quantize8 = false;  // round both images to 8-bit levels first
};

/// 10 log10(1 / MSE) over every element, for images in [0,1]. Shapes must match.
double psnr(const Tensor<float>& pred, const Tensor<float>& ref, PsnrOptions options = {});

struct SsimResult {
  double ssim = 0;                // mean of the local SSIM map
  double contrast_structure = 0;  // mean of the map without the luminance factor
};

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, range 1) over the
/// valid region, averaged over channels and batch entries. H and W must be >= 11.
SsimResult ssim_detail(const Tensor<float>& pred, const Tensor<float>& ref);
double ssim(const Tensor<float>& pred, const Tensor<float>& ref);

}  // namespace nlf
