// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <vector>

#include "nlf/random.hpp"
#include "nlf/tensor.hpp"

namespace nlf {

/// Pinhole camera with a single focal length and the principal point at the
/// image centre.
struct CameraIntrinsics {
  int width = 0;
  int height = 0;
  double focal = 0;

  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

/// Camera-to-world transform. Columns of the rotation are the camera's
/// right, up and backward axes; the camera looks down its -z axis.
struct Pose {
  Eigen::Matrix<double, 3, 4> matrix = Eigen::Matrix<double, 3, 4>::Identity();

  Eigen::Matrix3d rotation() const { return matrix.leftCols<3>(); }
  Eigen::Vector3d origin() const { return matrix.col(3); }

  static Pose from_row_major(std::span<const double> values);
  std::array<double, 12> to_row_major() const;
  static Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& up = Eigen::Vector3d::UnitY());

  /// Throws unless the rotation is orthonormal with det +1 within `tol`.
  void validate(double tol = 1e-5) const;
};

/// Projects the rotation block to the nearest proper rotation (SVD).
Pose orthonormalized(const Pose& pose);

struct RayGrid {
  Tensor<float> origins;     // [1,3,H,W]
  Tensor<float> directions;  // [1,3,H,W], unit length
  double near = 2.0;
  double far = 6.0;

  int height() const { return static_cast<int>(origins.height()); }
  int width() const { return static_cast<int>(origins.width()); }
};

enum class SampleMode { train, test };

RayGrid generate_ray_grid(const CameraIntrinsics& intrinsics, const Pose& pose, double near,
                          double far);

/// Camera-space direction of pixel (x, y), not normalised.
Eigen::Vector3d pixel_direction(const CameraIntrinsics& intrinsics, int x, int y);

CameraIntrinsics downscale_intrinsics(const CameraIntrinsics& intrinsics, int factor);

/// K distances in [near, far]: stratified draws in train mode, bin midpoints
/// in test mode. Strictly increasing.
std::vector<double> sample_depths(double near, double far, int K, SampleMode mode, Rng& rng);

/// Per-ray distances as a [1,K,H,W] tensor.
Tensor<float> sample_points(const RayGrid& grid, int K, SampleMode mode, Rng& rng);

/// (v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v), cos(2^(L-1) pi v)).
std::vector<double> positional_encode(double value, int L);

constexpr int encoded_channels(int K, int L) { return 3 * K * (2 * L + 1); }

/// Network input for one ray grid. Channel (k*3 + axis)*(2L+1) + j holds
/// feature j of coordinate `axis` of point k (point-major, coordinate-minor).
struct EncodedRayTensor {
  Tensor<float> tensor;  // [B, 3K(2L+1), H, W]
  int K = 8;
  int L = 6;
  double near = 2.0;
  double far = 6.0;
  SampleMode mode = SampleMode::test;
};

EncodedRayTensor encode_rays(const RayGrid& grid, int K, int L, SampleMode mode, Rng& rng);

/// Writes the encoding of `grid` into batch slot `b` of `out` (which must be
/// [B, 3K(2L+1), H, W]).
void encode_rays_into(const RayGrid& grid, int K, int L, SampleMode mode, Rng& rng,
                      Tensor<float>& out, std::int64_t b);

}  // namespace nlf
