// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/rays.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nlf {

void CameraIntrinsics::validate() const {
  if (width < 1 || height < 1)
    throw std::invalid_argument("camera: width and height must be >= 1, got " +
                                std::to_string(width) + "x" + std::to_string(height));
  if (!(focal > 0) || !std::isfinite(focal))
    throw std::invalid_argument("camera: focal must be positive, got " + std::to_string(focal));
}

Pose Pose::from_row_major(std::span<const double> values) {
  if (values.size() != 12)
    throw std::invalid_argument("pose: expected 12 values, got " + std::to_string(values.size()));
  Pose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) p.matrix(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
  return p;
}

std::array<double, 12> Pose::to_row_major() const {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = matrix(r, c);
  return out;
}

Pose Pose::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                   const Eigen::Vector3d& up) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-12) throw std::invalid_argument("look_at: view direction parallel to up");
  right.normalize();
  const Eigen::Vector3d cam_up = right.cross(forward);
  Pose p;
  p.matrix.col(0) = right;
  p.matrix.col(1) = cam_up;
  p.matrix.col(2) = -forward;
  p.matrix.col(3) = eye;
  return p;
}

void Pose::validate(double tol) const {
  if (!matrix.allFinite()) throw std::invalid_argument("pose: non-finite entries");
  const Eigen::Matrix3d r = rotation();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tol)
    throw std::invalid_argument("pose: rotation is not orthonormal (max deviation " +
                                std::to_string(ortho) + ")");
  if (std::abs(r.determinant() - 1.0) > tol)
    throw std::invalid_argument("pose: rotation determinant is " + std::to_string(r.determinant()));
}

Pose orthonormalized(const Pose& pose) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(pose.rotation(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) throw std::invalid_argument("pose: rotation is a reflection");
  Pose out = pose;
  out.matrix.leftCols<3>() = r;
  return out;
}

Eigen::Vector3d pixel_direction(const CameraIntrinsics& intrinsics, int x, int y) {
  const double w = intrinsics.width, h = intrinsics.height, f = intrinsics.focal;
  return {((x + 0.5) - w / 2) / f, -((y + 0.5) - h / 2) / f, -1.0};
}

RayGrid generate_ray_grid(const CameraIntrinsics& intrinsics, const Pose& pose, double near,
                          double far) {
  intrinsics.validate();
  if (!(near < far)) throw std::invalid_argument("ray grid: near must be < far");
  const int h = intrinsics.height, w = intrinsics.width;
  RayGrid grid;
  grid.near = near;
  grid.far = far;
  grid.origins = Tensor<float>({1, 3, h, w});
  grid.directions = Tensor<float>({1, 3, h, w});
  const Eigen::Matrix3d rot = pose.rotation();
  const Eigen::Vector3d o = pose.origin();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d d = (rot * pixel_direction(intrinsics, x, y)).normalized();
      for (int a = 0; a < 3; ++a) {
        grid.origins.at(0, a, y, x) = static_cast<float>(o[a]);
        grid.directions.at(0, a, y, x) = static_cast<float>(d[a]);
      }
    }
  }
  return grid;
}

CameraIntrinsics downscale_intrinsics(const CameraIntrinsics& intrinsics, int factor) {
  if (factor < 1) throw std::invalid_argument("downscale factor must be >= 1");
  if (intrinsics.width % factor != 0 || intrinsics.height % factor != 0)
    throw std::invalid_argument("resolution " + std::to_string(intrinsics.width) + "x" +
                                std::to_string(intrinsics.height) + " is not divisible by factor " +
                                std::to_string(factor));
  return {intrinsics.width / factor, intrinsics.height / factor, intrinsics.focal / factor};
}

std::vector<double> sample_depths(double near, double far, int K, SampleMode mode, Rng& rng) {
  if (K < 1) throw std::invalid_argument("sample count K must be >= 1");
  const double bin = (far - near) / K;
  std::vector<double> t(static_cast<std::size_t>(K));
  for (int i = 0; i < K; ++i) {
    const double u = mode == SampleMode::train ? uniform01(rng) : 0.5;
    t[static_cast<std::size_t>(i)] = near + (i + u) * bin;
  }
  return t;
}

Tensor<float> sample_points(const RayGrid& grid, int K, SampleMode mode, Rng& rng) {
  const int h = grid.height(), w = grid.width();
  Tensor<float> out({1, K, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto t = sample_depths(grid.near, grid.far, K, mode, rng);
      for (int k = 0; k < K; ++k) out.at(0, k, y, x) = static_cast<float>(t[static_cast<std::size_t>(k)]);
    }
  return out;
}

std::vector<double> positional_encode(double value, int L) {
  if (L < 0) throw std::invalid_argument("positional encoding order L must be >= 0");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(2 * L + 1));
  out.push_back(value);
  double freq = std::numbers::pi;
  for (int l = 0; l < L; ++l, freq *= 2) {
    out.push_back(std::sin(freq * value));
    out.push_back(std::cos(freq * value));
  }
  return out;
}

void encode_rays_into(const RayGrid& grid, int K, int L, SampleMode mode, Rng& rng,
                      Tensor<float>& out, std::int64_t b) {
  if (K < 1) throw std::invalid_argument("sample count K must be >= 1");
  if (L < 0) throw std::invalid_argument("positional encoding order L must be >= 0");
  const int h = grid.height(), w = grid.width();
  const int per_coord = 2 * L + 1;
  const Dims expected{out.rank() == 4 ? out.batch() : 0, encoded_channels(K, L), h, w};
  if (out.dims() != expected || b < 0 || b >= out.batch())
    throw ShapeError("encode_rays: output " + to_string(out.dims()) + " cannot hold slot " +
                     std::to_string(b) + " of a " + std::to_string(h) + "x" + std::to_string(w) +
                     " grid with K=" + std::to_string(K) + ", L=" + std::to_string(L));
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  float* base = out.data() + b * encoded_channels(K, L) * plane;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto t = sample_depths(grid.near, grid.far, K, mode, rng);
      const std::int64_t pix = static_cast<std::int64_t>(y) * w + x;
      for (int k = 0; k < K; ++k) {
        for (int a = 0; a < 3; ++a) {
          const double p = static_cast<double>(grid.origins.at(0, a, y, x)) +
                           t[static_cast<std::size_t>(k)] * grid.directions.at(0, a, y, x);
          float* ch = base + static_cast<std::int64_t>((k * 3 + a) * per_coord) * plane + pix;
          ch[0] = static_cast<float>(p);
          double freq = std::numbers::pi;
          for (int l = 0; l < L; ++l, freq *= 2) {
            ch[(2 * l + 1) * plane] = static_cast<float>(std::sin(freq * p));
            ch[(2 * l + 2) * plane] = static_cast<float>(std::cos(freq * p));
          }
        }
      }
    }
  }
}

EncodedRayTensor encode_rays(const RayGrid& grid, int K, int L, SampleMode mode, Rng& rng) {
  EncodedRayTensor enc;
  enc.K = K;
  enc.L = L;
  enc.near = grid.near;
  enc.far = grid.far;
  enc.mode = mode;
  if (K < 1) throw std::invalid_argument("sample count K must be >= 1");
  if (L < 0) throw std::invalid_argument("positional encoding order L must be >= 0");
  enc.tensor = Tensor<float>({1, encoded_channels(K, L), grid.height(), grid.width()});
  encode_rays_into(grid, K, L, mode, rng, enc.tensor, 0);
  return enc;
}

}  // namespace nlf
