// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

#include "nlf/parallel.hpp"

namespace nlf {

UniformSlab::UniformSlab(double sigma, Eigen::Vector3d color, double z_min, double z_max)
    : sigma_(sigma), color_(std::move(color)), z_min_(z_min), z_max_(z_max) {
  if (sigma < 0) throw std::invalid_argument("slab: density must be >= 0");
  if (!(z_min < z_max)) throw std::invalid_argument("slab: z_min must be < z_max");
}

FieldSample UniformSlab::query(const Eigen::Vector3d& p, const Eigen::Vector3d&) const {
  if (p.z() < z_min_ || p.z() > z_max_) return {};
  return {sigma_, color_};
}

EmissiveSphere::EmissiveSphere(Eigen::Vector3d center, double radius, double sigma)
    : center_(std::move(center)), radius_(radius), sigma_(sigma) {
  if (radius <= 0 || sigma < 0) throw std::invalid_argument("sphere: bad radius or density");
}

FieldSample EmissiveSphere::query(const Eigen::Vector3d& p, const Eigen::Vector3d&) const {
  const Eigen::Vector3d r = p - center_;
  const double dist = r.norm();
  if (dist > radius_) return {};
  const double ny = dist > 0 ? r.y() / dist : 0.0;
  return {sigma_, Eigen::Vector3d(0.5 + 0.4 * ny, 0.3 + 0.5 * ny * ny, 0.85 - 0.6 * ny * ny)};
}

CheckerSphere::CheckerSphere(Params params) : p_(std::move(params)) {
  if (p_.radius <= 0 || p_.sigma < 0 || p_.squares_around < 2 || p_.squares_down < 1)
    throw std::invalid_argument("checker sphere: bad parameters");
}

FieldSample CheckerSphere::query(const Eigen::Vector3d& p, const Eigen::Vector3d&) const {
  const Eigen::Vector3d r = p - p_.center;
  const double dist = r.norm();
  if (dist > p_.radius) return {};
  const double azimuth = std::atan2(r.x(), r.z());
  const double polar = dist > 0 ? std::acos(std::clamp(r.y() / dist, -1.0, 1.0)) : 0.0;
  const double wave = std::sin(0.5 * p_.squares_around * azimuth) * std::sin(p_.squares_down * polar);
  const double mix = 0.5 + 0.5 * std::tanh(p_.sharpness * wave);
  return {p_.sigma, mix * p_.color_a + (1 - mix) * p_.color_b};
}

std::unique_ptr<RadianceField> make_scene(const std::string& name) {
  if (name == "slab")
    return std::make_unique<UniformSlab>(1.5, Eigen::Vector3d(0.8, 0.3, 0.2), -0.75, 0.75);
  if (name == "sphere") return std::make_unique<EmissiveSphere>(Eigen::Vector3d::Zero(), 1.0, 3.0);
  if (name == "checker") return std::make_unique<CheckerSphere>(CheckerSphere::Params{});
  throw std::invalid_argument("unknown scene '" + name + "' (expected slab, sphere or checker)");
}

void RenderSettings::validate() const {
  if (samples < 1) throw std::invalid_argument("render: samples per ray must be >= 1");
  if (!(near < far)) throw std::invalid_argument("render: near must be < far");
}

CompositingWeights compositing_weights(std::span<const double> sigmas, std::span<const double> deltas) {
  if (sigmas.size() != deltas.size())
    throw std::invalid_argument("compositing: sigma and delta counts differ");
  CompositingWeights out;
  out.weights.resize(sigmas.size());
  double optical_depth = 0;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    const double t_i = std::exp(-optical_depth);
    const double tau = sigmas[i] * deltas[i];
    // T_i - T_{i+1}, written to keep the partition of unity exact.
    out.weights[i] = t_i * -std::expm1(-tau);
    optical_depth += tau;
  }
  out.residual_transmittance = std::exp(-optical_depth);
  return out;
}

std::vector<double> ray_sample_distances(const RenderSettings& settings, Rng* rng) {
  const int n = settings.samples;
  const double bin = (settings.far - settings.near) / n;
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double u = 0.5;
    if (settings.stratified) {
      if (!rng) throw std::invalid_argument("render: stratified sampling needs a generator");
      u = uniform01(*rng);
    }
    t[static_cast<std::size_t>(i)] = settings.near + (i + u) * bin;
  }
  return t;
}

Eigen::Vector3d render_ray(const RadianceField& field, const Eigen::Vector3d& origin,
                           const Eigen::Vector3d& direction, const RenderSettings& settings, Rng* rng) {
  settings.validate();
  const auto t = ray_sample_distances(settings, rng);
  const std::size_t n = t.size();
  std::vector<double> sigmas(n), deltas(n);
  std::vector<Eigen::Vector3d> colors(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = field.query(origin + t[i] * direction, direction);
    sigmas[i] = s.sigma;
    colors[i] = s.color;
    deltas[i] = (i + 1 < n ? t[i + 1] : settings.far) - t[i];
  }
  const auto w = compositing_weights(sigmas, deltas);
  Eigen::Vector3d rgb = w.residual_transmittance * settings.background;
  for (std::size_t i = 0; i < n; ++i) rgb += w.weights[i] * colors[i];
  return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

Tensor<float> render_image(const RadianceField& field, const CameraIntrinsics& intrinsics,
                           const Pose& pose, const RenderSettings& settings) {
  settings.validate();
  intrinsics.validate();
  pose.validate();
  // Same rays as generate_ray_grid, kept in double until the final store.
  const int h = intrinsics.height, w = intrinsics.width;
  const Eigen::Matrix3d rot = pose.rotation();
  const Eigen::Vector3d origin = pose.origin();
  Tensor<float> image({1, 3, h, w});
  parallel_for(h, [&](std::int64_t y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d d = (rot * pixel_direction(intrinsics, x, static_cast<int>(y))).normalized();
      std::optional<Rng> rng;
      if (settings.stratified) rng.emplace(derive_seed(settings.seed, {static_cast<std::uint64_t>(y) * w + x}));
      const Eigen::Vector3d rgb = render_ray(field, origin, d, settings, rng ? &*rng : nullptr);
      for (int a = 0; a < 3; ++a) image.at(0, a, y, x) = static_cast<float>(rgb[a]);
    }
  });
  return image;
}

Pose orbit_pose(double azimuth, double elevation, double radius, const Eigen::Vector3d& target) {
  const Eigen::Vector3d offset(radius * std::cos(elevation) * std::sin(azimuth), radius * std::sin(elevation),
                               radius * std::cos(elevation) * std::cos(azimuth));
  return Pose::look_at(target + offset, target);
}

Pose HemispherePoseSampler::sample(Rng& rng) const {
  constexpr double deg = std::numbers::pi / 180.0;
  const double azimuth = 2 * std::numbers::pi * uniform01(rng);
  const double elevation = (min_elevation_deg + (max_elevation_deg - min_elevation_deg) * uniform01(rng)) * deg;
  return orbit_pose(azimuth, elevation, radius, target);
}

double default_focal(int width) { return 1.2 * width; }

}  // namespace nlf
