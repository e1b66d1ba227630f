// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nlf/rays.hpp"

namespace nlf {

struct FieldSample {
  double sigma = 0;  // density per unit length, >= 0
  Eigen::Vector3d color = Eigen::Vector3d::Zero();  // radiance in [0,1]^3
};

/// A scene the teacher can ray-march: density and radiance at a point seen
/// from a direction.
class RadianceField {
 public:
  virtual ~RadianceField() = default;
  virtual FieldSample query(const Eigen::Vector3d& point, const Eigen::Vector3d& direction) const = 0;
  virtual std::string name() const = 0;
};

/// Constant density and colour between two z planes.
class UniformSlab final : public RadianceField {
 public:
  UniformSlab(double sigma, Eigen::Vector3d color, double z_min, double z_max);
  FieldSample query(const Eigen::Vector3d& point, const Eigen::Vector3d& direction) const override;
  std::string name() const override { return "slab"; }

 private:
  double sigma_;
  Eigen::Vector3d color_;
  double z_min_, z_max_;
};

/// Uniform-density ball whose emitted colour varies with the polar angle of
/// the local point about the ball's +y axis.
class EmissiveSphere final : public RadianceField {
 public:
  EmissiveSphere(Eigen::Vector3d center, double radius, double sigma);
  FieldSample query(const Eigen::Vector3d& point, const Eigen::Vector3d& direction) const override;
  std::string name() const override { return "sphere"; }

 private:
  Eigen::Vector3d center_;
  double radius_, sigma_;
};

/// Dense ball with a longitude/latitude checkerboard albedo. `sharpness`
/// controls the width of the transition between squares (larger = harder).
class CheckerSphere final : public RadianceField {
 public:
  struct Params {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double radius = 1.0;
    double sigma = 25.0;
    Eigen::Vector3d color_a{0.95, 0.55, 0.15};
    Eigen::Vector3d color_b{0.15, 0.35, 0.85};
    int squares_around = 8;
    int squares_down = 4;
    double sharpness = 4.0;
  };
  explicit CheckerSphere(Params params);
  FieldSample query(const Eigen::Vector3d& point, const Eigen::Vector3d& direction) const override;
  std::string name() const override { return "checker"; }

 private:
  Params p_;
};

/// Built-in scenes by name: slab, sphere, checker.
std::unique_ptr<RadianceField> make_scene(const std::string& name);

struct RenderSettings {
  int samples = 256;
  double near = 2.0;
  double far = 6.0;
  Eigen::Vector3d background = Eigen::Vector3d::Ones();
  bool stratified = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// w_i = T_i (1 - exp(-sigma_i delta_i)) with T_i = exp(-sum_{j<i} sigma_j delta_j),
/// plus the transmittance left after the last sample.
struct CompositingWeights {
  std::vector<double> weights;
  double residual_transmittance = 1.0;
};

CompositingWeights compositing_weights(std::span<const double> sigmas, std::span<const double> deltas);

/// Sample distances along a ray: bin midpoints, or one uniform draw per bin.
std::vector<double> ray_sample_distances(const RenderSettings& settings, Rng* rng);

/// Alpha-composited colour of one ray. `rng` is required in stratified mode.
Eigen::Vector3d render_ray(const RadianceField& field, const Eigen::Vector3d& origin,
                           const Eigen::Vector3d& direction, const RenderSettings& settings,
                           Rng* rng = nullptr);

/// [1,3,H,W] image; stratified mode derives one stream per pixel from the seed.
Tensor<float> render_image(const RadianceField& field, const CameraIntrinsics& intrinsics,
                           const Pose& pose, const RenderSettings& settings);

/// Cameras on a sphere around `target`, looking at it, with elevation drawn
/// uniformly in [min, max] degrees above the horizontal plane (upper hemisphere).
struct HemispherePoseSampler {
  double radius = 4.0;
  double min_elevation_deg = 5.0;
  double max_elevation_deg = 65.0;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();

  Pose sample(Rng& rng) const;
};

/// Camera on the orbit sphere at the given angles (radians). Azimuth 0 and
/// elevation 0 put the camera at target + (0, 0, radius).
Pose orbit_pose(double azimuth, double elevation, double radius,
                const Eigen::Vector3d& target = Eigen::Vector3d::Zero());

/// Focal length giving the default ~45 degree field of view.
double default_focal(int width);

}  // namespace nlf
