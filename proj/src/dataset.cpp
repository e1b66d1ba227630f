// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/dataset.hpp"

#include <cstdio>
#include <stdexcept>

#include "nlf/image_io.hpp"
#include "nlf/weights.hpp"

namespace nlf {

namespace {

using nlohmann::json;

json intrinsics_json(const CameraIntrinsics& c) {
  return {{"width", c.width}, {"height", c.height}, {"focal", c.focal}};
}

CameraIntrinsics intrinsics_from(const json& j) {
  CameraIntrinsics c{j.at("width").get<int>(), j.at("height").get<int>(), j.at("focal").get<double>()};
  c.validate();
  return c;
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%04zu.png", i);
  return buf;
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::pseudo: return "pseudo";
    case Split::real_train: return "real-train";
    case Split::real_test: return "real-test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "pseudo") return Split::pseudo;
  if (text == "real-train") return Split::real_train;
  if (text == "real-test") return Split::real_test;
  throw std::invalid_argument("unknown split '" + text + "' (expected pseudo, real-train or real-test)");
}

void SceneDataset::validate() const {
  hi.validate();
  const CameraIntrinsics expect = downscale_intrinsics(hi, sr_factor);
  if (lo.width != expect.width || lo.height != expect.height || std::abs(lo.focal - expect.focal) > 1e-9)
    throw std::invalid_argument("dataset: low-resolution intrinsics do not match hi / sr_factor");
  if (!(near < far)) throw std::invalid_argument("dataset: near must be < far");
  for (const auto& f : frames) {
    f.pose.validate();
    if (f.image.empty()) continue;
    if (f.image.dims() != Dims{1, 3, hi.height, hi.width})
      throw ShapeError("dataset: image " + f.image_path + " has shape " + to_string(f.image.dims()) +
                       ", expected (1,3," + std::to_string(hi.height) + "," + std::to_string(hi.width) + ")");
  }
}

nlohmann::json SceneDataset::manifest() const {
  json frames_json = json::array();
  for (const auto& f : frames) {
    const auto rm = f.pose.to_row_major();
    frames_json.push_back({{"pose", std::vector<double>(rm.begin(), rm.end())}, {"image", f.image_path}});
  }
  return {{"scene", scene},
          {"split", to_string(split)},
          {"hi", intrinsics_json(hi)},
          {"lo", intrinsics_json(lo)},
          {"sr_factor", sr_factor},
          {"near", near},
          {"far", far},
          {"frames", frames_json}};
}

nlohmann::json ModelCamera::to_json() const {
  return {{"lo", {{"width", lo.width}, {"height", lo.height}, {"focal", lo.focal}}},
          {"sr_factor", sr_factor},
          {"near", near},
          {"far", far}};
}

ModelCamera ModelCamera::from_json(const nlohmann::json& j) {
  ModelCamera c;
  const auto& lo = j.at("lo");
  c.lo = {lo.at("width").get<int>(), lo.at("height").get<int>(), lo.at("focal").get<double>()};
  c.sr_factor = j.at("sr_factor").get<int>();
  c.near = j.at("near").get<double>();
  c.far = j.at("far").get<double>();
  c.lo.validate();
  if (c.sr_factor < 1 || !(c.near < c.far)) throw std::invalid_argument("camera: bad sr_factor or near/far");
  return c;
}

ModelCamera ModelCamera::of(const SceneDataset& dataset) {
  return {dataset.lo, dataset.sr_factor, dataset.near, dataset.far};
}

void save_dataset(const SceneDataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw std::runtime_error("cannot create dataset directory " + dir.string() + ": " + ec.message());
  for (const auto& f : dataset.frames) write_png(dir / f.image_path, f.image);
  write_file(dir / "manifest.json", dataset.manifest().dump(2) + "\n");
}

SceneDataset load_dataset(const std::filesystem::path& dir) {
  json m;
  try {
    m = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw std::runtime_error("dataset " + dir.string() + ": bad manifest: " + e.what());
  }
  SceneDataset ds;
  try {
    ds.scene = m.at("scene").get<std::string>();
    ds.split = parse_split(m.at("split").get<std::string>());
    ds.hi = intrinsics_from(m.at("hi"));
    ds.lo = intrinsics_from(m.at("lo"));
    ds.sr_factor = m.at("sr_factor").get<int>();
    ds.near = m.at("near").get<double>();
    ds.far = m.at("far").get<double>();
    for (const auto& fj : m.at("frames")) {
      Frame f;
      f.pose = Pose::from_row_major(fj.at("pose").get<std::vector<double>>());
      f.image_path = fj.at("image").get<std::string>();
      ds.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("dataset " + dir.string() + ": bad manifest: " + e.what());
  }
  for (auto& f : ds.frames) f.image = read_png(dir / f.image_path);
  ds.validate();
  return ds;
}

void PseudoDatasetOptions::validate() const {
  if (n_images < 1) throw std::invalid_argument("n_images must be >= 1, got " + std::to_string(n_images));
  hi.validate();
  downscale_intrinsics(hi, sr_factor);
  render.validate();
  if (!(sampler.radius > render.near))
    throw std::invalid_argument("pose radius must exceed the near plane");
}

SceneDataset generate_pseudo_dataset(const RadianceField& field, const PseudoDatasetOptions& options,
                                     const std::filesystem::path& out_dir) {
  options.validate();
  SceneDataset ds;
  ds.scene = field.name();
  ds.split = options.split;
  ds.hi = options.hi;
  ds.sr_factor = options.sr_factor;
  ds.lo = downscale_intrinsics(options.hi, options.sr_factor);
  ds.near = options.render.near;
  ds.far = options.render.far;

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw std::runtime_error("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

  ds.frames.resize(static_cast<std::size_t>(options.n_images));
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    Rng rng(derive_seed(options.seed, {i}));
    auto& f = ds.frames[i];
    f.pose = options.sampler.sample(rng);
    f.image_path = frame_name(i);
    RenderSettings rs = options.render;
    rs.seed = derive_seed(options.seed, {i, 1});
    // Stored as PNG, so keep the in-memory copy identical to what a reload sees.
    f.image = quantize8(render_image(field, ds.hi, f.pose, rs));
    write_png(out_dir / f.image_path, f.image);
  }
  write_file(out_dir / "manifest.json", ds.manifest().dump(2) + "\n");
  return ds;
}

}  // namespace nlf
