// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/cli.hpp"

#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "nlf/bench.hpp"
#include "nlf/distill.hpp"
#include "nlf/image_io.hpp"
#include "nlf/metrics.hpp"
#include "nlf/service.hpp"
#include "nlf/weights.hpp"

namespace nlf {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

/// Bad flags or inputs detected before any output was written.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

void require_output_dir(const fs::path& out) {
  if (out.empty()) throw UsageError("--out is required");
  if (fs::exists(out) && !fs::is_directory(out))
    throw UsageError("--out " + out.string() + " exists and is not a directory");
}

void make_output_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create " + out.string() + ": " + ec.message());
}

std::string frame_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", i);
  return buf;
}

// ---- teacher ---------------------------------------------------------------

struct TeacherArgs {
  std::string scene = "checker";
  int n_images = 200;
  int resolution = 64;
  int sr_factor = 8;
  double near = 2.0;
  double far = 6.0;
  std::uint64_t seed = 0;
  int samples = 256;
  std::string split = "pseudo";
  double radius = 4.0;
  fs::path out;
};

int cmd_teacher(const TeacherArgs& a, std::ostream& out) {
  std::unique_ptr<RadianceField> field;
  PseudoDatasetOptions o;
  try {
    field = make_scene(a.scene);
    o.n_images = a.n_images;
    o.hi = {a.resolution, a.resolution, default_focal(a.resolution)};
    o.sr_factor = a.sr_factor;
    o.render.near = a.near;
    o.render.far = a.far;
    o.render.samples = a.samples;
    o.sampler.radius = a.radius;
    o.seed = a.seed;
    o.split = parse_split(a.split);
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  require_output_dir(a.out);
  const SceneDataset ds = generate_pseudo_dataset(*field, o, a.out);
  out << "wrote " << ds.size() << " " << to_string(ds.split) << " images of " << ds.hi.width << "x" << ds.hi.height
      << " (rays " << ds.lo.width << "x" << ds.lo.height << ") to " << a.out.string() << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  fs::path data;
  fs::path eval_data;
  fs::path config;
  std::string preset = "tiny";
  fs::path resume;
  fs::path init_weights;
  fs::path out;
  std::string stage;
  TrainConfig train;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  NetConfig net = NetConfig::tiny();
  TrainConfig tc;
  Stage stage = Stage::pseudo;
  SceneDataset data, eval_data;
  std::optional<Checkpoint> resume;
  std::optional<Model<float>> init;
  try {
    if (!a.config.empty()) {
      const json cfg = read_json_file(a.config);
      for (const auto& [key, value] : cfg.items())
        if (key != "preset" && key != "net" && key != "train")
          throw UsageError(a.config.string() + ": unknown key '" + key + "'");
      if (cfg.contains("preset")) net = NetConfig::preset(cfg["preset"].get<std::string>());
      if (cfg.contains("net")) net = NetConfig::from_json(cfg["net"]);
      if (cfg.contains("train")) tc = TrainConfig::from_json(cfg["train"]);
    }
    if (sub.count("--preset") || a.config.empty()) net = NetConfig::preset(a.preset);
    if (sub.count("--iterations")) tc.iterations = a.train.iterations;
    if (sub.count("--batch-size")) tc.batch_size = a.train.batch_size;
    if (sub.count("--lr")) tc.lr = a.train.lr;
    if (sub.count("--decay-steps")) tc.decay_steps = a.train.decay_steps;
    if (sub.count("--seed")) tc.seed = a.train.seed;
    if (sub.count("--checkpoint-every")) tc.checkpoint_every = a.train.checkpoint_every;
    if (sub.count("--eval-every")) tc.eval_every = a.train.eval_every;
    tc.validate();
    net.validate();

    data = load_dataset(a.data);
    if (!a.stage.empty()) {
      if (a.stage != "pseudo" && a.stage != "finetune") throw UsageError("--stage must be pseudo or finetune");
      stage = a.stage == "pseudo" ? Stage::pseudo : Stage::finetune;
    } else if (data.split == Split::real_test) {
      throw UsageError("--data is a real-test split; train on pseudo or real-train data");
    } else {
      stage = data.split == Split::pseudo ? Stage::pseudo : Stage::finetune;
    }
    if (data.sr_factor != net.upsample_factor())
      throw UsageError("dataset sr_factor " + std::to_string(data.sr_factor) + " does not match the model's " +
                       std::to_string(net.upsample_factor()) + "x upsampling");
    if (!a.eval_data.empty()) eval_data = load_dataset(a.eval_data);

    const std::string hash = config_hash_hex(net);
    if (!a.resume.empty()) {
      resume = read_checkpoint(a.resume);
      if (resume->config_hash != hash)
        throw UsageError("refusing to resume: checkpoint config hash " + resume->config_hash +
                         " differs from this run's " + hash);
      if (resume->seed != tc.seed) throw UsageError("refusing to resume: checkpoint seed differs from --seed");
    }
    if (!a.init_weights.empty()) {
      init = load_trained(a.init_weights).first;
      if (config_hash_hex(init->config) != hash)
        throw UsageError("--init-weights config hash " + config_hash_hex(init->config) + " differs from " + hash);
      if (init->folded) throw UsageError("--init-weights is batch-norm folded and cannot be trained");
    }
    require_output_dir(a.out);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  make_output_dir(a.out);
  Model<float> model = init ? std::move(*init) : build_model<float>(net, derive_seed(tc.seed, {7}));
  model.mode = Mode::train;
  TrainOptions opt;
  opt.eval_set = a.eval_data.empty() ? nullptr : &eval_data;
  opt.checkpoint_dir = a.out / "checkpoints";
  if (resume) opt.resume_from = a.resume;
  opt.log = [&](const std::string& s) { out << s << "\n" << std::flush; };
  const StageHistory h = train_stage(model, data, tc, stage, opt);

  const fs::path weights = a.out / "model.nlfw";
  save_weights(model, weights,
               {{"camera", ModelCamera::of(data).to_json()}, {"scene", data.scene}, {"stage", to_string(stage)}});
  json evals = json::array();
  for (const auto& e : h.evals) evals.push_back({{"iteration", e.iteration}, {"psnr", e.psnr}, {"ssim", e.ssim}});
  const json report = {{"stage", to_string(stage)},
                       {"data", a.data.string()},
                       {"config_hash", config_hash_hex(model.config)},
                       {"net", model.config.to_json()},
                       {"train", tc.to_json()},
                       {"params", count_params(model)},
                       {"start_iteration", h.start_iteration},
                       {"iterations_run", static_cast<std::int64_t>(h.losses.size())},
                       {"final_loss", h.final_loss()},
                       {"evals", evals},
                       {"checkpoint", h.last_checkpoint ? h.last_checkpoint->string() : std::string()},
                       {"weights", weights.string()},
                       {"wall_seconds", h.wall_seconds}};
  write_file(a.out / "report.json", report.dump(2) + "\n");
  out << "trained " << h.losses.size() << " iterations, final loss " << h.final_loss() << "; weights "
      << weights.string() << "\n";
  return 0;
}

// ---- render ----------------------------------------------------------------

struct RenderArgs {
  fs::path weights;
  fs::path pose_file;
  int orbit = 0;
  double elevation = 30.0;
  double radius = 4.0;
  fs::path out;
};

int cmd_render(const RenderArgs& a, const CLI::App& sub, std::ostream& out) {
  std::vector<Pose> poses;
  Model<float> model;
  ModelCamera camera;
  try {
    const bool by_file = sub.count("--pose-file") > 0, by_orbit = sub.count("--orbit") > 0;
    if (by_file == by_orbit) throw UsageError("give exactly one of --pose-file or --orbit");
    if (by_orbit && a.orbit < 1) throw UsageError("--orbit must be >= 1");
    std::tie(model, camera) = load_trained(a.weights);
    poses = by_file ? read_pose_file(a.pose_file) : orbit_trajectory(a.orbit, a.elevation, a.radius);
    for (const auto& p : poses) accept_pose(p);
    require_output_dir(a.out);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  make_output_dir(a.out);
  for (std::size_t i = 0; i < poses.size(); ++i)
    write_file(a.out / frame_file(static_cast<int>(i)), render_frame_png(model, camera, poses[i]));
  const CameraIntrinsics hi = camera.hi();
  out << "wrote " << poses.size() << " frames of " << hi.width << "x" << hi.height << " to " << a.out.string() << "\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  fs::path weights;
  fs::path data;
  fs::path out;
  bool quantize = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  Model<float> model;
  SceneDataset ds;
  try {
    model = load_trained(a.weights).first;
    ds = load_dataset(a.data);
    if (ds.sr_factor != model.config.upsample_factor())
      throw UsageError("dataset sr_factor " + std::to_string(ds.sr_factor) + " does not match the model's " +
                       std::to_string(model.config.upsample_factor()) + "x upsampling");
    require_output_dir(a.out);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (ds.split != Split::real_test)
    err << "warning: evaluating on the " << to_string(ds.split) << " split, not real-test\n";
  make_output_dir(a.out);

  std::ostringstream csv;
  csv << "image,psnr,ssim\n" << std::setprecision(10);
  json rows = json::array();
  double psnr_sum = 0, ssim_sum = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t idx[] = {i};
    const Batch b = make_batch(ds, idx, SampleMode::test, model.config.K, model.config.L, 0);
    const Tensor<float> pred = model.infer(b.input);
    const double p = psnr(pred, b.target, {.quantize8 = a.quantize});
    const double s = ssim(a.quantize ? quantize8(pred) : pred, b.target);
    psnr_sum += p;
    ssim_sum += s;
    csv << ds.frames[i].image_path << "," << p << "," << s << "\n";
    rows.push_back({{"image", ds.frames[i].image_path}, {"psnr", p}, {"ssim", s}});
  }
  const double n = static_cast<double>(ds.size());
  const json report = {{"weights", a.weights.string()},
                       {"data", a.data.string()},
                       {"split", to_string(ds.split)},
                       {"quantized", a.quantize},
                       {"count", ds.size()},
                       {"mean", {{"psnr", psnr_sum / n}, {"ssim", ssim_sum / n}}},
                       {"per_image", rows}};
  write_file(a.out / "metrics.csv", csv.str());
  write_file(a.out / "metrics.json", report.dump(2) + "\n");
  out << std::fixed << std::setprecision(4) << "mean psnr " << psnr_sum / n << " dB, ssim " << ssim_sum / n
      << " over " << ds.size() << " images\n";
  return 0;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
  fs::path weights;
  std::string preset;
  std::vector<int> input_sizes{50, 100, 200};
  int iters = 10;
  int warmup = 2;
  int threads = 1;
  fs::path json_out;
};

int cmd_bench(const BenchArgs& a, const CLI::App& sub, std::ostream& out) {
  Model<float> model;
  std::string label;
  try {
    const bool by_weights = sub.count("--weights") > 0, by_preset = sub.count("--preset") > 0;
    if (by_weights == by_preset) throw UsageError("give exactly one of --weights or --preset");
    if (a.threads < 1) throw UsageError("--threads must be >= 1");
    for (int s : a.input_sizes) BenchOptions{s, a.iters, a.warmup}.validate();
    if (a.input_sizes.empty()) throw UsageError("--input-size needs at least one value");
    if (by_weights) {
      model = load_trained(a.weights).first;
      label = a.weights.string();
    } else {
      model = build_model<float>(NetConfig::preset(a.preset), 0);
      label = a.preset;
    }
    if (!a.json_out.empty() && fs::is_directory(a.json_out)) throw UsageError("--json must name a file");
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  model.mode = Mode::eval;
  Model<float> folded = model.folded ? clone(model) : fold_batchnorm(model);

  json results = json::array();
  out << "model " << label << ": " << count_params(model) << " params (" << count_params(folded)
      << " folded), threads " << a.threads << "\n";
  out << "  input    output       variant    mean_ms    p50_ms    p95_ms\n";
  for (int s : a.input_sizes) {
    const BenchOptions bo{s, a.iters, a.warmup};
    const LatencyStats plain = bench_forward(model, bo);
    const LatencyStats fused = bench_forward(folded, bo);
    const int o = s * model.config.upsample_factor();
    char line[160];
    for (const auto& [name, st] : {std::pair{"unfolded", &plain}, std::pair{"folded", &fused}}) {
      std::snprintf(line, sizeof line, "  %4dx%-4d %5dx%-5d  %-9s %9.3f %9.3f %9.3f\n", s, s, o, o, name,
                    st->mean_ms, st->p50_ms, st->p95_ms);
      out << line;
    }
    results.push_back({{"input_size", s}, {"output_size", o}, {"unfolded", plain.to_json()}, {"folded", fused.to_json()}});
  }
  const json report = {{"model", label},
                       {"params", count_params(model)},
                       {"params_folded", count_params(folded)},
                       {"threads", a.threads},
                       {"iters", a.iters},
                       {"warmup", a.warmup},
                       {"results", results}};
  if (!a.json_out.empty()) write_file(a.json_out, report.dump(2) + "\n");
  return 0;
}

// ---- serve -----------------------------------------------------------------

struct ServeArgs {
  fs::path weights;
  std::string host = "127.0.0.1";
  int port = 8765;
  int max_queue = 8;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  Model<float> model;
  ModelCamera camera;
  try {
    if (a.port < 0 || a.port > 65535) throw UsageError("--port must be in [0, 65535]");
    if (a.max_queue < 1) throw UsageError("--max-queue must be >= 1");
    std::tie(model, camera) = load_trained(a.weights);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  const CameraIntrinsics hi = camera.hi();
  RenderServer server(std::move(model), camera,
                      {a.host, static_cast<std::uint16_t>(a.port), static_cast<std::size_t>(a.max_queue)});
  const auto port = server.start();
  out << "serving " << hi.width << "x" << hi.height << " frames on " << a.host << ":" << port
      << " (tcp and websocket)\n"
      << std::flush;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  out << "stopped after " << server.frames_rendered() << " frames\n";
  return 0;
}

// ---- distill ---------------------------------------------------------------

struct DistillArgs {
  fs::path config;
  std::string scene;
  std::string preset;
  std::int64_t iterations = 0;
  std::int64_t finetune_iterations = 0;
  int resolution = 0;
  int n_pseudo = 0;
  int n_real_train = 0;
  int n_real_test = 0;
  std::uint64_t seed = 0;
  fs::path out;
};

int cmd_distill(const DistillArgs& a, const CLI::App& sub, std::ostream& out) {
  DistillConfig c;
  std::unique_ptr<RadianceField> field;
  try {
    if (!a.config.empty()) c = DistillConfig::from_json(read_json_file(a.config));
    if (sub.count("--scene")) c.scene = a.scene;
    if (sub.count("--preset")) c.net = NetConfig::preset(a.preset);
    if (sub.count("--iterations")) c.pretrain.iterations = a.iterations;
    if (sub.count("--finetune-iterations")) c.finetune.iterations = a.finetune_iterations;
    if (sub.count("--resolution")) c.resolution = a.resolution;
    if (sub.count("--n-pseudo")) c.n_pseudo = a.n_pseudo;
    if (sub.count("--n-real-train")) c.n_real_train = a.n_real_train;
    if (sub.count("--n-real-test")) c.n_real_test = a.n_real_test;
    if (sub.count("--seed")) c.seed = a.seed;
    c.validate();
    field = make_scene(c.scene);
    require_output_dir(a.out);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  make_output_dir(a.out);
  const json report = distill_scene(*field, c, a.out, [&](const std::string& s) { out << s << "\n" << std::flush; });
  const auto& st = report["stages"];
  out << std::fixed << std::setprecision(3) << "held-out psnr: stage 1 " << st[0]["eval"]["psnr"].get<double>()
      << " dB, stage 2 " << st[1]["eval"]["psnr"].get<double>() << " dB; report " << (a.out / "report.json").string()
      << "\n";
  return 0;
}

}  // namespace

std::pair<Model<float>, ModelCamera> load_trained(const fs::path& weights) {
  if (!fs::exists(weights)) throw std::invalid_argument("weights file " + weights.string() + " does not exist");
  ModelWeights w = load_weights(weights);
  if (!w.meta.contains("camera"))
    throw std::invalid_argument(weights.string() + " has no camera metadata; it was not written by nlf train");
  ModelCamera cam = ModelCamera::from_json(w.meta["camera"]);
  Model<float> model = model_from_weights(w);
  if (model.config.upsample_factor() != cam.sr_factor)
    throw std::invalid_argument(weights.string() + ": camera sr_factor disagrees with the network");
  return {std::move(model), cam};
}

std::vector<Pose> read_pose_file(const fs::path& path) {
  const json j = read_json_file(path);
  const json* list = &j;
  if (j.is_object() && j.contains("poses")) list = &j["poses"];
  std::vector<Pose> poses;
  if (j.is_object() && j.contains("frames")) {
    for (const auto& f : j["frames"]) poses.push_back(Pose::from_row_major(f.at("pose").get<std::vector<double>>()));
  } else {
    if (!list->is_array()) throw std::invalid_argument(path.string() + ": expected an array of poses");
    for (const auto& p : *list) poses.push_back(Pose::from_row_major(p.get<std::vector<double>>()));
  }
  if (poses.empty()) throw std::invalid_argument(path.string() + ": no poses");
  return poses;
}

std::vector<Pose> orbit_trajectory(int n, double elevation_deg, double radius) {
  if (n < 1) throw std::invalid_argument("orbit needs at least one frame");
  std::vector<Pose> poses;
  for (int i = 0; i < n; ++i)
    poses.push_back(orbit_pose(2 * std::numbers::pi * i / n, elevation_deg * std::numbers::pi / 180.0, radius));
  return poses;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"nlf: neural light field toolkit (teacher data, distillation, rendering, serving)"};
  app.require_subcommand(1);

  TeacherArgs ta;
  auto* teacher = app.add_subcommand("teacher", "Render a posed teacher dataset from an analytic scene");
  teacher->add_option("--scene", ta.scene, "slab, sphere or checker")->capture_default_str();
  teacher->add_option("--n-images", ta.n_images, "Number of images")->capture_default_str();
  teacher->add_option("--resolution", ta.resolution, "Square image side in pixels")->capture_default_str();
  teacher->add_option("--sr-factor", ta.sr_factor, "Ray-grid downscale factor")->capture_default_str();
  teacher->add_option("--near", ta.near)->capture_default_str();
  teacher->add_option("--far", ta.far)->capture_default_str();
  teacher->add_option("--seed", ta.seed)->capture_default_str();
  teacher->add_option("--samples", ta.samples, "Quadrature samples per ray")->capture_default_str();
  teacher->add_option("--split", ta.split, "pseudo, real-train or real-test")->capture_default_str();
  teacher->add_option("--radius", ta.radius, "Camera distance from the scene centre")->capture_default_str();
  teacher->add_option("--out", ta.out, "Output dataset directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a network on a dataset");
  train->add_option("--data", tr.data, "Training dataset directory")->required();
  train->add_option("--eval-data", tr.eval_data, "Held-out dataset evaluated during training");
  train->add_option("--config", tr.config, "JSON file with preset/net/train sections");
  train->add_option("--preset", tr.preset, "d60-sr3-8x, d60-sr3-12x or tiny")->capture_default_str();
  train->add_option("--resume", tr.resume, "Checkpoint sidecar (.json) to continue from");
  train->add_option("--init-weights", tr.init_weights, "Start from these weights (fine-tuning)");
  train->add_option("--stage", tr.stage, "pseudo or finetune (default: from the dataset split)");
  train->add_option("--iterations", tr.train.iterations);
  train->add_option("--batch-size", tr.train.batch_size);
  train->add_option("--lr", tr.train.lr);
  train->add_option("--decay-steps", tr.train.decay_steps);
  train->add_option("--seed", tr.train.seed);
  train->add_option("--checkpoint-every", tr.train.checkpoint_every);
  train->add_option("--eval-every", tr.train.eval_every);
  train->add_option("--out", tr.out, "Output directory")->required();

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render frames from trained weights");
  render->add_option("--weights", ra.weights)->required();
  render->add_option("--pose-file", ra.pose_file, "JSON poses (12 floats, camera-to-world, row-major)");
  render->add_option("--orbit", ra.orbit, "Number of frames on a circular trajectory");
  render->add_option("--elevation", ra.elevation, "Orbit elevation in degrees")->capture_default_str();
  render->add_option("--radius", ra.radius, "Orbit radius")->capture_default_str();
  render->add_option("--out", ra.out)->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of trained weights on a dataset");
  eval->add_option("--weights", ea.weights)->required();
  eval->add_option("--data", ea.data, "Dataset directory (normally the real-test split)")->required();
  eval->add_option("--out", ea.out, "Directory for metrics.csv and metrics.json")->required();
  eval->add_flag("--quantize", ea.quantize, "Round predictions to 8 bits before scoring");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Forward-pass latency for several input sizes");
  bench->add_option("--weights", ba.weights);
  bench->add_option("--preset", ba.preset);
  bench->add_option("--input-size", ba.input_sizes, "Square ray-grid sides")->delimiter(',')->capture_default_str();
  bench->add_option("--iters", ba.iters)->capture_default_str();
  bench->add_option("--warmup", ba.warmup)->capture_default_str();
  bench->add_option("--threads", ba.threads)->capture_default_str();
  bench->add_option("--json", ba.json_out, "Also write the report to this file");

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Pose-in, PNG-out render service (TCP and WebSocket)");
  serve->add_option("--weights", sa.weights)->required();
  serve->add_option("--host", sa.host)->capture_default_str();
  serve->add_option("--port", sa.port)->capture_default_str();
  serve->add_option("--max-queue", sa.max_queue)->capture_default_str();

  DistillArgs da;
  auto* distill = app.add_subcommand("distill", "Teacher data, two-stage training and held-out evaluation");
  distill->add_option("--config", da.config, "JSON distillation config");
  distill->add_option("--scene", da.scene);
  distill->add_option("--preset", da.preset);
  distill->add_option("--iterations", da.iterations, "Stage-1 iterations");
  distill->add_option("--finetune-iterations", da.finetune_iterations);
  distill->add_option("--resolution", da.resolution);
  distill->add_option("--n-pseudo", da.n_pseudo);
  distill->add_option("--n-real-train", da.n_real_train);
  distill->add_option("--n-real-test", da.n_real_test);
  distill->add_option("--seed", da.seed);
  distill->add_option("--out", da.out)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (teacher->parsed()) return cmd_teacher(ta, out);
    if (train->parsed()) return cmd_train(tr, *train, out);
    if (render->parsed()) return cmd_render(ra, *render, out);
    if (eval->parsed()) return cmd_eval(ea, out, err);
    if (bench->parsed()) return cmd_bench(ba, *bench, out);
    if (serve->parsed()) return cmd_serve(sa, out);
    if (distill->parsed()) return cmd_distill(da, *distill, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace nlf
