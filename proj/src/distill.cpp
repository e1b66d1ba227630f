// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/distill.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "nlf/metrics.hpp"
#include "nlf/weights.hpp"

namespace nlf {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t stage_tag(Stage s) { return s == Stage::pseudo ? 0x5053 : 0x4654; }

Stage parse_stage(const std::string& s) {
  if (s == "pseudo") return Stage::pseudo;
  if (s == "finetune") return Stage::finetune;
  throw std::invalid_argument("unknown stage '" + s + "'");
}

std::string ckpt_stem(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt-%08lld", static_cast<long long>(iteration));
  return buf;
}

std::string adam_to_bytes(const AdamState<float>& adam, const std::vector<Var<float>>& params) {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.emplace_back("m/" + params[i].name(), adam.m[i]);
    tensors.emplace_back("v/" + params[i].name(), adam.v[i]);
  }
  const json header = {{"step", adam.step}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}};
  return serialize_tensors(tensors, header);
}

AdamState<float> adam_from_bytes(const std::string& bytes, const std::vector<Var<float>>& params) {
  auto [header, tensors] = deserialize_tensors(bytes);
  if (tensors.size() != 2 * params.size())
    throw std::runtime_error("optimizer state holds " + std::to_string(tensors.size()) + " tensors, expected " +
                             std::to_string(2 * params.size()));
  AdamState<float> adam;
  adam.step = header.at("step").get<std::int64_t>();
  adam.beta1 = header.at("beta1").get<double>();
  adam.beta2 = header.at("beta2").get<double>();
  adam.eps = header.at("eps").get<double>();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [mn, m] = tensors[2 * i];
    auto& [vn, v] = tensors[2 * i + 1];
    if (mn != "m/" + params[i].name() || vn != "v/" + params[i].name())
      throw std::runtime_error("optimizer state does not match parameter " + params[i].name());
    require_same_dims(m, params[i].value(), "optimizer state");
    require_same_dims(v, params[i].value(), "optimizer state");
    adam.m.push_back(std::move(m));
    adam.v.push_back(std::move(v));
  }
  return adam;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be > 0");
  if (decay_steps < 0) throw std::invalid_argument("decay_steps must be >= 0");
  if (checkpoint_every < 0 || eval_every < 0) throw std::invalid_argument("cadences must be >= 0");
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},       {"iterations", iterations}, {"lr", lr},
          {"decay_steps", decay_steps},     {"seed", seed},             {"checkpoint_every", checkpoint_every},
          {"eval_every", eval_every}};
}

TrainConfig TrainConfig::from_json(const json& j, const TrainConfig& base) {
  TrainConfig c = base;
  for (const auto& [key, value] : j.items()) {
    if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "iterations") c.iterations = value.get<std::int64_t>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "decay_steps") c.decay_steps = value.get<std::int64_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "checkpoint_every") c.checkpoint_every = value.get<std::int64_t>();
    else if (key == "eval_every") c.eval_every = value.get<std::int64_t>();
    else throw std::invalid_argument("unknown training option '" + key + "'");
  }
  c.validate();
  return c;
}

double lr_at(std::int64_t iter, const TrainConfig& config) {
  if (iter < 0) throw std::invalid_argument("lr_at: iteration must be >= 0");
  const std::int64_t steps = config.decay_steps > 0 ? config.decay_steps : std::max<std::int64_t>(1, config.iterations);
  return config.lr * std::pow(0.1, static_cast<double>(iter) / static_cast<double>(steps));
}

Batch make_batch(const SceneDataset& dataset, std::span<const std::size_t> indices, SampleMode mode, int K,
                 int L, std::uint64_t seed) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no indices");
  const auto b = static_cast<std::int64_t>(indices.size());
  Batch out{Tensor<float>({b, encoded_channels(K, L), dataset.lo.height, dataset.lo.width}),
            Tensor<float>({b, 3, dataset.hi.height, dataset.hi.width})};
  const std::int64_t image_size = 3LL * dataset.hi.height * dataset.hi.width;
  for (std::int64_t i = 0; i < b; ++i) {
    const std::size_t idx = indices[static_cast<std::size_t>(i)];
    if (idx >= dataset.size())
      throw std::out_of_range("make_batch: index " + std::to_string(idx) + " outside dataset of " +
                              std::to_string(dataset.size()));
    const Frame& f = dataset.frames[idx];
    const RayGrid grid = generate_ray_grid(dataset.lo, f.pose, dataset.near, dataset.far);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    encode_rays_into(grid, K, L, mode, rng, out.input, i);
    std::copy(f.image.data(), f.image.data() + image_size, out.target.data() + i * image_size);
  }
  return out;
}

std::string to_string(Stage stage) { return stage == Stage::pseudo ? "pseudo" : "finetune"; }

EvalRecord evaluate(Model<float>& model, const SceneDataset& dataset) {
  if (dataset.frames.empty()) throw std::invalid_argument("evaluate: empty dataset");
  EvalRecord rec;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::size_t idx[] = {i};
    const Batch batch = make_batch(dataset, idx, SampleMode::test, model.config.K, model.config.L, 0);
    const Tensor<float> pred = model.infer(batch.input);
    rec.psnr += psnr(pred, batch.target);
    rec.ssim += ssim(pred, batch.target);
  }
  rec.psnr /= static_cast<double>(dataset.size());
  rec.ssim /= static_cast<double>(dataset.size());
  return rec;
}

std::filesystem::path save_checkpoint(const std::filesystem::path& dir, Model<float>& model,
                                      const AdamState<float>& adam, std::int64_t iteration, Stage stage,
                                      const TrainConfig& config, const ModelCamera& camera) {
  std::filesystem::create_directories(dir);
  const std::string stem = ckpt_stem(iteration);
  const auto weights = dir / (stem + ".nlfw");
  const auto optimizer = dir / (stem + ".adam");
  const auto sidecar = dir / (stem + ".json");
  save_weights(model, weights, {{"iteration", iteration}, {"stage", to_string(stage)}, {"camera", camera.to_json()}});
  write_file(optimizer, adam_to_bytes(adam, model.parameters()));
  const json side = {{"iteration", iteration},
                     {"stage", to_string(stage)},
                     {"seed", config.seed},
                     {"config_hash", config_hash_hex(model.config)},
                     {"weights", weights.filename().string()},
                     {"optimizer", optimizer.filename().string()},
                     {"train_config", config.to_json()}};
  // Sidecar last: its presence marks a complete checkpoint.
  write_file(sidecar, side.dump(2) + "\n");
  return sidecar;
}

Checkpoint read_checkpoint(const std::filesystem::path& sidecar) {
  const json j = json::parse(read_file(sidecar));
  Checkpoint c;
  c.iteration = j.at("iteration").get<std::int64_t>();
  c.stage = parse_stage(j.at("stage").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.config_hash = j.at("config_hash").get<std::string>();
  c.weights = sidecar.parent_path() / j.at("weights").get<std::string>();
  c.optimizer = sidecar.parent_path() / j.at("optimizer").get<std::string>();
  return c;
}

StageHistory train_stage(Model<float>& model, const SceneDataset& dataset, const TrainConfig& config,
                         Stage stage, const TrainOptions& options) {
  config.validate();
  model.config.validate();
  if (model.folded) throw std::invalid_argument("train_stage: cannot train a batch-norm-folded model");
  const Split want = stage == Stage::pseudo ? Split::pseudo : Split::real_train;
  if (dataset.split != want)
    throw std::invalid_argument("train_stage: " + to_string(stage) + " stage needs the " + to_string(want) +
                                " split, got " + to_string(dataset.split));
  if (dataset.frames.empty()) throw std::invalid_argument("train_stage: empty dataset");
  if (dataset.sr_factor != model.config.upsample_factor())
    throw std::invalid_argument("train_stage: dataset sr_factor " + std::to_string(dataset.sr_factor) +
                                " does not match the model's " + std::to_string(model.config.upsample_factor()));
  const auto log = [&](const std::string& s) {
    if (options.log) options.log(s);
  };

  StageHistory hist;
  hist.stage = stage;
  std::vector<Var<float>> params = model.parameters();
  AdamState<float> adam = AdamState<float>::for_params(params);

  if (options.resume_from) {
    const Checkpoint ck = read_checkpoint(*options.resume_from);
    if (ck.config_hash != config_hash_hex(model.config))
      throw std::invalid_argument("resume: checkpoint config hash " + ck.config_hash +
                                  " does not match the model's " + config_hash_hex(model.config));
    if (ck.stage != stage) throw std::invalid_argument("resume: checkpoint is from the " + to_string(ck.stage) + " stage");
    if (ck.seed != config.seed) throw std::invalid_argument("resume: checkpoint seed differs from the config seed");
    model = model_from_weights(load_weights(ck.weights));
    model.mode = Mode::train;
    params = model.parameters();
    adam = adam_from_bytes(read_file(ck.optimizer), params);
    hist.start_iteration = ck.iteration;
    hist.last_checkpoint = *options.resume_from;
    log("resumed " + to_string(stage) + " at iteration " + std::to_string(ck.iteration));
  }

  const auto t0 = Clock::now();
  const std::size_t n = dataset.size();
  std::vector<std::size_t> indices(static_cast<std::size_t>(config.batch_size));
  for (std::int64_t it = hist.start_iteration; it < config.iterations; ++it) {
    const std::uint64_t it_seed = derive_seed(config.seed, {stage_tag(stage), static_cast<std::uint64_t>(it)});
    Rng rng(it_seed);
    for (auto& idx : indices) idx = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
    const Batch batch = make_batch(dataset, indices, SampleMode::train, model.config.K, model.config.L,
                                   derive_seed(it_seed, {1}));

    model.zero_grad();
    const Var<float> pred = model.forward(Var<float>::constant(batch.input), Mode::train);
    const Var<float> loss = mse_loss(pred, Var<float>::constant(batch.target));
    const double lv = loss.value()[0];
    if (!std::isfinite(lv))
      throw NonFiniteLoss("non-finite loss at iteration " + std::to_string(it) + "; last good checkpoint: " +
                          (hist.last_checkpoint ? hist.last_checkpoint->string() : std::string("none")));
    backward(loss);
    adam_step(std::span<Var<float>>(params), adam, lr_at(it, config));
    hist.losses.push_back(lv);

    const std::int64_t done = it + 1;
    const bool last = done == config.iterations;
    if (options.eval_set && ((config.eval_every && done % config.eval_every == 0) || last)) {
      EvalRecord rec = evaluate(model, *options.eval_set);
      rec.iteration = done;
      hist.evals.push_back(rec);
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s iter %lld loss %.6f lr %.3g eval psnr %.3f ssim %.4f (%.0fs)",
                    to_string(stage).c_str(), static_cast<long long>(done), lv, lr_at(it, config), rec.psnr,
                    rec.ssim, seconds_since(t0));
      log(buf);
    }
    if (!options.checkpoint_dir.empty() && ((config.checkpoint_every && done % config.checkpoint_every == 0) || last))
      hist.last_checkpoint = save_checkpoint(options.checkpoint_dir, model, adam, done, stage, config, ModelCamera::of(dataset));
  }
  hist.wall_seconds = seconds_since(t0);
  return hist;
}

void DistillConfig::validate() const {
  net.validate();
  pretrain.validate();
  finetune.validate();
  render.validate();
  make_scene(scene);
  if (n_pseudo < 1 || n_real_train < 1 || n_real_test < 1)
    throw std::invalid_argument("distill: every split needs at least one image");
  downscale_intrinsics(CameraIntrinsics{resolution, resolution, default_focal(resolution)}, sr_factor());
}

json DistillConfig::to_json() const {
  return {{"scene", scene},
          {"net", net.to_json()},
          {"resolution", resolution},
          {"n_pseudo", n_pseudo},
          {"n_real_train", n_real_train},
          {"n_real_test", n_real_test},
          {"teacher_samples", render.samples},
          {"near", render.near},
          {"far", render.far},
          {"pose_radius", sampler.radius},
          {"elevation_deg", {sampler.min_elevation_deg, sampler.max_elevation_deg}},
          {"pretrain", pretrain.to_json()},
          {"finetune", finetune.to_json()},
          {"seed", seed}};
}

DistillConfig DistillConfig::from_json(const json& j) {
  DistillConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "scene") c.scene = value.get<std::string>();
    else if (key == "preset") c.net = NetConfig::preset(value.get<std::string>());
    else if (key == "net") c.net = NetConfig::from_json(value);
    else if (key == "resolution") c.resolution = value.get<int>();
    else if (key == "n_pseudo") c.n_pseudo = value.get<int>();
    else if (key == "n_real_train") c.n_real_train = value.get<int>();
    else if (key == "n_real_test") c.n_real_test = value.get<int>();
    else if (key == "teacher_samples") c.render.samples = value.get<int>();
    else if (key == "near") c.render.near = value.get<double>();
    else if (key == "far") c.render.far = value.get<double>();
    else if (key == "pose_radius") c.sampler.radius = value.get<double>();
    else if (key == "elevation_deg") {
      c.sampler.min_elevation_deg = value.at(0).get<double>();
      c.sampler.max_elevation_deg = value.at(1).get<double>();
    } else if (key == "pretrain") c.pretrain = TrainConfig::from_json(value, c.pretrain);
    else if (key == "finetune") c.finetune = TrainConfig::from_json(value, c.finetune);
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("unknown distill option '" + key + "'");
  }
  c.validate();
  return c;
}

json distill_scene(const RadianceField& field, const DistillConfig& config, const std::filesystem::path& out_dir,
                   std::function<void(const std::string&)> log) {
  config.validate();
  const auto t0 = Clock::now();
  const auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  PseudoDatasetOptions opt;
  opt.hi = CameraIntrinsics{config.resolution, config.resolution, default_focal(config.resolution)};
  opt.sr_factor = config.sr_factor();
  opt.sampler = config.sampler;
  opt.render = config.render;

  const auto make_split = [&](Split split, int n, std::uint64_t tag, const std::string& sub) {
    opt.split = split;
    opt.n_images = n;
    opt.seed = derive_seed(config.seed, {tag});
    say("teacher: rendering " + std::to_string(n) + " " + to_string(split) + " images");
    return generate_pseudo_dataset(field, opt, out_dir / sub);
  };
  const SceneDataset pseudo = make_split(Split::pseudo, config.n_pseudo, 1, "pseudo");
  const SceneDataset real_train = make_split(Split::real_train, config.n_real_train, 2, "real_train");
  const SceneDataset real_test = make_split(Split::real_test, config.n_real_test, 3, "real_test");

  Model<float> model = build_model<float>(config.net, derive_seed(config.seed, {4}));
  TrainConfig pre = config.pretrain;
  TrainConfig fine = config.finetune;
  pre.seed = derive_seed(config.seed, {5});
  fine.seed = derive_seed(config.seed, {6});

  json stages = json::array();
  const auto record = [&](const StageHistory& h, const EvalRecord& ev) {
    json history = json::array();
    for (const auto& e : h.evals) history.push_back({{"iteration", e.iteration}, {"psnr", e.psnr}, {"ssim", e.ssim}});
    stages.push_back({{"stage", to_string(h.stage)},
                      {"iterations", static_cast<std::int64_t>(h.losses.size())},
                      {"final_loss", h.final_loss()},
                      {"eval", {{"psnr", ev.psnr}, {"ssim", ev.ssim}}},
                      {"eval_history", history},
                      {"wall_seconds", h.wall_seconds}});
  };

  TrainOptions to;
  to.eval_set = &real_test;
  to.log = log;
  to.checkpoint_dir = out_dir / "checkpoints" / "pseudo";
  const StageHistory h1 = train_stage(model, pseudo, pre, Stage::pseudo, to);
  const EvalRecord e1 = evaluate(model, real_test);
  record(h1, e1);

  to.checkpoint_dir = out_dir / "checkpoints" / "finetune";
  const StageHistory h2 = train_stage(model, real_train, fine, Stage::finetune, to);
  const EvalRecord e2 = evaluate(model, real_test);
  record(h2, e2);

  save_weights(model, out_dir / "model.nlfw", {{"scene", field.name()}, {"camera", ModelCamera::of(pseudo).to_json()}});
  const json report = {{"scene", field.name()},
                       {"config", config.to_json()},
                       {"config_hash", config_hash_hex(model.config)},
                       {"params", count_params(model)},
                       {"stages", stages},
                       {"final", {{"psnr", e2.psnr}, {"ssim", e2.ssim}, {"split", "real-test"}}},
                       {"wall_seconds", seconds_since(t0)}};
  write_file(out_dir / "report.json", report.dump(2) + "\n");
  return report;
}

}  // namespace nlf
