// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// criterion fails.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "nlf/bench.hpp"
#include "nlf/distill.hpp"
#include "nlf/metrics.hpp"
#include "nlf/network.hpp"
#include "nlf/ops.hpp"
#include "nlf/volume.hpp"
#include "nlf/weights.hpp"
#include "test_util.hpp"

using namespace nlf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a sub-check; the criterion passes only if all of them do.
  void expect(bool ok, const std::string& what) {
    if (!detail.str().empty()) detail << "; ";
    detail << (ok ? "" : "FAILED ") << what;
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- encoding arity ------------------------------------------------------------

void encoding_arity(Outcome& o) {
  const CameraIntrinsics in{5, 4, default_focal(5)};
  const RayGrid grid = generate_ray_grid(in, orbit_pose(0.4, 0.3, 4.0), 2.0, 6.0);
  Rng rng(1);
  for (auto [K, L, want] : {std::tuple{8, 6, 312}, std::tuple{16, 10, 1008}}) {
    const auto enc = encode_rays(grid, K, L, SampleMode::train, rng);
    o.expect(enc.tensor.dims() == Dims{1, want, 4, 5} && encoded_channels(K, L) == want,
             "K=" + std::to_string(K) + ",L=" + std::to_string(L) + " -> " + std::to_string(enc.tensor.channels()) +
                 " channels");
  }
}

// ---- architecture shapes ------------------------------------------------------

void architecture_shape(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    NetConfig config;
    Dims in, out;
  };
  for (const auto& c : {Case{NetConfig::d60_sr3_8x(), {1, 312, 100, 100}, {1, 3, 800, 800}},
                        Case{NetConfig::d60_sr3_12x(), {1, 312, 84, 63}, {1, 3, 1008, 756}}}) {
    auto m = build_model<float>(c.config, 0);
    m.mode = Mode::eval;
    const auto y = m.infer(Tensor<float>(c.in));
    o.expect(y.dims() == c.out, to_string(c.in) + " -> " + to_string(y.dims()));
  }
  const double s = seconds_since(t0);
  o.expect(s < 30, fmt("%.1f s", s));
}

// ---- parameter counts ---------------------------------------------------------

void parameter_counts(Outcome& o) {
  struct Row {
    int width;
    double target;
    double tolerance;
  };
  std::int64_t prev = 0;
  bool monotone = true;
  for (const auto& r : {Row{64, 0.3e6, 0.15}, Row{128, 1.0e6, 0.15}, Row{256, 3.9e6, 0.10}, Row{384, 8.7e6, 0.15}}) {
    auto c = NetConfig::d60_sr3_8x();
    c.width = r.width;
    const auto n = count_params(build_model<float>(c));
    const double rel = n / r.target - 1;
    o.expect(std::abs(rel) <= r.tolerance, "W" + std::to_string(r.width) + " " + fmt("%.3fM", n / 1e6) + " vs " +
                                               fmt("%.1fM", r.target / 1e6) + fmt(" (%+.1f%%)", 100 * rel));
    monotone = monotone && n > prev;
    prev = n;
  }
  o.expect(monotone, "strictly increasing in width");
}

// ---- volume rendering oracle --------------------------------------------------

void compositing_oracle(Outcome& o) {
  RenderSettings rs;
  rs.samples = 256;
  rs.background = Eigen::Vector3d::Zero();
  const double sigma = 1.5, z0 = -0.75, z1 = 0.75;
  const Eigen::Vector3d c0(0.8, 0.3, 0.2);
  const UniformSlab slab(sigma, c0, z0, z1);
  const auto c = render_ray(slab, Eigen::Vector3d(0, 0, 4), -Eigen::Vector3d::UnitZ(), rs);
  double worst = 0;
  for (int ch = 0; ch < 3; ++ch) worst = std::max(worst, std::abs(c[ch] - c0[ch] * (1 - std::exp(-sigma * (z1 - z0)))));
  o.expect(worst < 1e-3, fmt("slab max channel error %.2e", worst));

  Rng rng(2026);
  double worst_sum = 0;
  for (int seq = 0; seq < 1000; ++seq) {
    const int n = 1 + static_cast<int>(rng() % 256);
    std::vector<double> s(n), d(n);
    for (int i = 0; i < n; ++i) {
      s[i] = 20 * uniform01(rng) * uniform01(rng);
      d[i] = 0.05 * uniform01(rng);
    }
    const auto w = compositing_weights(s, d);
    long double total = w.residual_transmittance;
    for (double x : w.weights) total += x;
    worst_sum = std::max(worst_sum, static_cast<double>(std::abs(total - 1)));
  }
  o.expect(worst_sum < 1e-6, fmt("partition of unity over 1000 sequences, max |sum-1| %.1e", worst_sum));
}

// ---- gradients ------------------------------------------------------------------

void gradient_suite(Outcome& o) {
  using test::check_gradients;
  using test::random_tensor;
  const auto t0 = std::chrono::steady_clock::now();
  auto param = [](Tensor<double> t, const std::string& name) { return Var<double>::parameter(std::move(t), name); };
  auto report = [&](const std::string& name, const test::GradCheck& r, double tol) {
    o.expect(r.max_rel_err < tol, name + fmt(" %.1e", r.max_rel_err));
  };

  {
    auto x = param(random_tensor<double>({2, 8, 5, 5}, 1), "x");
    auto w = param(random_tensor<double>({6, 8}, 2), "w");
    auto b = param(random_tensor<double>({6}, 3), "b");
    const auto t = Var<double>::constant(random_tensor<double>({2, 6, 5, 5}, 4));
    report("conv1x1", check_gradients({x, w, b}, [&] { return mse_loss(conv1x1(x, w, b), t); }), 1e-4);
  }
  for (auto [k, s, p] : {std::tuple{4, 2, 1}, std::tuple{3, 3, 0}}) {
    auto x = param(random_tensor<double>({2, 4, 3, 3}, 5), "x");
    auto w = param(random_tensor<double>({4, 3, k, k}, 6), "w");
    auto b = param(random_tensor<double>({3}, 7), "b");
    const auto t = Var<double>::constant(random_tensor<double>({2, 3, 3 * s, 3 * s}, 8));
    report("conv_transpose2d k" + std::to_string(k),
           check_gradients({x, w, b}, [&] { return mse_loss(conv_transpose2d(x, w, b, s, p), t); }), 1e-4);
  }
  {
    auto x = param(random_tensor<double>({4, 3, 5, 5}, 9), "x");
    auto g = param(random_tensor<double>({3}, 10, 0.5, 1.5), "scale");
    auto b = param(random_tensor<double>({3}, 11), "shift");
    auto stats = BatchNormStats<double>::initialized(3);
    const auto t = Var<double>::constant(random_tensor<double>({4, 3, 5, 5}, 12));
    report("batchnorm2d",
           check_gradients({x, g, b}, [&] { return mse_loss(batchnorm2d(x, g, b, stats, Mode::train), t); }), 1e-4);
  }
  {
    auto x = param(random_tensor<double>({2, 3, 4, 4}, 13, -3, 3), "x");
    report("gelu", check_gradients({x}, [&] { return sum(gelu(x)); }), 1e-4);
    report("sigmoid", check_gradients({x}, [&] { return sum(sigmoid(x)); }), 1e-4);
    auto y = param(random_tensor<double>({2, 3, 4, 4}, 14), "y");
    const auto t = Var<double>::constant(random_tensor<double>({2, 3, 4, 4}, 15));
    report("residual_add", check_gradients({x, y}, [&] { return mse_loss(residual_add(x, y), t); }), 1e-4);
    report("mse_loss", check_gradients({x}, [&] { return mse_loss(x, t); }), 1e-4);
  }
  {
    auto x = param(random_tensor<double>({2, 5, 3, 3}, 16), "x");
    auto w = param(random_tensor<double>({4, 5}, 17), "w");
    auto b = param(random_tensor<double>({4}, 18), "b");
    const auto t = Var<double>::constant(random_tensor<double>({2, 4, 3, 3}, 19));
    report("conv1x1-gelu-mse", check_gradients({x, w, b}, [&] { return mse_loss(gelu(conv1x1(x, w, b)), t); }),
           1e-4);
  }
  {
    auto m = build_model<double>(NetConfig::tiny(), 20);
    const auto x = Var<double>::constant(random_tensor<double>({2, 312, 2, 2}, 21));
    const auto t = Var<double>::constant(random_tensor<double>({2, 3, 8, 8}, 22, 0, 1));
    report("tiny model end to end",
           check_gradients(m.parameters(), [&] { return mse_loss(m.forward(x, Mode::train), t); }), 1e-3);
  }
  const double s = seconds_since(t0);
  o.expect(s < 120, fmt("%.1f s", s));
}

// ---- desk-scale distillation --------------------------------------------------

void distillation(Outcome& o, const fs::path& work) {
  const DistillConfig cfg;  // the desk-scale defaults
  const auto field = make_scene(cfg.scene);
  const auto t0 = std::chrono::steady_clock::now();
  const json report = distill_scene(*field, cfg, work / "distill", [](const std::string& line) {
    std::cerr << "  " << line << "\n";
  });
  const double s = seconds_since(t0);
  const double p1 = report["stages"][0]["eval"]["psnr"].get<double>();
  const double p2 = report["stages"][1]["eval"]["psnr"].get<double>();
  o.expect(cfg.net == NetConfig::tiny() && cfg.resolution == 128 && cfg.n_pseudo == 200 &&
               cfg.pretrain.iterations == 20000 && cfg.scene == "checker",
           "tiny, checker, 32x32 -> 128x128, 200 pseudo images, 20000 iterations");
  o.expect(p2 >= 25.0, fmt("held-out psnr %.2f dB (need >= 25)", p2));
  o.expect(p2 >= p1, fmt("stage 1 %.2f dB", p1) + fmt(" -> stage 2 %.2f dB", p2));
  o.expect(s <= 7200, fmt("%.0f s", s));
}

// ---- determinism and persistence ----------------------------------------------

void determinism(Outcome& o, const fs::path& work) {
  PseudoDatasetOptions dopt;
  dopt.n_images = 6;
  dopt.hi = {16, 16, default_focal(16)};
  dopt.sr_factor = 4;
  dopt.render.samples = 64;
  const auto ds = generate_pseudo_dataset(*make_scene("checker"), dopt, work / "det-data");

  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.iterations = 510;
  cfg.checkpoint_every = 500;
  cfg.eval_every = 0;
  cfg.seed = 31;
  auto a = build_model<float>(NetConfig::tiny(), 1);
  TrainOptions opt;
  opt.checkpoint_dir = work / "det-ckpt";
  const auto full = train_stage(a, ds, cfg, Stage::pseudo, opt);

  auto b = build_model<float>(NetConfig::tiny(), 2);
  TrainOptions ropt;
  ropt.resume_from = work / "det-ckpt" / "ckpt-00000500.json";
  const auto resumed = train_stage(b, ds, cfg, Stage::pseudo, ropt);
  double worst = resumed.losses.size() == 10 ? 0 : 1;
  for (std::size_t i = 0; i < std::min<std::size_t>(10, resumed.losses.size()); ++i)
    worst = std::max(worst, std::abs(resumed.losses[i] - full.losses[500 + i]));
  o.expect(worst < 1e-6, fmt("resume at 500 vs uninterrupted, max loss diff %.1e", worst));

  a.mode = Mode::eval;
  save_weights(a, work / "det.nlfw");
  auto back = model_from_weights(load_weights(work / "det.nlfw"));
  back.mode = Mode::eval;
  const auto x = test::random_tensor<float>({2, 312, 6, 6}, 3);
  const auto ya = a.infer(x);
  o.expect(back.infer(x).storage() == ya.storage(), "weight round trip bitwise");

  auto folded = fold_batchnorm(a);
  const auto yf = folded.infer(x);
  double fold_err = 0;
  for (std::int64_t i = 0; i < ya.size(); ++i) fold_err = std::max(fold_err, double(std::abs(ya[i] - yf[i])));
  o.expect(fold_err < 1e-5, fmt("folded vs unfolded max diff %.1e", fold_err));
}

// ---- bench trend -----------------------------------------------------------------

void bench_trend(Outcome& o) {
  auto m = build_model<float>(NetConfig::tiny(), 0);
  m.mode = Mode::eval;
  double prev = 0;
  std::string means;
  bool increasing = true;
  for (int s : {50, 100, 200}) {
    const auto st = bench_forward(m, {.input_size = s, .iters = 10, .warmup = 2});
    increasing = increasing && st.mean_ms > prev;
    prev = st.mean_ms;
    means += (means.empty() ? "" : " < ") + fmt("%.1f ms", st.mean_ms);
    o.pass = o.pass && st.p50_ms <= st.p95_ms;
  }
  o.expect(increasing, "tiny mean latency at 50/100/200: " + means);
}

// ---- metrics ---------------------------------------------------------------------

// 11x11 Gaussian SSIM by direct summation in long double.
long double direct_ssim(const Tensor<float>& x, const Tensor<float>& y) {
  long double k[11][11], total = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += k[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5L);
  const long double c1 = 1e-4L, c2 = 9e-4L;
  long double acc = 0;
  long count = 0;
  for (int c = 0; c < x.channels(); ++c)
    for (int top = 0; top + 11 <= x.height(); ++top)
      for (int left = 0; left + 11 <= x.width(); ++left) {
        long double mx = 0, my = 0, vx = 0, vy = 0, cxy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            mx += k[i][j] / total * x.at(0, c, top + i, left + j);
            my += k[i][j] / total * y.at(0, c, top + i, left + j);
          }
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const long double dx = x.at(0, c, top + i, left + j) - mx, dy = y.at(0, c, top + i, left + j) - my;
            vx += k[i][j] / total * dx * dx;
            vy += k[i][j] / total * dy * dy;
            cxy += k[i][j] / total * dx * dy;
          }
        acc += (2 * mx * my + c1) / (mx * mx + my * my + c1) * (2 * cxy + c2) / (vx + vy + c2);
        ++count;
      }
  return acc / count;
}

void metrics(Outcome& o) {
  Tensor<float> ref({1, 3, 40, 36});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 36; ++x) ref.at(0, c, y, x) = float(0.5 + 0.35 * std::sin(0.27 * x + c) * std::cos(0.19 * y));
  Tensor<float> noisy = ref;
  Rng rng(404);
  std::normal_distribution<double> noise(0, 0.05);
  for (auto& v : noisy.span()) v = float(std::clamp(v + noise(rng), 0.0, 1.0));

  const Tensor<float> half({1, 3, 4, 4}, 0.5f), shifted({1, 3, 4, 4}, 0.6f);
  o.expect(psnr(ref, ref) == kPsnrCap && std::abs(psnr(half, shifted) - 20) < 1e-4 &&
               psnr(Tensor<float>({1, 3, 4, 4}, 0.f), Tensor<float>({1, 3, 4, 4}, 1.f)) == 0 &&
               psnr(ref, noisy) == psnr(noisy, ref),
           "psnr cap/20 dB/0 dB/symmetry");

  Tensor<float> bin({1, 3, 16, 16}), inv({1, 3, 16, 16});
  for (std::int64_t i = 0; i < bin.size(); ++i) {
    bin[i] = (rng() & 1) ? 1.f : 0.f;
    inv[i] = 1 - bin[i];
  }
  o.expect(ssim(ref, ref) == 1.0 && ssim(bin, inv) < 0 && std::abs(ssim(ref, noisy) - ssim(noisy, ref)) < 1e-12,
           "ssim self/anticorrelated/symmetry");
  const double err = std::abs(ssim(ref, noisy) - static_cast<double>(direct_ssim(ref, noisy)));
  o.expect(err < 1e-6, fmt("ssim vs direct summation %.1e", err));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nlf acceptance checks"};
  std::vector<std::string> only;
  fs::path work;
  bool keep = false;
  app.add_option("--only", only, "Run just these criteria");
  app.add_option("--workdir", work, "Scratch directory (default: a fresh temporary one)");
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  std::optional<test::TempDir> temp;
  if (work.empty() && keep) {
    work = fs::temp_directory_path() / ("nlf-acceptance-" + std::to_string(::getpid()));
  } else if (work.empty()) {
    temp.emplace("acceptance");
    work = temp->path();
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"encoding-arity", encoding_arity},
      {"architecture-shape", architecture_shape},
      {"parameter-counts", parameter_counts},
      {"compositing-oracle", compositing_oracle},
      {"gradient-suite", gradient_suite},
      {"determinism-persistence", [&](Outcome& o) { determinism(o, work); }},
      {"bench-trend", bench_trend},
      {"metrics", metrics},
      {"desk-distillation", [&](Outcome& o) { distillation(o, work); }},
  };

  int failed = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    ++ran;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("threw: ") + e.what());
    }
    std::printf("%s %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), seconds_since(t0),
                o.detail.str().c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  if (keep) std::printf("scratch kept at %s\n", work.c_str());
  return failed ? 1 : 0;
}
