// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <numbers>
#include <sstream>

#include "nlf/bench.hpp"
#include "nlf/cli.hpp"
#include "nlf/distill.hpp"
#include "nlf/image_io.hpp"
#include "nlf/weights.hpp"
#include "test_util.hpp"

using namespace nlf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run nlf_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// 16x16 teacher images over a 4x4 ray grid, matching the tiny preset's 4x.
void small_teacher(const fs::path& out, int n, const std::string& split = "pseudo", int seed = 0) {
  const auto r = nlf_cli({"teacher", "--scene", "sphere", "--n-images", std::to_string(n), "--resolution", "16",
                          "--sr-factor", "4", "--samples", "32", "--split", split, "--seed", std::to_string(seed),
                          "--out", out.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
}

std::vector<std::string> sorted_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("teacher writes a loadable dataset") {
    nlf::test::TempDir dir("cli-teacher");
    small_teacher(dir / "ds", 3);
    const auto ds = load_dataset(dir / "ds");
    CHECK(ds.size() == 3);
    CHECK(ds.hi.width == 16);
    CHECK(ds.lo.width == 4);
    CHECK(ds.sr_factor == 4);
    CHECK(ds.scene == "sphere");
  }

  TEST_CASE("teacher flag errors leave nothing behind") {
    nlf::test::TempDir dir("cli-teacher-bad");
    const fs::path out = dir / "ds";
    auto r = nlf_cli({"teacher", "--n-images", "0", "--out", out.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("n_images") != std::string::npos);
    CHECK_FALSE(fs::exists(out));

    r = nlf_cli({"teacher", "--resolution", "30", "--sr-factor", "4", "--out", out.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("30") != std::string::npos);
    CHECK(r.err.find("4") != std::string::npos);
    CHECK_FALSE(fs::exists(out));

    for (const std::vector<std::string>& bad :
         {std::vector<std::string>{"teacher", "--scene", "teapot", "--out", out.string()},
          {"teacher", "--near", "5", "--far", "3", "--out", out.string()},
          {"teacher", "--split", "validation", "--out", out.string()},
          {"teacher", "--n-images", "two", "--out", out.string()},
          {"teacher"}}) {
      CHECK(nlf_cli(bad).code == 2);
      CHECK_FALSE(fs::exists(out));
    }
    CHECK(nlf_cli({}).code == 2);
    CHECK(nlf_cli({"frobnicate"}).code == 2);
  }

  TEST_CASE("train smoke run, report schema and refused resumes") {
    nlf::test::TempDir dir("cli-train");
    small_teacher(dir / "ds", 2);
    small_teacher(dir / "test", 1, "real-test", 5);
    const fs::path run = dir / "run";
    auto r = nlf_cli({"train", "--data", (dir / "ds").string(), "--eval-data", (dir / "test").string(), "--preset",
                      "tiny", "--iterations", "4", "--batch-size", "2", "--checkpoint-every", "2", "--eval-every",
                      "4", "--out", run.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(run / "model.nlfw"));
    CHECK(fs::exists(run / "checkpoints" / "ckpt-00000004.json"));
    CHECK(fs::exists(run / "checkpoints" / "ckpt-00000002.nlfw"));

    const json report = json::parse(read_file(run / "report.json"));
    for (const char* key : {"stage", "data", "config_hash", "net", "train", "params", "start_iteration",
                            "iterations_run", "final_loss", "evals", "checkpoint", "weights", "wall_seconds"})
      CHECK_MESSAGE(report.contains(key), key);
    CHECK(report["stage"] == "pseudo");
    CHECK(report["iterations_run"] == 4);
    CHECK(report["params"] == count_params(build_model<float>(NetConfig::tiny())));
    CHECK(report["evals"].size() == 1);
    CHECK(report["evals"][0]["psnr"].get<double>() > 0);
    CHECK(std::isfinite(report["final_loss"].get<double>()));

    // Same config resumes; a different width has a different hash and is refused.
    const std::string ckpt = (run / "checkpoints" / "ckpt-00000002.json").string();
    r = nlf_cli({"train", "--data", (dir / "ds").string(), "--preset", "tiny", "--iterations", "4", "--batch-size",
                 "2", "--resume", ckpt, "--out", (dir / "resumed").string()});
    CHECK_MESSAGE(r.code == 0, r.err);
    CHECK(json::parse(read_file(dir / "resumed" / "report.json"))["start_iteration"] == 2);

    auto net = NetConfig::tiny();
    net.width = 16;
    write_file(dir / "cfg.json", json{{"net", net.to_json()}, {"train", {{"iterations", 4}}}}.dump());
    r = nlf_cli({"train", "--data", (dir / "ds").string(), "--config", (dir / "cfg.json").string(), "--resume", ckpt,
                 "--out", (dir / "foreign").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("config hash") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "foreign"));

    r = nlf_cli({"train", "--data", (dir / "ds").string(), "--preset", "tiny", "--seed", "99", "--resume", ckpt,
                 "--out", (dir / "reseeded").string()});
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(dir / "reseeded"));
  }

  TEST_CASE("train validates its inputs before writing") {
    nlf::test::TempDir dir("cli-train-bad");
    small_teacher(dir / "ds", 1);
    small_teacher(dir / "test", 1, "real-test");
    const fs::path out = dir / "out";
    auto r = nlf_cli({"train", "--data", (dir / "ds").string(), "--preset", "d60-sr3-8x", "--out", out.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("sr_factor 4") != std::string::npos);
    CHECK(r.err.find("8x") != std::string::npos);
    for (const std::vector<std::string>& bad :
         {std::vector<std::string>{"train", "--data", (dir / "test").string(), "--out", out.string()},
          {"train", "--data", (dir / "missing").string(), "--out", out.string()},
          {"train", "--data", (dir / "ds").string(), "--lr", "0", "--out", out.string()},
          {"train", "--data", (dir / "ds").string(), "--batch-size", "0", "--out", out.string()},
          {"train", "--data", (dir / "ds").string(), "--preset", "huge", "--out", out.string()},
          {"train", "--data", (dir / "ds").string(), "--stage", "warmup", "--out", out.string()},
          {"train", "--data", (dir / "ds").string(), "--resume", (dir / "none.json").string(), "--out", out.string()},
          {"train", "--data", (dir / "ds").string(), "--config", (dir / "none.json").string(), "--out",
           out.string()}}) {
      CHECK(nlf_cli(bad).code == 2);
      CHECK_FALSE(fs::exists(out));
    }
    write_file(dir / "typo.json", R"({"trian": {}})");
    r = nlf_cli({"train", "--data", (dir / "ds").string(), "--config", (dir / "typo.json").string(), "--out",
                 out.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("trian") != std::string::npos);
    CHECK_FALSE(fs::exists(out));
  }

  TEST_CASE("render orbit frames are deterministic; eval writes metrics") {
    nlf::test::TempDir dir("cli-render");
    auto m = build_model<float>(NetConfig::tiny(), 4);
    ModelCamera cam;
    cam.lo = {4, 4, default_focal(4)};
    cam.sr_factor = 4;
    save_weights(m, dir / "w.nlfw", {{"camera", cam.to_json()}});

    auto r = nlf_cli({"render", "--weights", (dir / "w.nlfw").string(), "--orbit", "8", "--out", (dir / "a").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto names = sorted_files(dir / "a");
    REQUIRE(names.size() == 8);
    CHECK(names.front() == "frame_0000.png");
    CHECK(names.back() == "frame_0007.png");
    CHECK(read_png(dir / "a" / "frame_0003.png").dims() == Dims{1, 3, 16, 16});
    REQUIRE(nlf_cli({"render", "--weights", (dir / "w.nlfw").string(), "--orbit", "8", "--out", (dir / "b").string()})
                .code == 0);
    for (const auto& n : names) CHECK(read_file(dir / "a" / n) == read_file(dir / "b" / n));

    const auto poses = orbit_trajectory(8, 30, 4);
    for (const auto& p : poses) {
      CHECK(p.origin().norm() == doctest::Approx(4.0).epsilon(1e-12));
      CHECK(p.origin().y() == doctest::Approx(4.0 * std::sin(30 * std::numbers::pi / 180)).epsilon(1e-12));
    }

    small_teacher(dir / "test", 2, "real-test");
    r = nlf_cli({"eval", "--weights", (dir / "w.nlfw").string(), "--data", (dir / "test").string(), "--out",
                 (dir / "metrics").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const json metrics = json::parse(read_file(dir / "metrics" / "metrics.json"));
    CHECK(metrics["count"] == 2);
    CHECK(metrics["per_image"].size() == 2);
    const std::string csv = read_file(dir / "metrics" / "metrics.csv");
    CHECK(csv.starts_with("image,psnr,ssim\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  }

  TEST_CASE("render rejects bad inputs without creating output") {
    nlf::test::TempDir dir("cli-render-bad");
    const fs::path out = dir / "out";
    auto r = nlf_cli({"render", "--weights", (dir / "missing.nlfw").string(), "--orbit", "2", "--out", out.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("does not exist") != std::string::npos);
    CHECK_FALSE(fs::exists(out));

    auto m = build_model<float>(NetConfig::tiny(), 4);
    save_weights(m, dir / "nocam.nlfw");
    CHECK(nlf_cli({"render", "--weights", (dir / "nocam.nlfw").string(), "--orbit", "2", "--out", out.string()}).code ==
          2);
    ModelCamera cam;
    cam.lo = {4, 4, default_focal(4)};
    cam.sr_factor = 4;
    save_weights(m, dir / "w.nlfw", {{"camera", cam.to_json()}});
    const std::string w = (dir / "w.nlfw").string();
    write_file(dir / "skew.json", json::array({{1, 0, 0, 0, 0, 2, 0, 0, 0, 0, 1, 4}}).dump());
    for (const std::vector<std::string>& bad :
         {std::vector<std::string>{"render", "--weights", w, "--out", out.string()},
          {"render", "--weights", w, "--orbit", "0", "--out", out.string()},
          {"render", "--weights", w, "--orbit", "2", "--pose-file", (dir / "skew.json").string(), "--out",
           out.string()},
          {"render", "--weights", w, "--pose-file", (dir / "skew.json").string(), "--out", out.string()}}) {
      CHECK(nlf_cli(bad).code == 2);
      CHECK_FALSE(fs::exists(out));
    }
  }

  TEST_CASE("pose files accept arrays, objects and manifests") {
    nlf::test::TempDir dir("cli-poses");
    const std::vector<double> p = {1, 0, 0, 0.5, 0, 1, 0, 0, 0, 0, 1, 4};
    write_file(dir / "a.json", json::array({p, p}).dump());
    write_file(dir / "b.json", json{{"poses", {p}}}.dump());
    CHECK(read_pose_file(dir / "a.json").size() == 2);
    CHECK(read_pose_file(dir / "b.json")[0].origin().x() == 0.5);
    small_teacher(dir / "ds", 2);
    CHECK(read_pose_file(dir / "ds" / "manifest.json").size() == 2);
    write_file(dir / "empty.json", "[]");
    CHECK_THROWS(read_pose_file(dir / "empty.json"));
    write_file(dir / "short.json", "[[1, 2, 3]]");
    CHECK_THROWS(read_pose_file(dir / "short.json"));
  }

  TEST_CASE("latency summary uses nearest-rank percentiles") {
    std::vector<double> s;
    for (int i = 20; i >= 1; --i) s.push_back(i);
    const auto st = summarize_latency(s);
    CHECK(st.mean_ms == doctest::Approx(10.5));
    CHECK(st.p50_ms == 10);  // ceil(0.50 * 20) = 10th smallest
    CHECK(st.p95_ms == 19);  // ceil(0.95 * 20) = 19th smallest
    CHECK(st.min_ms == 1);
    CHECK(st.max_ms == 20);
    CHECK(summarize_latency({3.0}).p95_ms == 3.0);
    CHECK_THROWS(summarize_latency({}));
    CHECK(st.to_json().contains("p95_ms"));
  }

  TEST_CASE("bench times exactly the requested iterations") {
    auto m = build_model<float>(NetConfig::tiny(), 0);
    m.mode = Mode::eval;
    const auto st = bench_forward(m, {.input_size = 4, .iters = 5, .warmup = 2});
    CHECK(st.samples_ms.size() == 5);
    CHECK(st.p50_ms <= st.p95_ms);
    CHECK_THROWS((BenchOptions{.input_size = 4, .iters = 0}.validate()));
    CHECK_THROWS((BenchOptions{.input_size = 0}.validate()));
    CHECK_THROWS((BenchOptions{.warmup = -1}.validate()));
  }

  TEST_CASE("bench command reports both variants per size") {
    nlf::test::TempDir dir("cli-bench");
    auto r = nlf_cli({"bench", "--preset", "tiny", "--input-size", "4,8", "--iters", "3", "--warmup", "1", "--json",
                      (dir / "b.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("folded") != std::string::npos);
    const json report = json::parse(read_file(dir / "b.json"));
    REQUIRE(report["results"].size() == 2);
    CHECK(report["results"][1]["output_size"] == 32);
    CHECK(report["params_folded"].get<std::int64_t>() < report["params"].get<std::int64_t>());
    for (const auto& row : report["results"])
      for (const char* v : {"unfolded", "folded"}) CHECK(row[v]["p50_ms"].get<double>() <= row[v]["p95_ms"].get<double>());

    r = nlf_cli({"bench", "--preset", "tiny", "--iters", "0", "--json", (dir / "c.json").string()});
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(dir / "c.json"));
    CHECK(nlf_cli({"bench", "--input-size", "8"}).code == 2);
    CHECK(nlf_cli({"bench", "--preset", "tiny", "--threads", "0"}).code == 2);
    CHECK(nlf_cli({"bench", "--preset", "tiny", "--weights", "x.nlfw"}).code == 2);
  }

  TEST_CASE("distill and serve validate flags before side effects") {
    nlf::test::TempDir dir("cli-distill-bad");
    const fs::path out = dir / "out";
    CHECK(nlf_cli({"distill", "--scene", "teapot", "--out", out.string()}).code == 2);
    CHECK(nlf_cli({"distill", "--n-pseudo", "0", "--out", out.string()}).code == 2);
    CHECK(nlf_cli({"distill", "--resolution", "30", "--out", out.string()}).code == 2);
    CHECK_FALSE(fs::exists(out));
    CHECK(nlf_cli({"serve", "--weights", (dir / "missing.nlfw").string()}).code == 2);
    CHECK(nlf_cli({"serve", "--weights", "x", "--port", "70000"}).code == 2);
  }

  TEST_CASE("help exits cleanly") {
    const auto r = nlf_cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("distill") != std::string::npos);
  }
}
