// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "nlf/metrics.hpp"
#include "test_util.hpp"

using namespace nlf;
using nlf::test::random_tensor;

namespace {

constexpr long double kC1 = 0.01L * 0.01L, kC2 = 0.03L * 0.03L;

struct WindowStats {
  long double mx, my, vx, vy, cxy;
};

// Direct 11x11 weighted sums with a 2-D Gaussian evaluated point by point.
WindowStats window_stats(const Tensor<float>& x, const Tensor<float>& y, int b, int c, int top, int left) {
  long double k[11][11], total = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      const long double r2 = (i - 5) * (i - 5) + (j - 5) * (j - 5);
      k[i][j] = std::exp(-r2 / (2 * 1.5L * 1.5L));
      total += k[i][j];
    }
  WindowStats s{0, 0, 0, 0, 0};
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      const long double w = k[i][j] / total;
      s.mx += w * x.at(b, c, top + i, left + j);
      s.my += w * y.at(b, c, top + i, left + j);
    }
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      const long double w = k[i][j] / total;
      const long double dx = x.at(b, c, top + i, left + j) - s.mx, dy = y.at(b, c, top + i, left + j) - s.my;
      s.vx += w * dx * dx;
      s.vy += w * dy * dy;
      s.cxy += w * dx * dy;
    }
  return s;
}

struct Reference {
  long double ssim = 0, cs = 0;
};

Reference reference_ssim(const Tensor<float>& x, const Tensor<float>& y) {
  Reference r;
  long double count = 0;
  for (int b = 0; b < x.batch(); ++b)
    for (int c = 0; c < x.channels(); ++c)
      for (int top = 0; top + 11 <= x.height(); ++top)
        for (int left = 0; left + 11 <= x.width(); ++left) {
          const auto s = window_stats(x, y, b, c, top, left);
          const long double l = (2 * s.mx * s.my + kC1) / (s.mx * s.mx + s.my * s.my + kC1);
          const long double cs = (2 * s.cxy + kC2) / (s.vx + s.vy + kC2);
          r.ssim += l * cs;
          r.cs += cs;
          count += 1;
        }
  r.ssim /= count;
  r.cs /= count;
  return r;
}

Tensor<float> add_noise(const Tensor<float>& x, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Tensor<float> y = x;
  for (auto& v : y.span()) v = static_cast<float>(std::clamp(v + n(rng), 0.0, 1.0));
  return y;
}

Tensor<float> smooth_image(int h, int w) {
  Tensor<float> img({1, 3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(0, c, y, x) = static_cast<float>(0.5 + 0.3 * std::sin(0.3 * x + c) * std::cos(0.2 * y - c));
  return img;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("psnr identities") {
    const auto x = random_tensor<float>({1, 3, 8, 8}, 1, 0, 1);
    CHECK(psnr(x, x) == kPsnrCap);
    Tensor<float> a({1, 3, 4, 4}, 0.5f), b({1, 3, 4, 4}, 0.6f);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
    CHECK(psnr(Tensor<float>({1, 3, 4, 4}, 0.0f), Tensor<float>({1, 3, 4, 4}, 1.0f)) == 0.0);
    const auto y = random_tensor<float>({1, 3, 8, 8}, 2, 0, 1);
    CHECK(psnr(x, y) == psnr(y, x));
    CHECK_THROWS_AS(psnr(x, Tensor<float>({1, 3, 8, 7})), ShapeError);
  }

  TEST_CASE("psnr falls as noise grows") {
    const auto x = smooth_image(32, 32);
    double prev = kPsnrCap + 1;
    for (double sigma : {0.01, 0.02, 0.05, 0.1, 0.2}) {
      const double p = psnr(add_noise(x, sigma, 7), x);
      CHECK(p < prev);
      prev = p;
    }
  }

  TEST_CASE("quantized psnr rounds both images first") {
    Tensor<float> a({1, 3, 2, 2}, 0.5f / 255), b({1, 3, 2, 2}, 0.9f / 255);
    CHECK(psnr(a, b, {.quantize8 = true}) == kPsnrCap);
    CHECK(psnr(a, b) < kPsnrCap);
  }

  TEST_CASE("ssim identities") {
    const auto x = smooth_image(24, 20);
    CHECK(ssim(x, x) == 1.0);
    Tensor<float> bin({1, 3, 16, 16});
    Rng rng(3);
    for (auto& v : bin.span()) v = (rng() & 1) ? 1.0f : 0.0f;
    Tensor<float> inv = bin;
    for (auto& v : inv.span()) v = 1 - v;
    CHECK(ssim(bin, inv) < 0);
    const auto y = add_noise(x, 0.1, 4);
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
    CHECK(ssim(x, y) < 1.0);
    CHECK_THROWS(ssim(Tensor<float>({1, 3, 10, 32}), Tensor<float>({1, 3, 10, 32})));
    CHECK_THROWS_AS(ssim(x, Tensor<float>({1, 3, 24, 21})), ShapeError);
  }

  TEST_CASE("ssim agrees with a direct-convolution implementation") {
    const auto x = smooth_image(32, 28);
    const auto y = add_noise(x, 0.05, 2026);
    const auto ref = reference_ssim(x, y);
    const auto got = ssim_detail(x, y);
    CHECK(std::abs(got.ssim - static_cast<double>(ref.ssim)) < 1e-6);
    CHECK(std::abs(got.contrast_structure - static_cast<double>(ref.cs)) < 1e-6);
    // Batched input averages over the batch as well.
    const auto r1 = random_tensor<float>({2, 3, 16, 16}, 5, 0, 1), r2 = random_tensor<float>({2, 3, 16, 16}, 6, 0, 1);
    const auto refb = reference_ssim(r1, r2);
    CHECK(std::abs(ssim(r1, r2) - static_cast<double>(refb.ssim)) < 1e-6);
  }

  TEST_CASE("a shared offset leaves contrast-structure unchanged and moves SSIM only through luminance") {
    const auto x = smooth_image(32, 32);
    const auto y = add_noise(x, 0.05, 8);
    for (float c : {-0.1f, 0.05f, 0.1f}) {
      Tensor<float> xs = x, ys = y;
      for (auto& v : xs.span()) v += c;
      for (auto& v : ys.span()) v += c;
      const auto before = ssim_detail(x, y), after = ssim_detail(xs, ys);
      CHECK(std::abs(before.contrast_structure - after.contrast_structure) < 1e-6);
      // |l' - l| per window is (mx - my)^2 |1/D - 1/D'|; the mean SSIM moves by
      // at most the largest such change since |cs| <= 1.
      long double bound = 0;
      for (int ch = 0; ch < 3; ++ch)
        for (int top = 0; top + 11 <= 32; ++top)
          for (int left = 0; left + 11 <= 32; ++left) {
            const auto s = window_stats(x, y, 0, ch, top, left);
            const long double d0 = s.mx * s.mx + s.my * s.my + kC1;
            const long double d1 = (s.mx + c) * (s.mx + c) + (s.my + c) * (s.my + c) + kC1;
            bound = std::max(bound, (s.mx - s.my) * (s.mx - s.my) * std::abs(1 / d0 - 1 / d1));
          }
      CHECK(std::abs(before.ssim - after.ssim) <= static_cast<double>(bound) + 1e-7);
    }
  }
}
