// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nlf/image_io.hpp"

namespace nlf {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const Tensor<float>& a, const Tensor<float>& b, const char* what) {
  require_same_dims(a, b, what);
  if (a.rank() != 4) throw ShapeError(std::string(what) + ": expected [B,C,H,W], got " + to_string(a.dims()));
  if (!a.all_finite() || !b.all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite values");
}

std::array<double, kWin> gaussian_taps() {
  std::array<double, kWin> g{};
  double total = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Valid-region separable filter of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w, const std::array<double, kWin>& g) {
  const int oh = h - kWin + 1, ow = w - kWin + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const Tensor<float>& pred, const Tensor<float>& ref, PsnrOptions options) {
  require_same_dims(pred, ref, "psnr");
  if (pred.empty()) throw ShapeError("psnr: empty images");
  const Tensor<float> p = options.quantize8 ? quantize8(pred) : pred;
  const Tensor<float> r = options.quantize8 ? quantize8(ref) : ref;
  double se = 0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - r[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(p.size());
  if (!std::isfinite(mse)) throw std::invalid_argument("psnr: non-finite values");
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

SsimResult ssim_detail(const Tensor<float>& pred, const Tensor<float>& ref) {
  check_pair(pred, ref, "ssim");
  const int h = static_cast<int>(pred.height()), w = static_cast<int>(pred.width());
  if (h < kWin || w < kWin)
    throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                     std::to_string(kWin) + "x" + std::to_string(kWin) + " window");
  const auto g = gaussian_taps();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  double ssim_total = 0, cs_total = 0;
  std::int64_t planes = 0;
  for (std::int64_t b = 0; b < pred.batch(); ++b) {
    for (std::int64_t c = 0; c < pred.channels(); ++c, ++planes) {
      const float* pa = pred.data() + (b * pred.channels() + c) * static_cast<std::int64_t>(plane);
      const float* pb = ref.data() + (b * ref.channels() + c) * static_cast<std::int64_t>(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        x[i] = pa[i];
        y[i] = pb[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
      const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
      const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
      double s = 0, cs = 0;
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
        const double cs_i = (2 * cov + kC2) / (vx + vy + kC2);
        const double l_i = (2 * mx[i] * my[i] + kC1) / (mx[i] * mx[i] + my[i] * my[i] + kC1);
        s += l_i * cs_i;
        cs += cs_i;
      }
      ssim_total += s / static_cast<double>(mx.size());
      cs_total += cs / static_cast<double>(mx.size());
    }
  }
  return {ssim_total / static_cast<double>(planes), cs_total / static_cast<double>(planes)};
}

double ssim(const Tensor<float>& pred, const Tensor<float>& ref) { return ssim_detail(pred, ref).ssim; }

}  // namespace nlf
