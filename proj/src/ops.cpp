// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/ops.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace nlf {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
void require_rank4(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4) throw ShapeError(std::string(what) + ": expected rank-4 input, got " +
                                      to_string(t.dims()));
}

void check_transpose_config(std::int64_t k, int stride, int padding) {
  const bool ok = (k == 4 && stride == 2 && padding == 1) || (k == 3 && stride == 3 && padding == 0);
  if (!ok)
    throw std::invalid_argument("conv_transpose2d: unsupported (kernel, stride, padding) = (" +
                                std::to_string(k) + ", " + std::to_string(stride) + ", " +
                                std::to_string(padding) + "); expected (4,2,1) or (3,3,0)");
}

// Input columns [first, last) whose transposed-conv tap `kx` lands inside the output.
std::pair<std::int64_t, std::int64_t> valid_range(std::int64_t in, std::int64_t out, int stride,
                                                  int padding, std::int64_t kx) {
  std::int64_t first = 0, last = in;
  while (first < in && first * stride - padding + kx < 0) ++first;
  while (last > first && (last - 1) * stride - padding + kx >= out) --last;
  return {first, last};
}

}  // namespace

// ---------------------------------------------------------------------------
// conv1x1: out_b[Cout, HW] = W[Cout, Cin] * in_b[Cin, HW] + bias

template <typename T>
Var<T> conv1x1(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  const auto& x = input.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  require_rank4(x, "conv1x1");
  if (w.rank() != 2 || w.dim(1) != x.channels())
    throw ShapeError("conv1x1: weight " + to_string(w.dims()) + " does not match input " +
                     to_string(x.dims()) + " (expected [Cout, " + std::to_string(x.channels()) + "])");
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw ShapeError("conv1x1: bias " + to_string(b.dims()) + " does not match weight " +
                     to_string(w.dims()));

  const std::int64_t batch = x.batch(), cin = x.channels(), cout = w.dim(0);
  const std::int64_t hw = x.height() * x.width();
  Tensor<T> out({batch, cout, x.height(), x.width()});
  ConstMatMap<T> wm(w.data(), cout, cin);
  for (std::int64_t n = 0; n < batch; ++n) {
    ConstMatMap<T> in(x.data() + n * cin * hw, cin, hw);
    MatMap<T> o(out.data() + n * cout * hw, cout, hw);
    o.noalias() = wm * in;
    for (std::int64_t c = 0; c < cout; ++c) o.row(c).array() += b[c];
  }

  return make_result<T>(std::move(out), {input, weight, bias}, [=](Node<T>& self) {
    const auto& g = self.grad;
    auto& in_node = *self.parents[0];
    auto& w_node = *self.parents[1];
    auto& b_node = *self.parents[2];
    const auto& xv = in_node.value;
    ConstMatMap<T> wmat(w_node.value.data(), cout, cin);
    for (std::int64_t n = 0; n < batch; ++n) {
      ConstMatMap<T> gn(g.data() + n * cout * hw, cout, hw);
      if (in_node.requires_grad) {
        MatMap<T> gi(in_node.grad_buffer().data() + n * cin * hw, cin, hw);
        gi.noalias() += wmat.transpose() * gn;
      }
      if (w_node.requires_grad) {
        ConstMatMap<T> in(xv.data() + n * cin * hw, cin, hw);
        MatMap<T> gw(w_node.grad_buffer().data(), cout, cin);
        gw.noalias() += gn * in.transpose();
      }
      if (b_node.requires_grad) {
        auto& gb = b_node.grad_buffer();
        for (std::int64_t c = 0; c < cout; ++c) gb[c] += gn.row(c).sum();
      }
    }
  });
}

// ---------------------------------------------------------------------------
// conv_transpose2d via GEMM + col2im scatter.
//   cols[(o,ky,kx), (h,w)] = sum_i W[i,(o,ky,kx)] * in[i,(h,w)]
//   out[o, h*s - p + ky, w*s - p + kx] += cols[...]

template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
                        int stride, int padding) {
  const auto& x = input.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  require_rank4(x, "conv_transpose2d");
  if (w.rank() != 4 || w.dim(0) != x.channels() || w.dim(2) != w.dim(3))
    throw ShapeError("conv_transpose2d: weight " + to_string(w.dims()) +
                     " does not match input " + to_string(x.dims()) + " (expected [" +
                     std::to_string(x.channels()) + ", Cout, k, k])");
  const std::int64_t k = w.dim(2);
  check_transpose_config(k, stride, padding);
  if (b.rank() != 1 || b.dim(0) != w.dim(1))
    throw ShapeError("conv_transpose2d: bias " + to_string(b.dims()) + " does not match weight " +
                     to_string(w.dims()));

  const std::int64_t batch = x.batch(), cin = x.channels(), cout = w.dim(1);
  const std::int64_t ih = x.height(), iw = x.width();
  const std::int64_t oh = transposed_extent(ih, static_cast<int>(k), stride, padding);
  const std::int64_t ow = transposed_extent(iw, static_cast<int>(k), stride, padding);
  const std::int64_t ihw = ih * iw, ohw = oh * ow, rows = cout * k * k;

  Tensor<T> out({batch, cout, oh, ow});
  ConstMatMap<T> wm(w.data(), cin, rows);
  RowMat<T> cols(rows, ihw);
  for (std::int64_t n = 0; n < batch; ++n) {
    ConstMatMap<T> in(x.data() + n * cin * ihw, cin, ihw);
    cols.noalias() = wm.transpose() * in;
    T* o = out.data() + n * cout * ohw;
    for (std::int64_t oc = 0; oc < cout; ++oc) {
      T* plane = o + oc * ohw;
      for (std::int64_t i = 0; i < ohw; ++i) plane[i] = b[oc];
      for (std::int64_t ky = 0; ky < k; ++ky) {
        for (std::int64_t kx = 0; kx < k; ++kx) {
          const T* src = cols.data() + ((oc * k + ky) * k + kx) * ihw;
          const auto [w0, w1] = valid_range(iw, ow, stride, padding, kx);
          for (std::int64_t h = 0; h < ih; ++h) {
            const std::int64_t y = h * stride - padding + ky;
            if (y < 0 || y >= oh) continue;
            T* dst = plane + y * ow - padding + kx;
            const T* s = src + h * iw;
            for (std::int64_t ww = w0; ww < w1; ++ww) dst[ww * stride] += s[ww];
          }
        }
      }
    }
  }

  return make_result<T>(std::move(out), {input, weight, bias}, [=](Node<T>& self) {
    const auto& g = self.grad;
    auto& in_node = *self.parents[0];
    auto& w_node = *self.parents[1];
    auto& b_node = *self.parents[2];
    ConstMatMap<T> wmat(w_node.value.data(), cin, rows);
    RowMat<T> gcols(rows, ihw);
    for (std::int64_t n = 0; n < batch; ++n) {
      const T* gn = g.data() + n * cout * ohw;
      // im2col gather of the output gradient.
      for (std::int64_t oc = 0; oc < cout; ++oc) {
        const T* plane = gn + oc * ohw;
        for (std::int64_t ky = 0; ky < k; ++ky) {
          for (std::int64_t kx = 0; kx < k; ++kx) {
            T* dst = gcols.data() + ((oc * k + ky) * k + kx) * ihw;
            const auto [w0, w1] = valid_range(iw, ow, stride, padding, kx);
            for (std::int64_t h = 0; h < ih; ++h) {
              const std::int64_t y = h * stride - padding + ky;
              T* d = dst + h * iw;
              if (y < 0 || y >= oh) {
                std::fill(d, d + iw, T(0));
                continue;
              }
              const T* src = plane + y * ow - padding + kx;
              std::fill(d, d + w0, T(0));
              for (std::int64_t ww = w0; ww < w1; ++ww) d[ww] = src[ww * stride];
              std::fill(d + w1, d + iw, T(0));
            }
          }
        }
      }
      if (in_node.requires_grad) {
        MatMap<T> gi(in_node.grad_buffer().data() + n * cin * ihw, cin, ihw);
        gi.noalias() += wmat * gcols;
      }
      if (w_node.requires_grad) {
        ConstMatMap<T> in(in_node.value.data() + n * cin * ihw, cin, ihw);
        MatMap<T> gw(w_node.grad_buffer().data(), cin, rows);
        gw.noalias() += in * gcols.transpose();
      }
      if (b_node.requires_grad) {
        auto& gb = b_node.grad_buffer();
        for (std::int64_t oc = 0; oc < cout; ++oc) {
          const T* plane = gn + oc * ohw;
          T acc = 0;
          for (std::int64_t i = 0; i < ohw; ++i) acc += plane[i];
          gb[oc] += acc;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// batchnorm2d

template <typename T>
BatchNormStats<T> BatchNormStats<T>::initialized(std::int64_t channels) {
  BatchNormStats s;
  s.running_mean = Tensor<T>({channels}, T(0));
  s.running_var = Tensor<T>({channels}, T(1));
  return s;
}

template <typename T>
bool BatchNormStats<T>::ready(std::int64_t channels) const {
  return running_mean.rank() == 1 && running_var.rank() == 1 &&
         running_mean.dim(0) == channels && running_var.dim(0) == channels;
}

template <typename T>
Var<T> batchnorm2d(const Var<T>& input, const Var<T>& scale, const Var<T>& shift,
                   BatchNormStats<T>& stats, Mode mode) {
  const auto& x = input.value();
  require_rank4(x, "batchnorm2d");
  const std::int64_t batch = x.batch(), ch = x.channels(), hw = x.height() * x.width();
  if (scale.value().dims() != Dims{ch} || shift.value().dims() != Dims{ch})
    throw ShapeError("batchnorm2d: scale/shift " + to_string(scale.value().dims()) + "/" +
                     to_string(shift.value().dims()) + " do not match " + std::to_string(ch) +
                     " channels");
  if (!(stats.eps > T(0))) throw std::invalid_argument("batchnorm2d: eps must be positive");
  if (mode == Mode::eval && !stats.ready(ch))
    throw std::logic_error("batchnorm2d: eval mode requires initialised running statistics");

  const std::int64_t count = batch * hw;
  auto plane = [hw, ch](const T* base, std::int64_t n, std::int64_t c) {
    return ConstArrMap<T>(base + (n * ch + c) * hw, hw);
  };
  Tensor<T> mean({ch}), inv_std({ch});
  if (mode == Mode::train) {
    if (count < 1) throw ShapeError("batchnorm2d: empty batch");
    if (!stats.ready(ch)) {
      auto fresh = BatchNormStats<T>::initialized(ch);
      stats.running_mean = std::move(fresh.running_mean);
      stats.running_var = std::move(fresh.running_var);
    }
    for (std::int64_t c = 0; c < ch; ++c) {
      T s = 0;
      for (std::int64_t n = 0; n < batch; ++n) s += plane(x.data(), n, c).sum();
      const T mu = s / static_cast<T>(count);
      T sq = 0;
      for (std::int64_t n = 0; n < batch; ++n) sq += (plane(x.data(), n, c) - mu).square().sum();
      const T var = sq / static_cast<T>(count);
      mean[c] = mu;
      inv_std[c] = T(1) / std::sqrt(var + stats.eps);
      const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
      const T m = stats.momentum;
      stats.running_mean[c] = (T(1) - m) * stats.running_mean[c] + m * mu;
      stats.running_var[c] = (T(1) - m) * stats.running_var[c] + m * unbiased;
    }
  } else {
    for (std::int64_t c = 0; c < ch; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }

  const auto& g = scale.value();
  const auto& bt = shift.value();
  Tensor<T> out(x.dims());
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t c = 0; c < ch; ++c) {
      const T a = g[c] * inv_std[c];
      const T off = bt[c] - mean[c] * a;
      ArrMap<T>(out.data() + (n * ch + c) * hw, hw) = plane(x.data(), n, c) * a + off;
    }
  }

  const bool train = mode == Mode::train;
  return make_result<T>(std::move(out), {input, scale, shift},
                        [=, mean = std::move(mean), inv_std = std::move(inv_std)](Node<T>& self) {
    const auto& gy = self.grad;
    auto& in_node = *self.parents[0];
    auto& s_node = *self.parents[1];
    auto& b_node = *self.parents[2];
    const auto& xv = in_node.value;
    const auto& gamma = s_node.value;
    for (std::int64_t c = 0; c < ch; ++c) {
      const T mu = mean[c], is = inv_std[c];
      T sum_g = 0, sum_gx = 0;
      for (std::int64_t n = 0; n < batch; ++n) {
        auto d = plane(gy.data(), n, c);
        sum_g += d.sum();
        sum_gx += (d * (plane(xv.data(), n, c) - mu)).sum() * is;
      }
      if (s_node.requires_grad) s_node.grad_buffer()[c] += sum_gx;
      if (b_node.requires_grad) b_node.grad_buffer()[c] += sum_g;
      if (!in_node.requires_grad) continue;
      T* gi = in_node.grad_buffer().data();
      const T a = gamma[c] * is;
      const T mg = train ? sum_g / static_cast<T>(count) : T(0);
      const T mgx = train ? sum_gx / static_cast<T>(count) : T(0);
      for (std::int64_t n = 0; n < batch; ++n) {
        ArrMap<T> o(gi + (n * ch + c) * hw, hw);
        if (train)
          o += a * (plane(gy.data(), n, c) - mg - (plane(xv.data(), n, c) - mu) * (is * mgx));
        else
          o += a * plane(gy.data(), n, c);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T>
Var<T> gelu(const Var<T>& input) {
  const auto& x = input.value();
  const std::int64_t n = x.size();
  Tensor<T> out(x.dims()), cdf(x.dims());
  ConstArrMap<T> xv(x.data(), n);
  ArrMap<T> phi(cdf.data(), n);
  phi = T(0.5) * (T(1) + (xv * (T(1) / std::numbers::sqrt2_v<T>)).erf());
  ArrMap<T>(out.data(), n) = xv * phi;
  return make_result<T>(std::move(out), {input}, [n, cdf = std::move(cdf)](Node<T>& self) {
    auto& in_node = *self.parents[0];
    ConstArrMap<T> xv(in_node.value.data(), n);
    ConstArrMap<T> phi(cdf.data(), n);
    ConstArrMap<T> gy(self.grad.data(), n);
    const T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    ArrMap<T>(in_node.grad_buffer().data(), n) +=
        gy * (phi + xv * inv_sqrt2pi * (T(-0.5) * xv.square()).exp());
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& input) {
  const auto& x = input.value();
  const std::int64_t n = x.size();
  Tensor<T> out(x.dims());
  ArrMap<T>(out.data(), n) = ConstArrMap<T>(x.data(), n).logistic();
  return make_result<T>(std::move(out), {input}, [n](Node<T>& self) {
    ConstArrMap<T> y(self.value.data(), n);
    ArrMap<T>(self.parents[0]->grad_buffer().data(), n) +=
        ConstArrMap<T>(self.grad.data(), n) * y * (T(1) - y);
  });
}

template <typename T>
Var<T> residual_add(const Var<T>& a, const Var<T>& b) {
  require_same_dims(a.value(), b.value(), "residual_add");
  const std::int64_t n = a.value().size();
  Tensor<T> out(a.value().dims());
  ArrMap<T>(out.data(), n) = ConstArrMap<T>(a.value().data(), n) + ConstArrMap<T>(b.value().data(), n);
  return make_result<T>(std::move(out), {a, b}, [n](Node<T>& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      ArrMap<T>(parent->grad_buffer().data(), n) += ConstArrMap<T>(self.grad.data(), n);
    }
  });
}

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  require_same_dims(pred.value(), target.value(), "mse_loss");
  const auto& p = pred.value();
  const auto& t = target.value();
  const std::int64_t n = p.size();
  if (n == 0) throw ShapeError("mse_loss: empty tensors");
  double acc = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += d * d;
  }
  Tensor<T> out({1}, static_cast<T>(acc / static_cast<double>(n)));
  return make_result<T>(std::move(out), {pred, target}, [n](Node<T>& self) {
    const T g = self.grad[0] * T(2) / static_cast<T>(n);
    auto& pn = *self.parents[0];
    auto& tn = *self.parents[1];
    for (int side = 0; side < 2; ++side) {
      auto& node = side == 0 ? pn : tn;
      if (!node.requires_grad) continue;
      auto& gb = node.grad_buffer();
      const T sign = side == 0 ? T(1) : T(-1);
      for (std::int64_t i = 0; i < n; ++i) gb[i] += sign * g * (pn.value[i] - tn.value[i]);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
  double acc = 0;
  for (auto v : input.value().span()) acc += v;
  Tensor<T> out({1}, static_cast<T>(acc));
  return make_result<T>(std::move(out), {input}, [](Node<T>& self) {
    auto& gi = self.parents[0]->grad_buffer();
    for (std::int64_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[0];
  });
}

#define NLF_INSTANTIATE_OPS(T)                                                                  \
  template Var<T> conv1x1(const Var<T>&, const Var<T>&, const Var<T>&);                          \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);       \
  template struct BatchNormStats<T>;                                                             \
  template Var<T> batchnorm2d(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>&,   \
                              Mode);                                                             \
  template Var<T> gelu(const Var<T>&);                                                           \
  template Var<T> sigmoid(const Var<T>&);                                                        \
  template Var<T> residual_add(const Var<T>&, const Var<T>&);                                    \
  template Var<T> mse_loss(const Var<T>&, const Var<T>&);                                        \
  template Var<T> sum(const Var<T>&);

NLF_INSTANTIATE_OPS(float)
NLF_INSTANTIATE_OPS(double)

}  // namespace nlf
