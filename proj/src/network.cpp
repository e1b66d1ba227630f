// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/network.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "nlf/random.hpp"

namespace nlf {

// ---------------------------------------------------------------------------
// NetConfig

int NetConfig::upsample_factor() const {
  int f = 1;
  for (const auto& s : sr_plan) f *= s.factor;
  return f;
}

void NetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("net config: " + msg); };
  if (K < 1) fail("K must be >= 1");
  if (L < 0) fail("L must be >= 0");
  if (width < 1) fail("width must be >= 1");
  if (n_res_blocks < 0) fail("n_res_blocks must be >= 0");
  if (rb_per_sr < 1) fail("rb_per_sr must be >= 1");
  for (std::size_t i = 0; i < sr_plan.size(); ++i) {
    if (sr_plan[i].factor != 2 && sr_plan[i].factor != 3)
      fail("SR stage " + std::to_string(i) + " factor must be 2 or 3, got " +
           std::to_string(sr_plan[i].factor));
    if (sr_plan[i].out_channels < 1)
      fail("SR stage " + std::to_string(i) + " needs >= 1 output channels");
  }
}

NetConfig NetConfig::d60_sr3_8x() { return NetConfig{}; }

NetConfig NetConfig::d60_sr3_12x() {
  NetConfig c;
  c.sr_plan = {{2, 64}, {2, 64}, {3, 16}};
  return c;
}

NetConfig NetConfig::tiny() {
  NetConfig c;
  c.width = 32;
  c.n_res_blocks = 4;
  c.sr_plan = {{2, 32}, {2, 16}};
  return c;
}

NetConfig NetConfig::preset(const std::string& name) {
  if (name == "d60-sr3-8x") return d60_sr3_8x();
  if (name == "d60-sr3-12x") return d60_sr3_12x();
  if (name == "tiny") return tiny();
  throw std::invalid_argument("unknown preset '" + name +
                              "' (expected d60-sr3-8x, d60-sr3-12x or tiny)");
}

nlohmann::json NetConfig::to_json() const {
  nlohmann::json plan = nlohmann::json::array();
  for (const auto& s : sr_plan) plan.push_back({{"factor", s.factor}, {"out_channels", s.out_channels}});
  return {{"K", K},
          {"L", L},
          {"in_channels", in_channels()},
          {"encoding_order", "point-major,coordinate-minor,(raw,sin,cos)"},
          {"width", width},
          {"n_res_blocks", n_res_blocks},
          {"sr_plan", plan},
          {"rb_per_sr", rb_per_sr},
          {"use_norm", use_norm},
          {"use_activation", use_activation}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
  NetConfig c;
  c.K = j.at("K").get<int>();
  c.L = j.at("L").get<int>();
  c.width = j.at("width").get<int>();
  c.n_res_blocks = j.at("n_res_blocks").get<int>();
  c.sr_plan.clear();
  for (const auto& s : j.at("sr_plan"))
    c.sr_plan.push_back({s.at("factor").get<int>(), s.at("out_channels").get<int>()});
  c.rb_per_sr = j.value("rb_per_sr", 2);
  c.use_norm = j.value("use_norm", true);
  c.use_activation = j.value("use_activation", true);
  if (j.contains("in_channels") && j.at("in_channels").get<int>() != c.in_channels())
    throw std::invalid_argument("net config: in_channels " + j.at("in_channels").dump() +
                                " disagrees with 3K(2L+1) = " + std::to_string(c.in_channels()));
  c.validate();
  return c;
}

std::uint64_t config_hash(const NetConfig& config) {
  const std::string text = config.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash_hex(const NetConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(config)));
  return buf;
}

// ---------------------------------------------------------------------------
// ConvUnit

template <typename T>
Var<T> ConvUnit<T>::forward(const Var<T>& x, Mode mode) {
  Var<T> y = transposed ? conv_transpose2d(x, weight, bias, stride, padding)
                        : conv1x1(x, weight, bias);
  if (has_norm) y = batchnorm2d(y, bn_scale, bn_shift, stats, mode);
  if (activation) y = gelu(y);
  return y;
}

template <typename T>
std::int64_t ConvUnit<T>::out_channels() const {
  return transposed ? weight.value().dim(1) : weight.value().dim(0);
}

namespace {

template <typename T>
ConvUnit<T> make_pointwise(const std::string& name, int cin, int cout, bool norm, bool act,
                           Rng& rng) {
  ConvUnit<T> u;
  const double bound = std::sqrt(6.0 / cin);
  Tensor<T> w({cout, cin});
  for (auto& v : w.span()) v = static_cast<T>((2 * uniform01(rng) - 1) * bound);
  u.weight = Var<T>::parameter(std::move(w), name + ".weight");
  u.bias = Var<T>::parameter(Tensor<T>({cout}), name + ".bias");
  u.has_norm = norm;
  if (norm) {
    u.bn_scale = Var<T>::parameter(Tensor<T>({cout}, T(1)), name + ".bn.scale");
    u.bn_shift = Var<T>::parameter(Tensor<T>({cout}), name + ".bn.shift");
    u.stats = BatchNormStats<T>::initialized(cout);
  }
  u.activation = act;
  return u;
}

template <typename T>
ConvUnit<T> make_transposed(const std::string& name, int cin, int cout, int factor, bool norm,
                            bool act, Rng& rng) {
  ConvUnit<T> u;
  u.transposed = true;
  const int k = factor == 2 ? 4 : 3;
  u.stride = factor;
  u.padding = factor == 2 ? 1 : 0;
  // Each output pixel receives cin * (k / stride)^2 contributions.
  const double per_axis = static_cast<double>(k) / factor;
  const double bound = std::sqrt(6.0 / (cin * per_axis * per_axis));
  Tensor<T> w({cin, cout, k, k});
  for (auto& v : w.span()) v = static_cast<T>((2 * uniform01(rng) - 1) * bound);
  u.weight = Var<T>::parameter(std::move(w), name + ".weight");
  u.bias = Var<T>::parameter(Tensor<T>({cout}), name + ".bias");
  u.has_norm = norm;
  if (norm) {
    u.bn_scale = Var<T>::parameter(Tensor<T>({cout}, T(1)), name + ".bn.scale");
    u.bn_shift = Var<T>::parameter(Tensor<T>({cout}), name + ".bn.shift");
    u.stats = BatchNormStats<T>::initialized(cout);
  }
  u.activation = act;
  return u;
}

template <typename T>
ResBlock<T> make_block(const std::string& name, int channels, const NetConfig& c, Rng& rng) {
  return {make_pointwise<T>(name + ".conv1", channels, channels, c.use_norm, c.use_activation, rng),
          make_pointwise<T>(name + ".conv2", channels, channels, c.use_norm, c.use_activation, rng)};
}

template <typename T>
Var<T> run_block(ResBlock<T>& b, const Var<T>& x, Mode mode) {
  return residual_add(x, b.conv2.forward(b.conv1.forward(x, mode), mode));
}

template <typename T>
ConvUnit<T> copy_unit(const ConvUnit<T>& u) {
  ConvUnit<T> c = u;
  auto dup = [](const Var<T>& v) {
    return v.defined() ? Var<T>::parameter(v.value(), v.name()) : Var<T>();
  };
  c.weight = dup(u.weight);
  c.bias = dup(u.bias);
  c.bn_scale = dup(u.bn_scale);
  c.bn_shift = dup(u.bn_shift);
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

template <typename T>
Model<T> build_model(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, {0x6e6c66}));
  Model<T> m;
  m.config = config;
  const bool norm = config.use_norm, act = config.use_activation;
  m.stem = make_pointwise<T>("stem", config.in_channels(), config.width, norm, act, rng);
  for (int i = 0; i < config.n_res_blocks; ++i)
    m.backbone.push_back(make_block<T>("backbone." + std::to_string(i), config.width, config, rng));
  m.tail = make_pointwise<T>("tail", config.width, config.width, norm, act, rng);
  int channels = config.width;
  for (std::size_t s = 0; s < config.sr_plan.size(); ++s) {
    const auto& plan = config.sr_plan[s];
    const std::string name = "sr." + std::to_string(s);
    SrStage<T> stage;
    stage.factor = plan.factor;
    stage.up = make_transposed<T>(name + ".up", channels, plan.out_channels, plan.factor, norm, act, rng);
    stage.first = make_block<T>(name + ".block0", plan.out_channels, config, rng);
    for (int b = 1; b < config.rb_per_sr; ++b)
      stage.extra.push_back(make_block<T>(name + ".block" + std::to_string(b), plan.out_channels, config, rng));
    m.sr.push_back(std::move(stage));
    channels = plan.out_channels;
  }
  m.head = make_pointwise<T>("head", channels, 3, false, false, rng);

  // Structural channel chain check.
  std::int64_t chain = m.tail.out_channels();
  for (const auto& st : m.sr) {
    if (st.up.weight.value().dim(0) != chain)
      throw std::logic_error("build_model: SR stage input channels break the channel chain");
    chain = st.up.out_channels();
  }
  if (m.head.weight.value().dim(1) != chain)
    throw std::logic_error("build_model: head input channels break the channel chain");
  return m;
}

template <typename T>
Var<T> Model<T>::forward(const Var<T>& input, Mode run_mode) {
  const auto& x = input.value();
  if (x.rank() != 4 || x.channels() != config.in_channels())
    throw ShapeError("model: expected input [B, " + std::to_string(config.in_channels()) +
                     ", H, W], got " + to_string(x.dims()));
  if (folded && run_mode == Mode::train)
    throw std::logic_error("model: a batch-norm-folded model can only run in eval mode");
  Var<T> h = stem.forward(input, run_mode);
  for (auto& b : backbone) h = run_block(b, h, run_mode);
  h = tail.forward(h, run_mode);
  for (auto& st : sr) {
    Var<T> u = st.up.forward(h, run_mode);
    h = run_block(st.first, u, run_mode);
    for (auto& b : st.extra) h = run_block(b, h, run_mode);
  }
  return sigmoid(head.forward(h, run_mode));
}

template <typename T>
Tensor<T> Model<T>::infer(const Tensor<T>& input) {
  NoGradGuard guard;
  return forward(Var<T>::constant(input), Mode::eval).value();
}

template <typename T>
void Model<T>::for_each_unit(const std::function<void(const std::string&, ConvUnit<T>&)>& fn) {
  fn("stem", stem);
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    const std::string n = "backbone." + std::to_string(i);
    fn(n + ".conv1", backbone[i].conv1);
    fn(n + ".conv2", backbone[i].conv2);
  }
  fn("tail", tail);
  for (std::size_t s = 0; s < sr.size(); ++s) {
    const std::string n = "sr." + std::to_string(s);
    fn(n + ".up", sr[s].up);
    fn(n + ".block0.conv1", sr[s].first.conv1);
    fn(n + ".block0.conv2", sr[s].first.conv2);
    for (std::size_t b = 0; b < sr[s].extra.size(); ++b) {
      const std::string bn = n + ".block" + std::to_string(b + 1);
      fn(bn + ".conv1", sr[s].extra[b].conv1);
      fn(bn + ".conv2", sr[s].extra[b].conv2);
    }
  }
  fn("head", head);
}

template <typename T>
void Model<T>::for_each_unit(
    const std::function<void(const std::string&, const ConvUnit<T>&)>& fn) const {
  const_cast<Model*>(this)->for_each_unit(
      [&](const std::string& n, ConvUnit<T>& u) { fn(n, u); });
}

template <typename T>
std::vector<Var<T>> Model<T>::parameters() {
  std::vector<Var<T>> out;
  for_each_unit([&](const std::string&, ConvUnit<T>& u) {
    out.push_back(u.weight);
    out.push_back(u.bias);
    if (u.has_norm) {
      out.push_back(u.bn_scale);
      out.push_back(u.bn_shift);
    }
  });
  return out;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

template <typename T>
std::int64_t count_params(const Model<T>& model) {
  std::int64_t n = 0;
  model.for_each_unit([&](const std::string&, const ConvUnit<T>& u) {
    n += u.weight.value().size() + u.bias.value().size();
    if (u.has_norm) n += u.bn_scale.value().size() + u.bn_shift.value().size();
  });
  return n;
}

template <typename T>
std::int64_t count_norm_params(const Model<T>& model) {
  std::int64_t n = 0;
  model.for_each_unit([&](const std::string&, const ConvUnit<T>& u) {
    if (u.has_norm) n += u.bn_scale.value().size() + u.bn_shift.value().size();
  });
  return n;
}

template <typename T>
Model<T> clone(const Model<T>& model) {
  Model<T> out = model;
  out.for_each_unit([](const std::string&, ConvUnit<T>& u) { u = copy_unit(u); });
  return out;
}

template <typename T>
Model<T> fold_batchnorm(const Model<T>& model) {
  if (model.folded) throw std::logic_error("fold_batchnorm: model is already folded");
  if (model.mode != Mode::eval)
    throw std::logic_error("fold_batchnorm: model must be in eval mode");
  Model<T> out = clone(model);
  out.folded = true;
  out.for_each_unit([](const std::string&, ConvUnit<T>& u) {
    if (!u.has_norm) return;
    const std::int64_t cout = u.out_channels();
    if (!u.stats.ready(cout))
      throw std::logic_error("fold_batchnorm: running statistics are not initialised");
    std::vector<double> a(static_cast<std::size_t>(cout)), off(static_cast<std::size_t>(cout));
    for (std::int64_t c = 0; c < cout; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(u.stats.running_var[c]) +
                                         static_cast<double>(u.stats.eps));
      a[c] = u.bn_scale.value()[c] * inv;
      off[c] = u.bn_shift.value()[c] - u.stats.running_mean[c] * a[c];
    }
    auto& w = u.weight.mutable_value();
    if (u.transposed) {
      const std::int64_t cin = w.dim(0), kk = w.dim(2) * w.dim(3);
      for (std::int64_t i = 0; i < cin; ++i)
        for (std::int64_t c = 0; c < cout; ++c)
          for (std::int64_t j = 0; j < kk; ++j) w[(i * cout + c) * kk + j] *= static_cast<T>(a[c]);
    } else {
      const std::int64_t cin = w.dim(1);
      for (std::int64_t c = 0; c < cout; ++c)
        for (std::int64_t i = 0; i < cin; ++i) w[c * cin + i] *= static_cast<T>(a[c]);
    }
    auto& b = u.bias.mutable_value();
    for (std::int64_t c = 0; c < cout; ++c) b[c] = static_cast<T>(b[c] * a[c] + off[c]);
    u.has_norm = false;
    u.bn_scale = Var<T>();
    u.bn_shift = Var<T>();
    u.stats = BatchNormStats<T>{};
  });
  return out;
}

#define NLF_INSTANTIATE_NET(T)                                                  \
  template struct ConvUnit<T>;                                                  \
  template class Model<T>;                                                      \
  template Model<T> build_model<T>(const NetConfig&, std::uint64_t);            \
  template std::int64_t count_params(const Model<T>&);                          \
  template std::int64_t count_norm_params(const Model<T>&);                     \
  template Model<T> fold_batchnorm(const Model<T>&);                            \
  template Model<T> clone(const Model<T>&);

NLF_INSTANTIATE_NET(float)
NLF_INSTANTIATE_NET(double)

}  // namespace nlf
