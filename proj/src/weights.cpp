// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace nlf {

static_assert(std::endian::native == std::endian::little,
              "weight files are written with native little-endian stores");

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void take(void* dst, std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_)
      throw WeightFormatError(std::string("weight file truncated while reading ") + what +
                              " at byte " + std::to_string(pos_));
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    take(&v, 4, what);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    take(s.data(), n, what);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void unit_tensors(const std::string& name, const ConvUnit<float>& u,
                  std::vector<std::pair<std::string, Tensor<float>>>& out) {
  out.emplace_back(name + ".weight", u.weight.value());
  out.emplace_back(name + ".bias", u.bias.value());
  if (u.has_norm) {
    out.emplace_back(name + ".bn.scale", u.bn_scale.value());
    out.emplace_back(name + ".bn.shift", u.bn_shift.value());
    out.emplace_back(name + ".bn.running_mean", u.stats.running_mean);
    out.emplace_back(name + ".bn.running_var", u.stats.running_var);
  }
}

}  // namespace

std::string serialize_tensors(const std::vector<std::pair<std::string, Tensor<float>>>& tensors,
                              const nlohmann::json& header) {
  std::string out(kWeightMagic, 4);
  put_u32(out, kWeightFormatVersion);
  const std::string text = header.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.dims()) put_u32(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.data()),
               static_cast<std::size_t>(t.size()) * sizeof(float));
  }
  return out;
}

std::pair<nlohmann::json, std::vector<std::pair<std::string, Tensor<float>>>> deserialize_tensors(
    const std::string& bytes) {
  Reader r(bytes);
  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kWeightMagic, 4) != 0)
    throw WeightFormatError("not a weight file: bad magic bytes (expected \"NLF1\")");
  const auto version = r.u32("version");
  if (version != kWeightFormatVersion)
    throw WeightFormatError("unsupported weight format version " + std::to_string(version) +
                            " (this build reads version " + std::to_string(kWeightFormatVersion) + ")");
  const auto header_len = r.u32("header length");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(header_len, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw WeightFormatError(std::string("weight header is not valid JSON: ") + e.what());
  }
  const auto count = r.u32("tensor count");
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u32("tensor name length");
    std::string name = r.str(name_len, "tensor name");
    const auto rank = r.u32("tensor rank");
    if (rank < 1 || rank > 4)
      throw WeightFormatError("tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Dims dims(rank);
    for (auto& d : dims) d = r.u32("tensor dims");
    const auto n = static_cast<std::size_t>(numel(dims));
    if (n > bytes.size())
      throw WeightFormatError("tensor '" + name + "' claims " + std::to_string(n) +
                              " elements, more than the file holds");
    std::vector<float> data(n);
    r.take(data.data(), n * sizeof(float), "tensor data");
    tensors.emplace_back(std::move(name), Tensor<float>(std::move(dims), std::move(data)));
  }
  if (!r.done()) throw WeightFormatError("trailing bytes after the last tensor record");
  return {std::move(header), std::move(tensors)};
}

ModelWeights weights_from_model(const Model<float>& model, nlohmann::json meta) {
  ModelWeights w;
  w.config = model.config;
  w.folded = model.folded;
  w.meta = std::move(meta);
  model.for_each_unit(
      [&](const std::string& name, const ConvUnit<float>& u) { unit_tensors(name, u, w.tensors); });
  return w;
}

Model<float> model_from_weights(const ModelWeights& weights) {
  Model<float> model = build_model<float>(weights.config);
  model.mode = Mode::eval;
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : weights.tensors) {
    if (!by_name.emplace(name, &t).second)
      throw WeightFormatError("duplicate tensor '" + name + "' in weight file");
  }
  std::size_t used = 0;
  auto assign = [&](const std::string& name, Tensor<float>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw WeightFormatError("weight file is missing tensor '" + name + "'");
    if (it->second->dims() != dst.dims())
      throw WeightFormatError("tensor '" + name + "' has shape " + to_string(it->second->dims()) +
                              " but the config expects " + to_string(dst.dims()));
    dst = *it->second;
    ++used;
  };
  model.for_each_unit([&](const std::string& name, ConvUnit<float>& u) {
    if (weights.folded) {
      u.has_norm = false;
      u.bn_scale = Var<float>();
      u.bn_shift = Var<float>();
      u.stats = BatchNormStats<float>{};
    }
    assign(name + ".weight", u.weight.mutable_value());
    assign(name + ".bias", u.bias.mutable_value());
    if (u.has_norm) {
      assign(name + ".bn.scale", u.bn_scale.mutable_value());
      assign(name + ".bn.shift", u.bn_shift.mutable_value());
      assign(name + ".bn.running_mean", u.stats.running_mean);
      assign(name + ".bn.running_var", u.stats.running_var);
    }
  });
  if (used != weights.tensors.size())
    throw WeightFormatError("weight file holds " + std::to_string(weights.tensors.size() - used) +
                            " tensors the config does not define");
  model.folded = weights.folded;
  return model;
}

std::string serialize_weights(const ModelWeights& weights) {
  nlohmann::json header = {
      {"config", weights.config.to_json()}, {"folded", weights.folded}, {"meta", weights.meta}};
  return serialize_tensors(weights.tensors, header);
}

ModelWeights deserialize_weights(const std::string& bytes) {
  auto [header, tensors] = deserialize_tensors(bytes);
  ModelWeights w;
  try {
    w.config = NetConfig::from_json(header.at("config"));
    w.folded = header.value("folded", false);
    w.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw WeightFormatError(std::string("weight header is malformed: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw WeightFormatError(std::string("weight header config is invalid: ") + e.what());
  }
  w.tensors = std::move(tensors);
  // Shape consistency against the config.
  (void)model_from_weights(w);
  return w;
}

void save_weights(const Model<float>& model, const std::filesystem::path& path, nlohmann::json meta) {
  write_file(path, serialize_weights(weights_from_model(model, std::move(meta))));
}

ModelWeights load_weights(const std::filesystem::path& path) { return deserialize_weights(read_file(path)); }

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace nlf
