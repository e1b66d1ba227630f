// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace nlf {

namespace {

// Activations are large and short-lived. Keeping freed blocks on the heap
// instead of returning them to the OS avoids a page-fault storm per step.
[[maybe_unused]] const bool allocator_tuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);  // glibc maximum
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();

}  // namespace

std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ')';
  return os.str();
}

std::int64_t numel(const Dims& dims) {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Dims dims, T fill) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 4)
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims_.size()));
  for (auto d : dims_)
    if (d < 0) throw ShapeError("negative dimension in " + to_string(dims_));
  data_.assign(static_cast<std::size_t>(numel(dims_)), fill);
}

template <typename T>
Tensor<T>::Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(data.begin(), data.end()) {
  if (dims_.empty() || dims_.size() > 4)
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims_.size()));
  if (static_cast<std::int64_t>(data_.size()) != numel(dims_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match dims " +
                     to_string(dims_));
}

template <typename T>
std::int64_t Tensor<T>::dim4(int i) const {
  if (dims_.size() != 4) throw ShapeError("expected a rank-4 tensor, got " + to_string(dims_));
  return dims_[static_cast<std::size_t>(i)];
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Dims dims) const {
  if (numel(dims) != size())
    throw ShapeError("cannot reshape " + to_string(dims_) + " to " + to_string(dims));
  Tensor out = *this;
  out.dims_ = std::move(dims);
  return out;
}

template <typename T>
void require_same_dims(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.dims()) + " vs " +
                     to_string(b.dims()));
}

template class Tensor<float>;
template class Tensor<double>;
template void require_same_dims(const Tensor<float>&, const Tensor<float>&, const char*);
template void require_same_dims(const Tensor<double>&, const Tensor<double>&, const char*);

}  // namespace nlf
