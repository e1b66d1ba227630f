// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlf {

/// Raised on any tensor shape disagreement. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Dims = std::vector<std::int64_t>;

/// Cache-line aligned storage. Vectorized reductions peel differently
/// depending on the start address, so alignment is part of reproducibility.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::string to_string(const Dims& dims);
std::int64_t numel(const Dims& dims);

/// Dense row-major array of rank 1..4. Rank-4 tensors use B,C,H,W layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T(0));
  Tensor(Dims dims, std::vector<T> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  const Dims& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  std::int64_t dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // Rank-4 accessors.
  std::int64_t batch() const { return dim4(0); }
  std::int64_t channels() const { return dim4(1); }
  std::int64_t height() const { return dim4(2); }
  std::int64_t width() const { return dim4(3); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(offset(b, c, h, w))];
  }
  const T& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(offset(b, c, h, w))];
  }

  void fill(T value);
  bool all_finite() const;

  /// Same data, new dims. Element count must match.
  Tensor reshaped(Dims dims) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(dims_, std::move(out));
  }

 private:
  std::int64_t dim4(int i) const;
  std::int64_t offset(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((b * dims_[1] + c) * dims_[2] + h) * dims_[3] + w;
  }

  Dims dims_;
  AlignedVector<T> data_;
};

template <typename T>
void require_same_dims(const Tensor<T>& a, const Tensor<T>& b, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace nlf
