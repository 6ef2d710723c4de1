// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "voxdet/common.hpp"

namespace voxdet {

// Dense 3-D grid, last index fastest. Axis meaning is set by the owner:
// a Volume stores (x, y, z), a Cube or Mask after transposition stores (z, x, y).
template <typename T>
class Array3 {
 public:
  Array3() = default;
  Array3(std::int64_t n0, std::int64_t n1, std::int64_t n2, T fill = T{})
      : dims_{n0, n1, n2}, data_(static_cast<std::size_t>(n0 * n1 * n2), fill) {
    if (n0 < 1 || n1 < 1 || n2 < 1) throw Error(Errc::InvalidArgument, "Array3 dims must be >= 1");
  }
  explicit Array3(const Dims3& d, T fill = T{}) : Array3(d[0], d[1], d[2], fill) {}

  const Dims3& dims() const noexcept { return dims_; }
  std::int64_t dim(int axis) const noexcept { return dims_[axis]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
    return static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k);
  }
  T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) noexcept { return data_[index(i, j, k)]; }
  const T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
    return data_[index(i, j, k)];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& raw() noexcept { return data_; }
  const std::vector<T>& raw() const noexcept { return data_; }

  T min() const { return *std::min_element(data_.begin(), data_.end()); }
  T max() const { return *std::max_element(data_.begin(), data_.end()); }

  template <typename U>
  Array3<U> cast() const {
    Array3<U> out(dims_);
    std::transform(data_.begin(), data_.end(), out.raw().begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Array3& a, const Array3& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

 private:
  Dims3 dims_{0, 0, 0};
  std::vector<T> data_;
};

}  // namespace voxdet
