// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "voxdet/common.hpp"

namespace voxdet {

// Storage aligned to Eigen's widest packet. Vectorized products peel by
// address, so equal alignment is what makes results bit-reproducible.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

// Dense NCDHW activation tensor.
template <typename T>
struct Tensor {
  std::array<std::int64_t, 5> shape{0, 0, 0, 0, 0};
  AlignedVector<T> data;

  Tensor() = default;
  Tensor(std::int64_t n, std::int64_t c, std::int64_t d, std::int64_t h, std::int64_t w, T fill = T{})
      : shape{n, c, d, h, w}, data(static_cast<std::size_t>(n * c * d * h * w), fill) {}

  static Tensor like(const Tensor& o, T fill = T{}) {
    return Tensor(o.shape[0], o.shape[1], o.shape[2], o.shape[3], o.shape[4], fill);
  }

  std::int64_t n() const { return shape[0]; }
  std::int64_t c() const { return shape[1]; }
  std::int64_t d() const { return shape[2]; }
  std::int64_t h() const { return shape[3]; }
  std::int64_t w() const { return shape[4]; }
  std::int64_t spatial() const { return shape[2] * shape[3] * shape[4]; }
  std::int64_t sample_size() const { return shape[1] * spatial(); }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T* sample(std::int64_t i) { return data.data() + i * sample_size(); }
  const T* sample(std::int64_t i) const { return data.data() + i * sample_size(); }
  T* channel(std::int64_t i, std::int64_t ch) { return sample(i) + ch * spatial(); }
  const T* channel(std::int64_t i, std::int64_t ch) const { return sample(i) + ch * spatial(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void release() {
    data.clear();
    data.shrink_to_fit();
  }
};

inline std::string shape_string(const std::array<std::int64_t, 5>& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
         std::to_string(s[3]) + "," + std::to_string(s[4]) + ")";
}

// Raw detect-head output for one scale: (N, A * (7 + C), G, G, G).
// Channel layout per anchor: tz tx ty tdz tdx tdy obj cls0..clsC-1.
template <typename T>
struct PredGrid {
  Tensor<T> raw;
  int anchors = 0;
  int num_classes = 0;

  int channels() const { return 7 + num_classes; }
  std::int64_t grid() const { return raw.d(); }
  std::int64_t batch() const { return raw.n(); }

  // Logical shape (A, G, G, G, 7 + C) of one sample.
  std::array<std::int64_t, 5> logical_shape() const {
    return {anchors, grid(), grid(), grid(), channels()};
  }

  std::size_t offset(std::int64_t n, int a, int ch, std::int64_t gz, std::int64_t gx, std::int64_t gy) const {
    const std::int64_t g = grid();
    return static_cast<std::size_t>(((((n * anchors + a) * channels() + ch) * g + gz) * g + gx) * g + gy);
  }
  T& at(std::int64_t n, int a, int ch, std::int64_t gz, std::int64_t gx, std::int64_t gy) {
    return raw.data[offset(n, a, ch, gz, gx, gy)];
  }
  const T& at(std::int64_t n, int a, int ch, std::int64_t gz, std::int64_t gx, std::int64_t gy) const {
    return raw.data[offset(n, a, ch, gz, gx, gy)];
  }

  static PredGrid zeros_like(const PredGrid& o) { return PredGrid{Tensor<T>::like(o.raw), o.anchors, o.num_classes}; }
};

}  // namespace voxdet
