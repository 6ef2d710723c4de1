// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Live augmentations on un-normalized cubes, applied in the order
// cutout -> translate -> zoom. Boxes follow every geometric change and are
// dropped once clipping leaves less than kMinKeptVolume of them.
#pragma once

#include "voxdet/box.hpp"
#include "voxdet/preprocess.hpp"

namespace voxdet {

inline constexpr double kMinKeptVolume = 0.10;

struct AugmentConfig {
  double cutout_prob = 0.5;
  int cutout_max_blocks = 4;
  std::array<double, 2> cutout_size{0.05, 0.25};  // block side as a fraction of the cube side
  double translate_frac = 0.1;
  std::array<double, 2> zoom_range{0.7, 1.3};

  void validate() const {
    if (cutout_prob < 0.0 || cutout_prob > 1.0 || cutout_max_blocks < 0 || !(cutout_size[0] > 0.0) ||
        cutout_size[1] < cutout_size[0] || cutout_size[1] > 1.0 || translate_frac < 0.0 || translate_frac >= 1.0 ||
        !(zoom_range[0] > 0.0) || zoom_range[1] < zoom_range[0])
      throw Error(Errc::InvalidArgument, "invalid augmentation config");
  }
};

struct Augmented {
  Array3<double> data;
  std::vector<Box3> boxes;
};

namespace detail {

inline std::vector<Box3> clip_all(const std::vector<Box3>& boxes) {
  std::vector<Box3> out;
  for (const auto& b : boxes)
    if (auto c = clip_box(b, kMinKeptVolume)) out.push_back(*c);
  return out;
}

}  // namespace detail

// Replaces [lo, hi) with i.i.d. uniform noise on [vmin, vmax].
inline void fill_noise_block(Array3<double>& a, const Dims3& lo, const Dims3& hi, double vmin, double vmax, Rng& rng) {
  for (std::int64_t i = lo[0]; i < hi[0]; ++i)
    for (std::int64_t j = lo[1]; j < hi[1]; ++j)
      for (std::int64_t k = lo[2]; k < hi[2]; ++k) a(i, j, k) = rng.uniform(vmin, vmax);
}

inline Augmented cutout(Array3<double> data, std::vector<Box3> boxes, Rng& rng, const AugmentConfig& cfg) {
  if (cfg.cutout_max_blocks < 1 || !(rng.uniform() < cfg.cutout_prob)) return {std::move(data), std::move(boxes)};
  const double vmin = data.min(), vmax = data.max();
  const auto n = rng.uniform_int(1, cfg.cutout_max_blocks);
  for (std::int64_t b = 0; b < n; ++b) {
    Dims3 lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      const double D = static_cast<double>(data.dim(a));
      const auto len = std::clamp<std::int64_t>(std::llround(rng.uniform(cfg.cutout_size[0], cfg.cutout_size[1]) * D),
                                                1, data.dim(a));
      lo[a] = rng.uniform_int(0, data.dim(a) - len);
      hi[a] = lo[a] + len;
    }
    fill_noise_block(data, lo, hi, vmin, vmax, rng);
  }
  return {std::move(data), std::move(boxes)};
}

// Integer voxel shift per axis; vacated voxels take the input minimum.
inline Augmented translate_by(const Array3<double>& data, const std::vector<Box3>& boxes, const Dims3& shift) {
  const double fill = data.min();
  Array3<double> out(data.dims(), fill);
  const auto& d = data.dims();
  for (std::int64_t i = std::max<std::int64_t>(0, shift[0]); i < std::min(d[0], d[0] + shift[0]); ++i)
    for (std::int64_t j = std::max<std::int64_t>(0, shift[1]); j < std::min(d[1], d[1] + shift[1]); ++j)
      for (std::int64_t k = std::max<std::int64_t>(0, shift[2]); k < std::min(d[2], d[2] + shift[2]); ++k)
        out(i, j, k) = data(i - shift[0], j - shift[1], k - shift[2]);
  std::vector<Box3> moved;
  for (Box3 b : boxes) {
    for (int a = 0; a < 3; ++a) b.center[a] += static_cast<double>(shift[a]) / static_cast<double>(d[a]);
    moved.push_back(b);
  }
  return {std::move(out), detail::clip_all(moved)};
}

inline Augmented translate(const Array3<double>& data, const std::vector<Box3>& boxes, Rng& rng,
                           const AugmentConfig& cfg) {
  Dims3 shift{};
  for (int a = 0; a < 3; ++a) {
    const auto m = static_cast<std::int64_t>(std::floor(cfg.translate_frac * static_cast<double>(data.dim(a))));
    shift[a] = rng.uniform_int(-m, m);
  }
  return translate_by(data, boxes, shift);
}

// Scales about the cube center by s (c' = 0.5 + s (c - 0.5)), trilinear,
// samples outside the source take the input minimum.
inline Augmented zoom_by(const Array3<double>& data, const std::vector<Box3>& boxes, double s) {
  const double fill = data.min();
  const auto& d = data.dims();
  Array3<double> out(d, fill);
  auto src_coord = [&](std::int64_t t, int a) {
    const double n = static_cast<double>(d[a]);
    const double c = 0.5 + ((static_cast<double>(t) + 0.5) / n - 0.5) / s;
    return c * n - 0.5;
  };
  std::vector<double> cz(static_cast<std::size_t>(d[0])), cx(static_cast<std::size_t>(d[1])), cy(static_cast<std::size_t>(d[2]));
  for (std::int64_t t = 0; t < d[0]; ++t) cz[static_cast<std::size_t>(t)] = src_coord(t, 0);
  for (std::int64_t t = 0; t < d[1]; ++t) cx[static_cast<std::size_t>(t)] = src_coord(t, 1);
  for (std::int64_t t = 0; t < d[2]; ++t) cy[static_cast<std::size_t>(t)] = src_coord(t, 2);
  // a coordinate within half a voxel outside the grid still samples the edge voxel
  auto taps = [](double c, std::int64_t n, std::int64_t& i0, double& w) {
    if (c < -0.5 || c > static_cast<double>(n) - 0.5) return false;
    c = std::clamp(c, 0.0, static_cast<double>(n - 1));
    i0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(c)), n - 1);
    w = c - static_cast<double>(i0);
    return true;
  };
  for (std::int64_t i = 0; i < d[0]; ++i) {
    std::int64_t z0;
    double wz;
    if (!taps(cz[static_cast<std::size_t>(i)], d[0], z0, wz)) continue;
    const std::int64_t z1 = std::min(z0 + 1, d[0] - 1);
    for (std::int64_t j = 0; j < d[1]; ++j) {
      std::int64_t x0;
      double wx;
      if (!taps(cx[static_cast<std::size_t>(j)], d[1], x0, wx)) continue;
      const std::int64_t x1 = std::min(x0 + 1, d[1] - 1);
      for (std::int64_t k = 0; k < d[2]; ++k) {
        std::int64_t y0;
        double wy;
        if (!taps(cy[static_cast<std::size_t>(k)], d[2], y0, wy)) continue;
        const std::int64_t y1 = std::min(y0 + 1, d[2] - 1);
        auto lerp = [](double a, double b, double w) { return w == 0.0 ? a : a + w * (b - a); };
        const double c00 = lerp(data(z0, x0, y0), data(z0, x0, y1), wy);
        const double c01 = lerp(data(z0, x1, y0), data(z0, x1, y1), wy);
        const double c10 = lerp(data(z1, x0, y0), data(z1, x0, y1), wy);
        const double c11 = lerp(data(z1, x1, y0), data(z1, x1, y1), wy);
        out(i, j, k) = lerp(lerp(c00, c01, wx), lerp(c10, c11, wx), wz);
      }
    }
  }
  std::vector<Box3> scaled;
  for (Box3 b : boxes) {
    for (int a = 0; a < 3; ++a) {
      b.center[a] = 0.5 + s * (b.center[a] - 0.5);
      b.extent[a] *= s;
    }
    scaled.push_back(b);
  }
  return {std::move(out), detail::clip_all(scaled)};
}

inline Augmented zoom(const Array3<double>& data, const std::vector<Box3>& boxes, Rng& rng, const AugmentConfig& cfg) {
  const double s = cfg.zoom_range[0] == cfg.zoom_range[1] ? cfg.zoom_range[0]
                                                           : rng.uniform(cfg.zoom_range[0], cfg.zoom_range[1]);
  if (s == 1.0) return {data, boxes};
  return zoom_by(data, boxes, s);
}

inline Augmented augment(Array3<double> data, std::vector<Box3> boxes, Rng& rng, const AugmentConfig& cfg) {
  Augmented a = cutout(std::move(data), std::move(boxes), rng, cfg);
  a = translate(a.data, a.boxes, rng, cfg);
  return zoom(a.data, a.boxes, rng, cfg);
}

}  // namespace voxdet
