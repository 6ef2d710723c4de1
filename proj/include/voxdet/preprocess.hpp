// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Input pipeline: (x,y,z) -> (z,x,y) transpose, trilinear resampling to a
// cube, modality normalization, and box mapping between source voxels and
// normalized cube coordinates. Order is fixed: transpose, resample, augment,
// normalize.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "voxdet/array3.hpp"
#include "voxdet/box.hpp"
#include "voxdet/nifti.hpp"

namespace voxdet {

struct Cube {
  Array3<double> data;  // (z, x, y), all sides equal
  std::int64_t side = 0;
  Dims3 source_dims{0, 0, 0};  // (nz, nx, ny) before resampling
  Modality modality = Modality::Unknown;
  bool normalized = false;
};

template <typename T>
Array3<T> transpose_zxy(const Array3<T>& xyz) {
  const auto [nx, ny, nz] = xyz.dims();
  Array3<T> out(nz, nx, ny);
  for (std::int64_t x = 0; x < nx; ++x)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t z = 0; z < nz; ++z) out(z, x, y) = xyz(x, y, z);
  return out;
}

template <typename T>
Array3<T> transpose_xyz(const Array3<T>& zxy) {
  const auto [nz, nx, ny] = zxy.dims();
  Array3<T> out(nx, ny, nz);
  for (std::int64_t z = 0; z < nz; ++z)
    for (std::int64_t x = 0; x < nx; ++x)
      for (std::int64_t y = 0; y < ny; ++y) out(x, y, z) = zxy(z, x, y);
  return out;
}

inline Array3<double> transpose_zxy(const Volume& vol) { return transpose_zxy(vol.data); }

namespace detail {

struct AxisTaps {
  std::vector<std::int64_t> i0, i1;
  std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

// Align-corners-false: t -> (t + 0.5) * n_src / n_dst - 0.5, clamped to [0, n_src - 1].
inline AxisTaps axis_taps(std::int64_t n_src, std::int64_t n_dst) {
  AxisTaps t;
  t.i0.resize(n_dst);
  t.i1.resize(n_dst);
  t.w1.resize(n_dst);
  const double scale = static_cast<double>(n_src) / static_cast<double>(n_dst);
  for (std::int64_t i = 0; i < n_dst; ++i) {
    double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(n_src - 1));
    const auto lo = static_cast<std::int64_t>(std::floor(s));
    t.i0[i] = lo;
    t.i1[i] = std::min(lo + 1, n_src - 1);
    t.w1[i] = s - static_cast<double>(lo);
  }
  return t;
}

}  // namespace detail

// Source coordinate that output index t samples along an axis.
inline double resample_source_coord(std::int64_t t, std::int64_t n_src, std::int64_t n_dst) {
  const double s = (static_cast<double>(t) + 0.5) * static_cast<double>(n_src) / static_cast<double>(n_dst) - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(n_src - 1));
}

// Trilinear resampling of an arbitrary grid to explicit output dims.
inline Array3<double> resample_trilinear(const Array3<double>& src, const Dims3& out_dims) {
  const auto t0 = detail::axis_taps(src.dim(0), out_dims[0]);
  const auto t1 = detail::axis_taps(src.dim(1), out_dims[1]);
  const auto t2 = detail::axis_taps(src.dim(2), out_dims[2]);
  Array3<double> out(out_dims);
  for (std::int64_t i = 0; i < out_dims[0]; ++i) {
    const double a = t0.w1[i];
    for (std::int64_t j = 0; j < out_dims[1]; ++j) {
      const double b = t1.w1[j];
      for (std::int64_t k = 0; k < out_dims[2]; ++k) {
        const std::int64_t k0 = t2.i0[k], k1 = t2.i1[k];
        const double c = t2.w1[k];
        auto lerp_row = [&](std::int64_t ii, std::int64_t jj) {
          return (1.0 - c) * src(ii, jj, k0) + c * src(ii, jj, k1);
        };
        const double v00 = lerp_row(t0.i0[i], t1.i0[j]);
        const double v01 = lerp_row(t0.i0[i], t1.i1[j]);
        const double v10 = lerp_row(t0.i1[i], t1.i0[j]);
        const double v11 = lerp_row(t0.i1[i], t1.i1[j]);
        const double v0 = (1.0 - b) * v00 + b * v01;
        const double v1 = (1.0 - b) * v10 + b * v11;
        out(i, j, k) = (1.0 - a) * v0 + a * v1;
      }
    }
  }
  return out;
}

inline Cube resample_to_cube(const Array3<double>& zxy, std::int64_t side, Modality modality = Modality::Unknown) {
  if (side < kMinCubeSide)
    throw Error(Errc::SideTooSmall, "cube side " + std::to_string(side) + " < " + std::to_string(kMinCubeSide));
  if (zxy.empty()) throw Error(Errc::InvalidArgument, "empty input array");
  Cube c;
  c.data = resample_trilinear(zxy, Dims3{side, side, side});
  c.side = side;
  c.source_dims = zxy.dims();
  c.modality = modality;
  return c;
}

struct CtWindow {
  double lo = -1024.0;
  double hi = 1024.0;
};

inline Cube normalize_ct(Cube cube, CtWindow window = {}) {
  if (cube.normalized) throw Error(Errc::InvalidArgument, "cube already normalized");
  const double span = window.hi - window.lo;
  for (double& v : cube.data.raw()) v = (std::clamp(v, window.lo, window.hi) - window.lo) / span;
  cube.normalized = true;
  return cube;
}

inline Cube normalize_mr(Cube cube) {
  if (cube.normalized) throw Error(Errc::InvalidArgument, "cube already normalized");
  auto& v = cube.data.raw();
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  if (sd < 1e-8) {
    std::fill(v.begin(), v.end(), 0.0);
  } else {
    for (double& x : v) x = (x - mean) / sd;
  }
  cube.normalized = true;
  return cube;
}

enum class Normalization { CT, MR, None };

inline Normalization parse_normalization(std::string_view s) {
  if (s == "ct") return Normalization::CT;
  if (s == "mr") return Normalization::MR;
  if (s == "none") return Normalization::None;
  throw Error(Errc::InvalidArgument, "normalization must be ct, mr or none");
}

inline Normalization normalization_for(Modality m) {
  switch (m) {
    case Modality::CT: return Normalization::CT;
    case Modality::MR: return Normalization::MR;
    default: return Normalization::None;
  }
}

inline Cube normalize(Cube cube, Normalization mode, CtWindow window = {}) {
  switch (mode) {
    case Normalization::CT: return normalize_ct(std::move(cube), window);
    case Normalization::MR: return normalize_mr(std::move(cube));
    default:
      if (cube.normalized) throw Error(Errc::InvalidArgument, "cube already normalized");
      cube.normalized = true;
      return cube;
  }
}

// Continuous half-open box [lo, hi) in source voxel units, (z, x, y) order.
struct VoxelBox {
  int class_id = 0;
  Vec3 lo{0, 0, 0};
  Vec3 hi{0, 0, 0};
};

inline Box3 box_original_to_cube(const VoxelBox& vb, const Dims3& source_dims) {
  Box3 b;
  b.class_id = vb.class_id;
  for (int a = 0; a < 3; ++a) {
    const double ext = vb.hi[a] - vb.lo[a];
    if (!(ext > 0.0)) throw Error(Errc::DegenerateBox, "zero voxel extent on axis " + std::to_string(a));
    const double n = static_cast<double>(source_dims[a]);
    // centre voxel (lo + hi - 1) / 2 shifted by half a voxel, i.e. the midpoint of [lo, hi)
    b.center[a] = 0.5 * (vb.lo[a] + vb.hi[a]) / n;
    b.extent[a] = ext / n;
  }
  return b;
}

inline VoxelBox box_cube_to_original(const Box3& b, const Dims3& source_dims) {
  VoxelBox vb;
  vb.class_id = b.class_id;
  for (int a = 0; a < 3; ++a) {
    const double n = static_cast<double>(source_dims[a]);
    vb.lo[a] = (b.center[a] - 0.5 * b.extent[a]) * n;
    vb.hi[a] = (b.center[a] + 0.5 * b.extent[a]) * n;
  }
  return vb;
}

struct PreprocessConfig {
  std::int64_t cube_side = 350;
  CtWindow ct_window;
  std::optional<Normalization> normalization;  // default follows the volume's modality
};

// transpose + resample; normalization is a separate step so augmentation can sit between.
inline Cube to_cube(const Volume& vol, std::int64_t side) {
  return resample_to_cube(transpose_zxy(vol), side, vol.modality);
}

inline Cube preprocess(const Volume& vol, const PreprocessConfig& cfg) {
  Cube c = to_cube(vol, cfg.cube_side);
  return normalize(std::move(c), cfg.normalization.value_or(normalization_for(vol.modality)), cfg.ct_window);
}

}  // namespace voxdet
