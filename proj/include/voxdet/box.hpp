// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <optional>

#include "voxdet/common.hpp"

namespace voxdet {

// Normalized axis-aligned box; axes follow the transposed (z, x, y) tensor order.
struct Box3 {
  int class_id = 0;
  Vec3 center{0.5, 0.5, 0.5};
  Vec3 extent{1.0, 1.0, 1.0};

  double lo(int a) const { return center[a] - 0.5 * extent[a]; }
  double hi(int a) const { return center[a] + 0.5 * extent[a]; }
  double volume() const { return extent[0] * extent[1] * extent[2]; }

  static Box3 from_corners(int cls, const Vec3& lo, const Vec3& hi) {
    Box3 b;
    b.class_id = cls;
    for (int a = 0; a < 3; ++a) {
      b.center[a] = 0.5 * (lo[a] + hi[a]);
      b.extent[a] = hi[a] - lo[a];
    }
    return b;
  }

  friend bool operator==(const Box3&, const Box3&) = default;
};

inline double intersection_volume(const Box3& a, const Box3& b) {
  double v = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double len = std::min(a.hi(k), b.hi(k)) - std::max(a.lo(k), b.lo(k));
    if (len <= 0.0) return 0.0;
    v *= len;
  }
  return v;
}

// Volume from the rounded corners, consistent with intersection_volume.
inline double corner_volume(const Box3& b) { return (b.hi(0) - b.lo(0)) * (b.hi(1) - b.lo(1)) * (b.hi(2) - b.lo(2)); }

inline double iou3d(const Box3& a, const Box3& b) {
  const double inter = intersection_volume(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = corner_volume(a) + corner_volume(b) - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

// Clips to the unit cube; nullopt when the clipped box keeps less than
// `min_keep` of its original volume or collapses on an axis.
inline std::optional<Box3> clip_box(const Box3& b, double min_keep = 0.0) {
  Vec3 lo, hi;
  bool inside = true;
  for (int a = 0; a < 3; ++a) {
    inside = inside && b.lo(a) >= 0.0 && b.hi(a) <= 1.0;
    lo[a] = std::clamp(b.lo(a), 0.0, 1.0);
    hi[a] = std::clamp(b.hi(a), 0.0, 1.0);
    if (hi[a] <= lo[a]) return std::nullopt;
  }
  if (inside) return b;
  Box3 out = Box3::from_corners(b.class_id, lo, hi);
  const double v0 = b.volume();
  if (v0 <= 0.0 || out.volume() < min_keep * v0) return std::nullopt;
  return out;
}

}  // namespace voxdet
