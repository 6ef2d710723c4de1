// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Raw head output -> boxes. Per cell g and anchor a along each axis:
//   center = (2 sigma(t) - 0.5 + g) / G
//   extent = a (2 sigma(t))^2 / D
#pragma once

#include <optional>

#include "voxdet/anchors.hpp"
#include "voxdet/box.hpp"
#include "voxdet/model_config.hpp"
#include "voxdet/tensor.hpp"

namespace voxdet {

struct Detection {
  Box3 box;
  double confidence = 0.0;
  int class_id = 0;
  std::size_t index = 0;  // position in the pre-NMS candidate list
};

struct CellRef {
  std::int64_t cell[3];
  std::int64_t grid;
  Extent3 anchor;  // cube voxels
  std::int64_t side;
};

// Six box logits (tz tx ty tdz tdx tdy) -> unclipped Box3.
inline Box3 decode_box(const double* t, const CellRef& ref) {
  Box3 b;
  const double G = static_cast<double>(ref.grid), D = static_cast<double>(ref.side);
  for (int a = 0; a < 3; ++a) {
    b.center[a] = (2.0 * sigmoid(t[a]) - 0.5 + static_cast<double>(ref.cell[a])) / G;
    const double s = 2.0 * sigmoid(t[3 + a]);
    b.extent[a] = ref.anchor[static_cast<std::size_t>(a)] * s * s / D;
  }
  return b;
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Inverse of decode_box; nullopt when the box lies outside the cell's reach
// (center offset not in (-0.5, 1.5) cells, or extent not in (0, 4 anchor)).
inline std::optional<std::array<double, 6>> encode_box(const Box3& b, const CellRef& ref) {
  std::array<double, 6> t{};
  const double G = static_cast<double>(ref.grid), D = static_cast<double>(ref.side);
  for (int a = 0; a < 3; ++a) {
    const double sc = (b.center[a] * G - static_cast<double>(ref.cell[a]) + 0.5) / 2.0;
    const double se = std::sqrt(b.extent[a] * D / ref.anchor[static_cast<std::size_t>(a)]) / 2.0;
    if (!(sc > 0.0 && sc < 1.0 && se > 0.0 && se < 1.0)) return std::nullopt;
    t[static_cast<std::size_t>(a)] = logit(sc);
    t[static_cast<std::size_t>(3 + a)] = logit(se);
  }
  return t;
}

template <typename T>
void check_grids(const std::vector<PredGrid<T>>& preds, const AnchorSet& anchors, std::int64_t side) {
  if (preds.size() != anchors.per_scale.size())
    throw Error(Errc::GridMismatch, std::to_string(preds.size()) + " grids for " +
                                        std::to_string(anchors.per_scale.size()) + " anchor scales");
  const auto sides = feature_shapes(side, static_cast<int>(preds.size()));
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].anchors != anchors.per_scale[s])
      throw Error(Errc::GridMismatch, "scale " + std::to_string(s) + " has " + std::to_string(preds[s].anchors) +
                                          " anchors, expected " + std::to_string(anchors.per_scale[s]));
    if (preds[s].grid() != sides[s] || preds[s].raw.c() != preds[s].anchors * preds[s].channels())
      throw Error(Errc::GridMismatch, "scale " + std::to_string(s) + " grid " + shape_string(preds[s].raw.shape) +
                                          " does not match cube side " + std::to_string(side));
  }
}

// Per-sample candidates with confidence >= conf_thr, in (scale, anchor, cell) order.
template <typename T>
std::vector<std::vector<Detection>> decode(const std::vector<PredGrid<T>>& preds, const AnchorSet& anchors,
                                           std::int64_t side, double conf_thr) {
  check_grids(preds, anchors, side);
  const std::int64_t batch = preds.front().batch();
  std::vector<std::vector<Detection>> out(static_cast<std::size_t>(batch));
  for (std::int64_t n = 0; n < batch; ++n) {
    auto& dets = out[static_cast<std::size_t>(n)];
    for (std::size_t s = 0; s < preds.size(); ++s) {
      const auto& p = preds[s];
      const auto scale_anchors = anchors.scale(s);
      const std::int64_t G = p.grid();
      for (int a = 0; a < p.anchors; ++a)
        for (std::int64_t gz = 0; gz < G; ++gz)
          for (std::int64_t gx = 0; gx < G; ++gx)
            for (std::int64_t gy = 0; gy < G; ++gy) {
              const double obj = sigmoid(p.at(n, a, 6, gz, gx, gy));
              if (obj < conf_thr) continue;  // confidence <= objectness
              int best_c = 0;
              double best = 0.0;
              if (p.num_classes == 1) {
                best = sigmoid(p.at(n, a, 7, gz, gx, gy));
              } else {
                best = -1.0;
                for (int c = 0; c < p.num_classes; ++c) {
                  const double v = sigmoid(p.at(n, a, 7 + c, gz, gx, gy));
                  if (v > best) best = v, best_c = c;
                }
              }
              const double conf = obj * best;
              if (!(conf >= conf_thr)) continue;
              double t[6];
              for (int k = 0; k < 6; ++k) t[k] = p.at(n, a, k, gz, gx, gy);
              const CellRef ref{{gz, gx, gy}, G, scale_anchors[static_cast<std::size_t>(a)], side};
              Box3 raw = decode_box(t, ref);
              raw.class_id = best_c;
              const auto clipped = clip_box(raw);
              if (!clipped) continue;
              dets.push_back({*clipped, conf, best_c, dets.size()});
            }
    }
  }
  return out;
}

}  // namespace voxdet
