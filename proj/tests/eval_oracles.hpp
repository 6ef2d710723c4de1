// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force references for NMS and AP, shared by unit and acceptance tests.
#pragma once

#include "voxdet/eval.hpp"

namespace voxdet::testing {

// Full IoU matrix; rank r survives iff no surviving higher-ranked detection of
// the same class overlaps it at >= thr.
inline std::vector<Detection> reference_nms(const std::vector<Detection>& dets, double thr) {
  const std::size_t n = dets.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = i;
  // insertion sort: higher confidence first, ties by input position
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = i; j > 0 && dets[rank[j]].confidence > dets[rank[j - 1]].confidence; --j)
      std::swap(rank[j], rank[j - 1]);
  std::vector<std::vector<double>> iou(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) iou[i][j] = iou3d(dets[i].box, dets[j].box);
  std::vector<bool> alive(n, false);
  std::vector<Detection> out;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = rank[r];
    bool suppressed = false;
    for (std::size_t q = 0; q < r; ++q) {
      const std::size_t j = rank[q];
      if (alive[j] && dets[j].class_id == dets[i].class_id && iou[j][i] >= thr) suppressed = true;
    }
    alive[i] = !suppressed;
    if (alive[i]) out.push_back(dets[i]);
  }
  return out;
}

// 101-point interpolated AP straight from its definition: mean over
// r in {0, 0.01, ..., 1} of the best precision at any rank with recall >= r.
inline double reference_ap101(const std::vector<bool>& ranked_tp, std::size_t num_gt) {
  double sum = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    double best = 0.0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < ranked_tp.size(); ++k) {
      tp += ranked_tp[k];
      const double recall = static_cast<double>(tp) / static_cast<double>(num_gt);
      if (recall >= r) best = std::max(best, static_cast<double>(tp) / static_cast<double>(k + 1));
    }
    sum += best;
  }
  return sum / 101.0;
}

// Area under the raw (uninterpolated-recall) step curve of the precision envelope.
inline double reference_ap_all_points(const std::vector<bool>& ranked_tp, std::size_t num_gt) {
  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked_tp.size(); ++k) {
    tp += ranked_tp[k];
    const double recall = static_cast<double>(tp) / static_cast<double>(num_gt);
    double env = 0.0;
    std::size_t tp2 = 0;
    for (std::size_t m = 0; m < ranked_tp.size(); ++m) {
      tp2 += ranked_tp[m];
      if (m >= k) env = std::max(env, static_cast<double>(tp2) / static_cast<double>(m + 1));
    }
    area += (recall - prev_recall) * env;
    prev_recall = recall;
  }
  return area;
}

inline Box3 random_box(Rng& rng, int num_classes = 1) {
  Box3 b;
  b.class_id = static_cast<int>(rng.uniform_int(0, num_classes - 1));
  for (int a = 0; a < 3; ++a) {
    b.extent[a] = rng.uniform(0.05, 0.3);
    b.center[a] = rng.uniform(0.5 * b.extent[a], 1.0 - 0.5 * b.extent[a]);
  }
  return b;
}

// Detections clustered around a few seeds so suppression actually happens.
inline std::vector<Detection> random_scene(Rng& rng, std::size_t n, int num_classes) {
  std::vector<Box3> seeds;
  const auto k = rng.uniform_int(1, 5);
  for (std::int64_t i = 0; i < k; ++i) seeds.push_back(random_box(rng, num_classes));
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < n; ++i) {
    Box3 b = seeds[static_cast<std::size_t>(rng.uniform_int(0, k - 1))];
    for (int a = 0; a < 3; ++a) {
      b.center[a] += 0.03 * rng.normal();
      b.extent[a] *= std::exp(0.2 * rng.normal());
    }
    b.class_id = static_cast<int>(rng.uniform_int(0, num_classes - 1));
    // coarse confidences produce ties
    const double conf = std::round(rng.uniform() * 20.0) / 20.0;
    dets.push_back({b, conf, b.class_id, i});
  }
  return dets;
}

}  // namespace voxdet::testing
