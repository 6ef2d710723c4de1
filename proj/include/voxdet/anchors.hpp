// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Anchor priors from label extents: k-means under the co-centred IoU distance
// d(a, b) = 1 - IoU(a, b), k-means++ seeding, and an elbow scan over k.
#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "voxdet/common.hpp"

namespace voxdet {

// (dz, dx, dy) in cube voxels
using Extent3 = std::array<double, 3>;

struct AnchorSet {
  std::vector<Extent3> anchors;  // ascending by volume
  std::vector<int> per_scale;    // anchors per detection scale, finest first
  double distortion = 0.0;       // mean 1 - IoU of the fitted labels

  std::size_t size() const { return anchors.size(); }

  // Anchors assigned to scale s (contiguous, small anchors on fine scales).
  std::vector<Extent3> scale(std::size_t s) const {
    const int first = std::accumulate(per_scale.begin(), per_scale.begin() + static_cast<long>(s), 0);
    return {anchors.begin() + first, anchors.begin() + first + per_scale[s]};
  }
};

inline double shape_iou(const Extent3& a, const Extent3& b) {
  const double inter = std::min(a[0], b[0]) * std::min(a[1], b[1]) * std::min(a[2], b[2]);
  const double uni = a[0] * a[1] * a[2] + b[0] * b[1] * b[2] - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double shape_distance(const Extent3& a, const Extent3& b) { return 1.0 - shape_iou(a, b); }

inline double extent_volume(const Extent3& e) { return e[0] * e[1] * e[2]; }

// Mean nearest-centroid distance.
inline double anchor_distortion(const std::vector<Extent3>& points, const std::vector<Extent3>& centroids) {
  double sum = 0.0;
  for (const auto& p : points) {
    double best = 2.0;
    for (const auto& c : centroids) best = std::min(best, shape_distance(p, c));
    sum += best;
  }
  return sum / static_cast<double>(points.size());
}

namespace detail {

inline void validate_extents(const std::vector<Extent3>& extents, std::size_t k) {
  if (k < 1 || extents.size() < k)
    throw Error(Errc::TooFewLabels, std::to_string(extents.size()) + " labels for k=" + std::to_string(k));
  for (const auto& e : extents)
    for (double v : e)
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(Errc::NonPositiveExtent, "label extent must be > 0");
}

inline std::vector<std::size_t> assign(const std::vector<Extent3>& pts, const std::vector<Extent3>& cents,
                                       double* distortion) {
  std::vector<std::size_t> lab(pts.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = 2.0;
    for (std::size_t c = 0; c < cents.size(); ++c) {
      const double d = shape_distance(pts[i], cents[c]);
      if (d < best) best = d, lab[i] = c;
    }
    sum += best;
  }
  *distortion = sum / static_cast<double>(pts.size());
  return lab;
}

// Lloyd refinement from the given seeds; returns the best centroid set seen.
inline std::vector<Extent3> lloyd(const std::vector<Extent3>& pts, std::vector<Extent3> cents, int max_iter,
                                  double* best_distortion) {
  double dist = 0.0;
  auto lab = assign(pts, cents, &dist);
  std::vector<Extent3> best = cents;
  *best_distortion = dist;
  for (int it = 0; it < max_iter; ++it) {
    const std::size_t k = cents.size();
    std::vector<Extent3> sum(k, Extent3{0, 0, 0});
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (int a = 0; a < 3; ++a) sum[lab[i]][a] += pts[i][a];
      ++count[lab[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) {
        for (int a = 0; a < 3; ++a) cents[c][a] = sum[c][a] / static_cast<double>(count[c]);
        continue;
      }
      // empty cluster: reseed at the point farthest from its centroid (lowest index on ties)
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = shape_distance(pts[i], cents[lab[i]]);
        if (d > far_d) far_d = d, far = i;
      }
      cents[c] = pts[far];
      lab[far] = c;
    }
    auto next = assign(pts, cents, &dist);
    if (dist < *best_distortion) *best_distortion = dist, best = cents;
    if (next == lab) break;
    lab = std::move(next);
  }
  return best;
}

inline std::vector<Extent3> kmeanspp(const std::vector<Extent3>& pts, std::size_t k, Rng& rng) {
  std::vector<Extent3> cents;
  cents.reserve(k);
  cents.push_back(pts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pts.size()) - 1))]);
  std::vector<double> d2(pts.size());
  while (cents.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = 2.0;
      for (const auto& c : cents) best = std::min(best, shape_distance(pts[i], c));
      d2[i] = best * best;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      // every point already coincides with a centroid
      pick = cents.size() % pts.size();
    } else {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = pts.size() - 1;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && r < acc) {
          pick = i;
          break;
        }
      }
      while (d2[pick] <= 0.0) --pick;  // guard against roundoff at the tail
    }
    cents.push_back(pts[pick]);
  }
  return cents;
}

inline AnchorSet finish(std::vector<Extent3> cents, double distortion, int num_scales) {
  std::sort(cents.begin(), cents.end(), [](const Extent3& a, const Extent3& b) {
    const double va = extent_volume(a), vb = extent_volume(b);
    return va != vb ? va < vb : a < b;
  });
  AnchorSet set;
  set.anchors = std::move(cents);
  set.distortion = distortion;
  const int k = static_cast<int>(set.anchors.size());
  if (num_scales < 1 || k % num_scales != 0)
    throw Error(Errc::InvalidArgument,
                "k=" + std::to_string(k) + " not divisible by " + std::to_string(num_scales) + " scales");
  set.per_scale.assign(static_cast<std::size_t>(num_scales), k / num_scales);
  return set;
}

}  // namespace detail

inline constexpr int kDefaultAnchorCount = 6;
inline constexpr int kDefaultDetectScales = 3;
inline constexpr int kKmeansMaxIter = 300;

// Input is sorted first so the result does not depend on label order.
inline AnchorSet anchor_kmeans(std::vector<Extent3> extents, std::size_t k, std::uint64_t seed,
                               int num_scales = 1) {
  detail::validate_extents(extents, k);
  std::sort(extents.begin(), extents.end());
  Rng rng(seed);
  auto seeds = detail::kmeanspp(extents, k, rng);
  double distortion = 0.0;
  auto cents = detail::lloyd(extents, std::move(seeds), kKmeansMaxIter, &distortion);
  return detail::finish(std::move(cents), distortion, num_scales);
}

struct ElbowPoint {
  std::size_t k = 0;
  double distortion = 0.0;
};

// Best of `restarts` seeded runs per k, plus a warm start from the previous k's
// centroids with the farthest point added, which bounds distortion(k) by distortion(k - 1).
inline std::vector<ElbowPoint> elbow_scan(std::vector<Extent3> extents, std::size_t k_min, std::size_t k_max,
                                          std::uint64_t seed, int restarts = 10) {
  if (k_min < 1 || k_max < k_min) throw Error(Errc::InvalidArgument, "bad k range");
  detail::validate_extents(extents, k_max);
  std::sort(extents.begin(), extents.end());
  std::vector<ElbowPoint> out;
  std::vector<Extent3> prev;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<Extent3> best_c;
    for (int r = 0; r < restarts; ++r) {
      const auto set = anchor_kmeans(extents, k, Rng::mix(seed, k, static_cast<std::uint64_t>(r)));
      if (set.distortion < best) best = set.distortion, best_c = set.anchors;
    }
    if (!prev.empty()) {
      auto warm = prev;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < extents.size(); ++i) {
        double d = 2.0;
        for (const auto& c : prev) d = std::min(d, shape_distance(extents[i], c));
        if (d > far_d) far_d = d, far = i;
      }
      warm.push_back(extents[far]);
      double d = 0.0;
      auto refined = detail::lloyd(extents, warm, kKmeansMaxIter, &d);
      if (d < best) best = d, best_c = std::move(refined);
    }
    prev = best_c;
    out.push_back({k, best});
  }
  return out;
}

}  // namespace voxdet
