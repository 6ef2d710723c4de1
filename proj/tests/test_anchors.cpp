// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "voxdet/anchors.hpp"

namespace voxdet {
namespace {

std::vector<Extent3> jittered(Rng& rng, const Extent3& c, int n, double spread) {
  std::vector<Extent3> out;
  for (int i = 0; i < n; ++i) out.push_back({c[0] + spread * rng.uniform(-1, 1), c[1] + spread * rng.uniform(-1, 1),
                                              c[2] + spread * rng.uniform(-1, 1)});
  return out;
}

Extent3 mean_of(const std::vector<Extent3>& v) {
  Extent3 m{0, 0, 0};
  for (const auto& e : v)
    for (int a = 0; a < 3; ++a) m[a] += e[a] / static_cast<double>(v.size());
  return m;
}

TEST(Anchors, TwoClustersRecoverMeans) {
  Rng rng(4);
  const auto small = jittered(rng, {4, 5, 6}, 40, 0.5);
  const auto large = jittered(rng, {30, 25, 40}, 30, 2.0);
  std::vector<Extent3> all = small;
  all.insert(all.end(), large.begin(), large.end());
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const AnchorSet set = anchor_kmeans(all, 2, seed);
    ASSERT_EQ(set.size(), 2u);
    const Extent3 ms = mean_of(small), ml = mean_of(large);
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(set.anchors[0][a], ms[a], 1e-6);
      EXPECT_NEAR(set.anchors[1][a], ml[a], 1e-6);
    }
    EXPECT_NEAR(set.distortion, anchor_distortion(all, set.anchors), 1e-12);
  }
}

TEST(Anchors, ShapeIouIsOriginAligned) {
  EXPECT_DOUBLE_EQ(shape_iou({2, 2, 2}, {2, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(shape_iou({1, 1, 1}, {2, 2, 2}), 1.0 / 8.0);
  EXPECT_DOUBLE_EQ(shape_iou({1, 2, 4}, {4, 2, 1}), 2.0 / 14.0);
}

TEST(Anchors, DefaultSixSplitAcrossScales) {
  Rng rng(8);
  std::vector<Extent3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({rng.uniform(2, 40), rng.uniform(2, 40), rng.uniform(2, 40)});
  const AnchorSet set = anchor_kmeans(pts, kDefaultAnchorCount, 1, kDefaultDetectScales);
  EXPECT_EQ(set.size(), 6u);
  EXPECT_EQ(set.per_scale, (std::vector<int>{2, 2, 2}));
  for (std::size_t i = 1; i < set.size(); ++i)
    EXPECT_LE(extent_volume(set.anchors[i - 1]), extent_volume(set.anchors[i]));
  EXPECT_EQ(set.scale(2).front(), set.anchors[4]);
}

TEST(Anchors, SeedReproducibleAndOrderIndependent) {
  Rng rng(2);
  std::vector<Extent3> pts;
  for (int i = 0; i < 150; ++i) pts.push_back({rng.uniform(1, 30), rng.uniform(1, 30), rng.uniform(1, 30)});
  const AnchorSet a = anchor_kmeans(pts, 6, 17);
  std::reverse(pts.begin(), pts.end());
  const AnchorSet b = anchor_kmeans(pts, 6, 17);
  EXPECT_EQ(a.anchors, b.anchors);
  EXPECT_EQ(a.distortion, b.distortion);
}

TEST(Anchors, ElbowIsNonIncreasing) {
  Rng rng(6);
  std::vector<Extent3> pts;
  for (int i = 0; i < 120; ++i) pts.push_back({rng.uniform(1, 50), rng.uniform(1, 20), rng.uniform(1, 35)});
  const auto scan = elbow_scan(pts, 1, 9, 3);
  ASSERT_EQ(scan.size(), 9u);
  for (std::size_t i = 1; i < scan.size(); ++i) EXPECT_LE(scan[i].distortion, scan[i - 1].distortion);
}

TEST(Anchors, Errors) {
  auto code = [](std::vector<Extent3> pts, std::size_t k) {
    try {
      anchor_kmeans(std::move(pts), k, 0);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidArgument;
  };
  EXPECT_EQ(code({{1, 1, 1}}, 2), Errc::TooFewLabels);
  EXPECT_EQ(code({{1, 0, 1}, {2, 2, 2}}, 1), Errc::NonPositiveExtent);
}

}  // namespace
}  // namespace voxdet
