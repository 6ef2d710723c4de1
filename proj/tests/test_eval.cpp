// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "eval_oracles.hpp"
#include "test_util.hpp"

namespace voxdet {
namespace {

bool same(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].index != b[i].index) return false;
  return true;
}

TEST(Eval, NmsMatchesExhaustiveReferenceAndIsIdempotent) {
  Rng rng(21);
  for (int scene = 0; scene < 200; ++scene) {
    const auto dets = testing::random_scene(rng, static_cast<std::size_t>(rng.uniform_int(0, 50)), 2);
    const auto kept = nms3d(dets, kNmsIouThreshold);
    EXPECT_TRUE(same(kept, testing::reference_nms(dets, kNmsIouThreshold))) << scene;
    EXPECT_TRUE(same(nms3d(kept, kNmsIouThreshold), kept)) << scene;
  }
}

TEST(Eval, NmsClassAgnosticSuppressesAcrossClasses) {
  const Box3 b{0, {0.5, 0.5, 0.5}, {0.2, 0.2, 0.2}};
  Box3 c = b;
  c.class_id = 1;
  const std::vector<Detection> dets{{b, 0.9, 0, 0}, {c, 0.8, 1, 1}};
  EXPECT_EQ(nms3d(dets, 0.45).size(), 2u);
  EXPECT_EQ(nms3d(dets, 0.45, true).size(), 1u);
}

TEST(Eval, HandDerivedAp) {
  // [TP, FP, TP], 2 GT: envelope 1, 2/3, 2/3
  const std::vector<bool> tp{true, false, true};
  const std::vector<double> conf{0.9, 0.8, 0.7};
  const double ap101 = *average_precision(tp, conf, 2);
  EXPECT_NEAR(ap101, (51.0 + 50.0 * 2.0 / 3.0) / 101.0, 1e-12);
  EXPECT_NEAR(ap101, 0.8350, 1e-4);
  EXPECT_NEAR(ap101, testing::reference_ap101(tp, 2), 1e-12);
  EXPECT_NEAR(*average_precision(tp, conf, 2, ApMode::AllPoints), 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(*average_precision(tp, conf, 2, ApMode::AllPoints), testing::reference_ap_all_points(tp, 2), 1e-12);
}

TEST(Eval, ApEdgeCases) {
  EXPECT_EQ(*average_precision({true, true}, {0.9, 0.5}, 2), 1.0);
  EXPECT_EQ(*average_precision({false, false}, {0.9, 0.5}, 2), 0.0);
  EXPECT_EQ(*average_precision({}, {}, 3), 0.0);
  EXPECT_FALSE(average_precision({}, {}, 0));
  EXPECT_EQ(*average_precision({false}, {0.3}, 0), 0.0);
  EXPECT_THROW(average_precision({true}, {}, 1), Error);
}

TEST(Eval, ApMatchesBruteForceOnRandomRankings) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 30));
    std::vector<bool> tp(n);
    std::vector<double> conf(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp[i] = rng.uniform() < 0.5;
      hits += tp[i];
      conf[i] = 1.0 - static_cast<double>(i) / static_cast<double>(n);
    }
    const std::size_t gt = hits + static_cast<std::size_t>(rng.uniform_int(0, 5));
    if (gt == 0) continue;
    EXPECT_NEAR(*average_precision(tp, conf, gt), testing::reference_ap101(tp, gt), 1e-12);
    EXPECT_NEAR(*average_precision(tp, conf, gt, ApMode::AllPoints), testing::reference_ap_all_points(tp, gt), 1e-12);
  }
}

TEST(Eval, MatchingIsGreedyByConfidence) {
  const Box3 g0{0, {0.5, 0.5, 0.5}, {0.2, 0.2, 0.2}};
  Box3 p1 = g0;
  p1.center[0] += 0.02;
  const std::vector<Detection> preds{{g0, 0.9, 0, 0}, {p1, 0.8, 0, 1}};
  const auto m = match_detections(preds, {g0}, 0.5);
  EXPECT_EQ(m.tp, (std::vector<bool>{true, false}));
  EXPECT_EQ(m.matched_gt, (std::vector<int>{0, -1}));
}

TEST(Eval, PerfectEmptyAndMixedReports) {
  Rng rng(3);
  std::vector<std::vector<Box3>> gts(4);
  std::vector<std::vector<Detection>> perfect(4), none(4);
  for (std::size_t s = 0; s < 4; ++s)
    for (int i = 0; i < 3; ++i) {
      gts[s].push_back(testing::random_box(rng, 2));
      perfect[s].push_back({gts[s].back(), 1.0, gts[s].back().class_id, perfect[s].size()});
    }
  const auto p = map_report(perfect, gts);
  EXPECT_EQ(p.map50, 1.0);
  EXPECT_EQ(p.map50_95, 1.0);
  EXPECT_EQ(p.map50_90, 1.0);
  EXPECT_EQ(p.fp, 0u);
  const auto e = map_report(none, gts);
  EXPECT_EQ(e.map50, 0.0);
  EXPECT_EQ(e.fn, 12u);
  EXPECT_THROW(map_report(none, {}), Error);
}

TEST(Eval, StrictAggregateNeverExceedsMap50) {
  Rng rng(9);
  for (int scene = 0; scene < 50; ++scene) {
    std::vector<std::vector<Box3>> gts(3);
    std::vector<std::vector<Detection>> preds(3);
    for (std::size_t s = 0; s < 3; ++s) {
      for (int i = 0; i < 3; ++i) gts[s].push_back(testing::random_box(rng, 2));
      for (const auto& g : gts[s]) {
        Box3 b = g;
        for (int a = 0; a < 3; ++a) b.center[a] += 0.03 * rng.normal();
        preds[s].push_back({b, rng.uniform(), b.class_id, preds[s].size()});
      }
      preds[s].push_back({testing::random_box(rng, 2), rng.uniform(), 0, preds[s].size()});
    }
    const auto r = map_report(preds, gts);
    EXPECT_LE(r.map50_95, r.map50 + 1e-15);
    EXPECT_LE(r.map50_90, r.map50 + 1e-15);
  }
}

TEST(Eval, JsonLayout) {
  const Box3 g{0, {0.5, 0.5, 0.5}, {0.2, 0.2, 0.2}};
  const auto r = map_report({{{g, 0.7, 0, 0}}}, {{g}}, {"scanA"});
  const auto j = to_json(r);
  EXPECT_EQ(j["classes"][0]["ap"].size(), 10u);  // 0.50 .. 0.95
  EXPECT_TRUE(j["classes"][0]["ap"].contains("0.55"));
  EXPECT_EQ(j["scans"][0]["scan"], "scanA");
  EXPECT_EQ(j["counts"]["tp"], 1);
}

TEST(Eval, PredictionFilesRoundTrip) {
  testing::TempDir dir("eval");
  const std::vector<Detection> dets{{{1, {0.25, 0.5, 0.75}, {0.1, 0.2, 0.3}}, 0.123456789, 1, 0}};
  write_predictions(dir / "p.txt", dets);
  const auto back = read_predictions(dir / "p.txt");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].class_id, 1);
  EXPECT_DOUBLE_EQ(back[0].confidence, 0.123456789);
}

TEST(Eval, OverlayFillsSourceVoxels) {
  Volume src;
  src.data = Array3<double>(10, 20, 4);  // (x, y, z)
  const Detection d{Box3::from_corners(1, {0.25, 0.1, 0.5}, {0.75, 0.3, 1.0}), 0.9, 1, 0};
  const Volume o = overlay_volume({d}, src);
  std::size_t filled = 0;
  for (double v : o.data.values()) filled += v == 2.0;
  // z 1..3 (2 slices), x 1..3 (2), y 10..20 (10)
  EXPECT_EQ(filled, 2u * 2u * 10u);
  EXPECT_EQ(o.data(1, 10, 2), 2.0);
  EXPECT_EQ(o.data(0, 10, 2), 0.0);
}

}  // namespace
}  // namespace voxdet
