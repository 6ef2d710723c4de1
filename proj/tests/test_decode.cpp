// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "voxdet/decode.hpp"

namespace voxdet {
namespace {

AnchorSet three_scale_anchors() {
  AnchorSet a;
  a.anchors = {{4, 4, 4}, {6, 5, 7}, {10, 12, 9}, {14, 14, 14}, {20, 18, 24}, {30, 30, 30}};
  a.per_scale = {2, 2, 2};
  return a;
}

TEST(Decode, EncodeDecodeRoundTrip) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const std::int64_t G = rng.uniform_int(2, 16);
    CellRef ref{{rng.uniform_int(0, G - 1), rng.uniform_int(0, G - 1), rng.uniform_int(0, G - 1)},
                G,
                {rng.uniform(2, 30), rng.uniform(2, 30), rng.uniform(2, 30)},
                64};
    double logits[6];
    for (double& v : logits) v = 3.0 * rng.normal();
    const Box3 b = decode_box(logits, ref);
    const auto back = encode_box(b, ref);
    ASSERT_TRUE(back);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR((*back)[static_cast<std::size_t>(k)], logits[k], 1e-6);
  }
}

TEST(Decode, ZeroLogitsGiveCellCentreAndAnchorExtent) {
  const CellRef ref{{1, 2, 3}, 4, {8, 16, 4}, 64};
  const double zero[6] = {0, 0, 0, 0, 0, 0};
  const Box3 b = decode_box(zero, ref);
  EXPECT_DOUBLE_EQ(b.center[0], 1.5 / 4.0);
  EXPECT_DOUBLE_EQ(b.center[2], 3.5 / 4.0);
  EXPECT_DOUBLE_EQ(b.extent[1], 16.0 / 64.0);
  const Box3 far{0, {0.9, 0.5, 0.5}, {0.1, 0.1, 0.1}};
  EXPECT_FALSE(encode_box(far, ref));
}

TEST(Decode, ConfidenceThresholdAndOrder) {
  const auto anchors = three_scale_anchors();
  std::vector<PredGrid<float>> preds;
  for (std::int64_t g : feature_shapes(64)) {
    PredGrid<float> p{Tensor<float>(1, 2 * 8, g, g, g, -10.0f), 2, 1};
    for (int a = 0; a < 2; ++a)
      for (int ch = 0; ch < 6; ++ch)
        for (std::int64_t i = 0; i < g * g * g; ++i) (&p.at(0, a, ch, 0, 0, 0))[i] = 0.0f;
    preds.push_back(p);
  }
  preds[1].at(0, 1, 6, 1, 2, 3) = 0.0f;  // objectness 0.5 -> confidence 0.25 with sigma(0) class
  preds[1].at(0, 1, 7, 1, 2, 3) = 0.0f;
  preds[0].at(0, 0, 6, 0, 0, 0) = 3.0f;
  preds[0].at(0, 0, 7, 0, 0, 0) = 0.0f;
  const auto dets = decode(preds, anchors, 64, 0.25);
  ASSERT_EQ(dets.size(), 1u);
  ASSERT_EQ(dets[0].size(), 2u);
  EXPECT_NEAR(dets[0][0].confidence, sigmoid(3.0) * 0.5, 1e-6);
  EXPECT_NEAR(dets[0][1].confidence, 0.25, 1e-12);
  EXPECT_EQ(dets[0][1].index, 1u);
  EXPECT_NEAR(dets[0][1].box.center[1], 2.5 / 4.0, 1e-12);
  EXPECT_TRUE(decode(preds, anchors, 64, 0.26)[0].size() == 1u);
}

TEST(Decode, GridMismatch) {
  const auto anchors = three_scale_anchors();
  std::vector<PredGrid<float>> preds;
  for (std::int64_t g : feature_shapes(64)) preds.push_back({Tensor<float>(1, 16, g, g, g), 2, 1});
  EXPECT_NO_THROW(decode(preds, anchors, 64, 0.5));
  try {
    decode(preds, anchors, 96, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::GridMismatch);
  }
  preds.pop_back();
  EXPECT_THROW(decode(preds, anchors, 64, 0.5), Error);
}

}  // namespace
}  // namespace voxdet
