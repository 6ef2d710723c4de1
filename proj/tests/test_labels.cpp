// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"
#include "voxdet/labels.hpp"

namespace voxdet {
namespace {

void fill_block(Mask& m, std::array<int, 3> lo, std::array<int, 3> hi, int label) {
  for (int i = lo[0]; i < hi[0]; ++i)
    for (int j = lo[1]; j < hi[1]; ++j)
      for (int k = lo[2]; k < hi[2]; ++k) m(i, j, k) = label;
}

TEST(Labels, ComponentBoxesUseHalfOpenVoxelExtents) {
  Mask m(10, 20, 40);
  fill_block(m, {1, 2, 4}, {4, 6, 12}, 1);
  fill_block(m, {6, 10, 20}, {10, 20, 40}, 2);
  const auto boxes = mask_to_boxes(m, BoxMode::PerComponent);
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[0].class_id, 0);
  EXPECT_DOUBLE_EQ(boxes[0].center[0], 2.5 / 10.0);
  EXPECT_DOUBLE_EQ(boxes[0].extent[2], 8.0 / 40.0);
  EXPECT_EQ(boxes[1].class_id, 1);
  EXPECT_DOUBLE_EQ(boxes[1].center[1], 0.75);
  EXPECT_DOUBLE_EQ(boxes[1].extent[1], 0.5);
}

TEST(Labels, DiagonalNeighboursAreOneComponent) {
  Mask m(4, 4, 4);
  m(0, 0, 0) = 1;
  m(1, 1, 1) = 1;
  EXPECT_EQ(mask_to_boxes(m, BoxMode::PerComponent).size(), 1u);
}

TEST(Labels, UnionModes) {
  Mask m(8, 8, 8);
  fill_block(m, {0, 0, 0}, {2, 2, 2}, 1);
  fill_block(m, {5, 5, 5}, {8, 8, 8}, 1);
  fill_block(m, {3, 0, 6}, {4, 1, 7}, 3);
  const auto global = mask_to_boxes(m, BoxMode::GlobalUnion);
  ASSERT_EQ(global.size(), 1u);
  EXPECT_EQ(global[0], Box3::from_corners(0, {0, 0, 0}, {1, 1, 1}));
  const auto per_class = mask_to_boxes(m, BoxMode::PerClassUnion);
  ASSERT_EQ(per_class.size(), 2u);
  EXPECT_EQ(per_class[0], Box3::from_corners(0, {0, 0, 0}, {1, 1, 1}));
  EXPECT_EQ(per_class[1].class_id, 2);
  EXPECT_EQ(parse_box_mode("class"), BoxMode::PerClassUnion);
}

TEST(Labels, EmptyMaskIsAnError) {
  try {
    mask_to_boxes(Mask(3, 3, 3), BoxMode::PerComponent);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyMask);
  }
  EXPECT_TRUE(boxes_or_empty(Mask(3, 3, 3), BoxMode::GlobalUnion).empty());
}

TEST(Labels, ZeroRotationIsBitIdentical) {
  Array3<double> img(3, 9, 12);
  Rng rng(5);
  for (double& v : img.raw()) v = rng.normal();
  Mask m(3, 9, 12);
  fill_block(m, {0, 2, 3}, {3, 5, 9}, 1);
  const auto r = rotate_axial(img, m, 0.0);
  EXPECT_EQ(r.image, img);
  EXPECT_EQ(r.mask, m);
}

TEST(Labels, QuarterTurnMapsAxesExactly) {
  Mask m(1, 9, 9);
  fill_block(m, {0, 1, 3}, {1, 3, 6}, 1);
  const auto r = rotate_axial(Array3<double>(1, 9, 9), m, 90.0);
  const Box3 b = mask_to_boxes(r.mask, BoxMode::GlobalUnion)[0];
  const Box3 a = mask_to_boxes(m, BoxMode::GlobalUnion)[0];
  EXPECT_NEAR(b.extent[1], a.extent[2], 1e-12);
  EXPECT_NEAR(b.extent[2], a.extent[1], 1e-12);
}

TEST(Labels, RotatedSetHasOnePerAngleAndTheOriginal) {
  Array3<double> img(4, 32, 32, 1.0);
  Mask m(4, 32, 32);
  fill_block(m, {1, 10, 12}, {3, 20, 18}, 1);
  const auto set = gen_rotated_set(img, m, default_rotation_angles(), kDefaultRotationJitter, 9);
  ASSERT_EQ(set.size(), 6u);
  EXPECT_TRUE(set.back().original);
  EXPECT_EQ(set.back().mask, m);
  for (std::size_t i = 0; i + 1 < set.size(); ++i) {
    EXPECT_NEAR(set[i].angle_deg, default_rotation_angles()[i], kDefaultRotationJitter);
    EXPECT_EQ(set[i].boxes.size(), 1u);
  }
  const auto again = gen_rotated_set(img, m, default_rotation_angles(), kDefaultRotationJitter, 9);
  for (std::size_t i = 0; i < set.size(); ++i) EXPECT_EQ(set[i].angle_deg, again[i].angle_deg);
}

TEST(Labels, FileRoundTripAndParseErrors) {
  testing::TempDir dir("labels");
  const std::vector<Box3> boxes{{0, {0.25, 0.5, 0.75}, {0.1, 0.2, 0.3}}, {2, {0.5, 0.5, 0.5}, {1, 1, 1}}};
  write_labels(dir / "a.txt", boxes);
  const auto back = read_labels(dir / "a.txt");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].class_id, boxes[i].class_id);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(back[i].center[a], boxes[i].center[a], 1e-6);
  }
  for (const char* bad : {"0 0.5 0.5 0.5 0.1 0.1\n", "0 0.5 0.5 0.5 0.1 0.1 -0.1\n", "x 0.5 0.5 0.5 0.1 0.1 0.1\n"}) {
    std::ofstream(dir / "bad.txt") << bad;
    try {
      read_labels(dir / "bad.txt");
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ParseError);
      EXPECT_NE(std::string(e.what()).find("bad.txt:1"), std::string::npos);
    }
  }
  std::ofstream(dir / "empty.txt") << "\n";
  EXPECT_TRUE(read_labels(dir / "empty.txt").empty());
}

}  // namespace
}  // namespace voxdet
