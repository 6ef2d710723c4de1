// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <optional>

#include "voxdet/hyp.hpp"

namespace voxdet {
namespace {

TEST(Hyp, ShippedDefaultsEqualBuiltIns) {
  const auto h = load_hyperparameters(std::string(VOXDET_SOURCE_DIR) + "/configs/hyp.default.yaml");
  const Hyperparameters d;
  EXPECT_EQ(h.lr0, d.lr0);
  EXPECT_EQ(h.momentum, 0.937);
  EXPECT_EQ(h.epochs, 1000);
  EXPECT_EQ(h.patience, 200);
  EXPECT_EQ(h.loss.box_gain, 0.05);
  EXPECT_EQ(h.loss.balance, (std::vector<double>{4.0, 1.0, 0.4}));
  EXPECT_EQ(h.augment.zoom_range, d.augment.zoom_range);
}

TEST(Hyp, PartialOverride) {
  const auto h = parse_hyperparameters("lr0: 0.02\nfocal_gamma: 2\nzoom: [0.9, 1.1]\n");
  EXPECT_EQ(h.lr0, 0.02);
  EXPECT_EQ(h.loss.focal_gamma, 2.0);
  EXPECT_EQ(h.augment.zoom_range[1], 1.1);
  EXPECT_EQ(h.batch_size, 8);
}

TEST(Hyp, Errors) {
  auto code = [](const std::string& text) -> std::optional<Errc> {
    try {
      parse_hyperparameters(text);
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  EXPECT_EQ(code("lr00: 1"), Errc::ParseError);
  EXPECT_EQ(code("zoom: [1]"), Errc::ParseError);
  EXPECT_EQ(code("lr0: abc"), Errc::ParseError);
  EXPECT_EQ(code("- 1"), Errc::ParseError);
  EXPECT_EQ(code("patience: 1000"), Errc::InvalidArgument);
  EXPECT_EQ(code("epochs: 10\npatience: 5"), std::nullopt);
  EXPECT_EQ(code("momentum: 1.0"), Errc::InvalidArgument);
  EXPECT_EQ(code("anchor_t: 1.0"), Errc::InvalidArgument);
  EXPECT_EQ(code(""), std::nullopt);
}

}  // namespace
}  // namespace voxdet
