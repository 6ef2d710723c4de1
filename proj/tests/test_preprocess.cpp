// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "voxdet/preprocess.hpp"

namespace voxdet {
namespace {

Volume ramp_volume(std::int64_t nx, std::int64_t ny, std::int64_t nz) {
  Volume v;
  v.data = Array3<double>(nx, ny, nz);
  for (std::int64_t x = 0; x < nx; ++x)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t z = 0; z < nz; ++z) v.data(x, y, z) = 1000.0 * x + 100.0 * y + z;
  return v;
}

TEST(Preprocess, TransposeMovesZFirst) {
  const Volume v = ramp_volume(4, 3, 2);
  const auto t = transpose_zxy(v);
  EXPECT_EQ(t.dims(), (Dims3{2, 4, 3}));
  for (std::int64_t x = 0; x < 4; ++x)
    for (std::int64_t y = 0; y < 3; ++y)
      for (std::int64_t z = 0; z < 2; ++z) EXPECT_EQ(t(z, x, y), v.data(x, y, z));
  EXPECT_EQ(transpose_xyz(t), v.data);
}

TEST(Preprocess, ConstantFieldIsPreserved) {
  Array3<double> a(5, 7, 3, 42.25);
  const Cube c = resample_to_cube(a, 32);
  for (double v : c.data.values()) EXPECT_NEAR(v, 42.25, 1e-12);
}

TEST(Preprocess, TrilinearReproducesAffineFields) {
  // An affine field is reproduced exactly at every (clamped) sample coordinate.
  const Dims3 src{9, 5, 13};
  Array3<double> a(src);
  auto f = [](double i, double j, double k) { return 0.5 + 2.0 * i - 3.0 * j + 0.25 * k + 0.1 * i * j; };
  for (std::int64_t i = 0; i < src[0]; ++i)
    for (std::int64_t j = 0; j < src[1]; ++j)
      for (std::int64_t k = 0; k < src[2]; ++k) a(i, j, k) = f(i, j, k);
  const std::int64_t side = 33;
  const Cube c = resample_to_cube(a, side);
  double worst = 0.0;
  for (std::int64_t i = 0; i < side; ++i)
    for (std::int64_t j = 0; j < side; ++j)
      for (std::int64_t k = 0; k < side; ++k) {
        const double si = resample_source_coord(i, src[0], side);
        const double sj = resample_source_coord(j, src[1], side);
        const double sk = resample_source_coord(k, src[2], side);
        worst = std::max(worst, std::fabs(c.data(i, j, k) - f(si, sj, sk)));
      }
  EXPECT_LE(worst, 1e-9);
}

TEST(Preprocess, IdentitySizeIsIdentity) {
  const Volume v = ramp_volume(32, 32, 32);
  const Cube c = to_cube(v, 32);
  EXPECT_EQ(c.data, transpose_zxy(v));
}

TEST(Preprocess, SideBelowMinimumIsRejected) {
  Array3<double> a(4, 4, 4);
  try {
    resample_to_cube(a, 31);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SideTooSmall);
  }
}

TEST(Preprocess, CtWindowEndpoints) {
  Cube c;
  c.data = Array3<double>(1, 1, 5);
  c.data.raw() = {-3000.0, -1024.0, 0.0, 1024.0, 4000.0};
  const Cube n = normalize_ct(c);
  EXPECT_EQ(n.data.raw(), (std::vector<double>{0.0, 0.0, 0.5, 1.0, 1.0}));
  EXPECT_TRUE(n.normalized);
  EXPECT_THROW(normalize_ct(n), Error);
}

TEST(Preprocess, MrZScore) {
  Cube c;
  c.data = Array3<double>(4, 5, 6);
  Rng rng(3);
  for (double& v : c.data.raw()) v = 200.0 + 50.0 * rng.normal();
  const Cube n = normalize_mr(c);
  double m = 0.0, ss = 0.0;
  for (double v : n.data.values()) m += v;
  m /= static_cast<double>(n.data.size());
  for (double v : n.data.values()) ss += (v - m) * (v - m);
  EXPECT_NEAR(m, 0.0, 1e-6);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n.data.size())), 1.0, 1e-6);
}

TEST(Preprocess, MrConstantMapsToZero) {
  Cube c;
  c.data = Array3<double>(2, 2, 2, 7.0);
  const Cube n = normalize_mr(c);
  for (double v : n.data.values()) EXPECT_EQ(v, 0.0);
}

TEST(Preprocess, NormalizationFollowsModality) {
  Volume v = ramp_volume(3, 3, 3);
  v.modality = Modality::CT;
  const Cube c = preprocess(v, PreprocessConfig{32, {}, std::nullopt});
  EXPECT_GE(c.data.min(), 0.0);
  EXPECT_LE(c.data.max(), 1.0);
  EXPECT_EQ(parse_normalization("mr"), Normalization::MR);
  EXPECT_THROW(parse_normalization("pet"), Error);
}

TEST(Preprocess, BoxMappingRoundTrips) {
  const Dims3 src{40, 512, 512};
  const VoxelBox vb{2, {10, 100, 200}, {21, 180, 260}};
  const Box3 b = box_original_to_cube(vb, src);
  EXPECT_DOUBLE_EQ(b.center[0], 15.5 / 40.0);
  EXPECT_DOUBLE_EQ(b.extent[1], 80.0 / 512.0);
  const VoxelBox back = box_cube_to_original(b, src);
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(back.lo[a], vb.lo[a], 1e-9);
    EXPECT_NEAR(back.hi[a], vb.hi[a], 1e-9);
  }
  EXPECT_THROW(box_original_to_cube(VoxelBox{0, {1, 1, 1}, {1, 2, 2}}, src), Error);
}

}  // namespace
}  // namespace voxdet
