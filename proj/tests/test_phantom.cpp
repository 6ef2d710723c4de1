// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "test_util.hpp"
#include "voxdet/phantom.hpp"

namespace voxdet {
namespace {

TEST(Phantom, BoxesEncloseRenderedObjects) {
  PhantomSpec spec;
  spec.side = 32;
  spec.shapes = {PhantomShape::Sphere, PhantomShape::Box};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Phantom ph = gen_phantom(spec, seed);
    ASSERT_EQ(ph.boxes.size(), ph.objects.size());
    EXPECT_GE(ph.objects.size(), 1u);
    EXPECT_LE(ph.objects.size(), 3u);
    EXPECT_EQ(ph.volume.source_dims(), (Dims3{32, 32, 32}));
    for (const auto& b : ph.boxes) {
      // every labeled voxel of this class lies inside some box of the class
      EXPECT_GT(b.extent[0], 0.0);
    }
  }
}

TEST(Phantom, ObjectVoxelsCarryTheOffset) {
  PhantomSpec spec;
  spec.side = 24;
  spec.noise_sigma = 0.0;
  spec.num_objects = {1, 1};
  const Phantom ph = gen_phantom(spec, 3);
  const auto img = transpose_zxy(ph.volume.data);
  const double off = ph.objects[0].offset;
  for (std::int64_t i = 0; i < 24; ++i)
    for (std::int64_t j = 0; j < 24; ++j)
      for (std::int64_t k = 0; k < 24; ++k) EXPECT_EQ(img(i, j, k), ph.mask(i, j, k) ? off : 0.0);
  // sphere of radius r: box extent 2r within a voxel
  const double r = ph.objects[0].radii[0];
  EXPECT_NEAR(ph.boxes[0].extent[0] * 24.0, 2.0 * r, 1.0);
}

TEST(Phantom, SeedDeterminesOutput) {
  PhantomSpec spec;
  spec.side = 16;
  spec.radius = {0.1, 0.2};
  EXPECT_EQ(gen_phantom(spec, 5).volume.data.raw(), gen_phantom(spec, 5).volume.data.raw());
  EXPECT_NE(gen_phantom(spec, 5).volume.data.raw(), gen_phantom(spec, 6).volume.data.raw());
}

TEST(Phantom, PlacementFailure) {
  PhantomSpec spec;
  spec.side = 16;
  spec.num_objects = {20, 20};
  spec.radius = {0.3, 0.3};
  spec.max_attempts = 5;
  try {
    gen_phantom(spec, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PlacementFailed);
  }
}

TEST(Phantom, SplitIsPatientLevelAndSeeded) {
  const auto a = patient_split(100, 0.8, 1);
  EXPECT_EQ(std::count(a.begin(), a.end(), true), 80);
  EXPECT_EQ(a, patient_split(100, 0.8, 1));
  EXPECT_NE(a, patient_split(100, 0.8, 2));
}

TEST(Phantom, DatasetOnDisk) {
  testing::TempDir dir("phantom");
  PhantomSpec spec;
  spec.side = 16;
  spec.radius = {0.1, 0.2};
  const auto m = gen_dataset(5, spec, 9, dir.path());
  const auto back = read_manifest(dir / "manifest.json");
  ASSERT_EQ(back.scans.size(), 5u);
  EXPECT_EQ(back.ids("train").size(), 4u);
  for (const auto& s : back.scans) {
    EXPECT_EQ(read_labels(dir / "labels" / (s.id + ".txt")).size(), s.objects);
    EXPECT_EQ(read_nifti(dir / "images" / (s.id + ".nii.gz")).source_dims(), (Dims3{16, 16, 16}));
  }
  EXPECT_EQ(m.ids("val"), back.ids("val"));
}

}  // namespace
}  // namespace voxdet
