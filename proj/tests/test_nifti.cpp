// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cstring>

#include "test_util.hpp"
#include "voxdet/nifti.hpp"

namespace voxdet {
namespace {

// Byte-level fixture builder, independent of the library encoder.
struct Fixture {
  std::vector<unsigned char> bytes;
  bool big = false;

  explicit Fixture(bool big_endian = false, std::size_t vox_offset = 352) : bytes(vox_offset, 0), big(big_endian) {
    put<std::int32_t>(0, 348);
    std::memcpy(bytes.data() + 344, "n+1\0", 4);
    put<float>(108, static_cast<float>(vox_offset));
  }

  template <typename T>
  void put(std::size_t off, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if (big == (std::endian::native == std::endian::little)) std::reverse(b, b + sizeof(T));
    if (bytes.size() < off + sizeof(T)) bytes.resize(off + sizeof(T));
    std::memcpy(bytes.data() + off, b, sizeof(T));
  }

  void dims(std::int16_t nx, std::int16_t ny, std::int16_t nz) {
    put<std::int16_t>(40, 3);
    put<std::int16_t>(42, nx);
    put<std::int16_t>(44, ny);
    put<std::int16_t>(46, nz);
    for (int i = 4; i < 8; ++i) put<std::int16_t>(40 + 2 * i, 1);
  }
  void datatype(std::int16_t code, std::int16_t bitpix) {
    put<std::int16_t>(70, code);
    put<std::int16_t>(72, bitpix);
  }
  void spacing(float sx, float sy, float sz) {
    put<float>(80, sx);
    put<float>(84, sy);
    put<float>(88, sz);
  }
  template <typename T>
  void append(T v) {
    put<T>(bytes.size(), v);
  }
};

TEST(Nifti, DecodesLittleEndianInt16WithXFastest) {
  Fixture f;
  f.dims(2, 3, 2);
  f.datatype(nifti::kInt16, 16);
  f.spacing(0.5f, 0.75f, 2.0f);
  for (std::int16_t n = 0; n < 12; ++n) f.append<std::int16_t>(static_cast<std::int16_t>(n * 10 - 40));
  const Volume v = nifti::decode(f.bytes);
  ASSERT_EQ(v.data.dims(), (Dims3{2, 3, 2}));
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 2; ++x) EXPECT_EQ(v.data(x, y, z), (x + 2 * y + 6 * z) * 10 - 40);
  EXPECT_EQ(v.spacing, (Vec3{0.5, 0.75, 2.0}));
}

TEST(Nifti, DecodesBigEndianFloat32) {
  Fixture f(true);
  f.dims(3, 1, 1);
  f.datatype(nifti::kFloat32, 32);
  for (float x : {1.5f, -2.25f, 1e6f}) f.append<float>(x);
  const Volume v = nifti::decode(f.bytes);
  EXPECT_EQ(v.data(0, 0, 0), 1.5);
  EXPECT_EQ(v.data(1, 0, 0), -2.25);
  EXPECT_EQ(v.data(2, 0, 0), 1e6);
}

TEST(Nifti, AppliesSlopeAndIntercept) {
  Fixture f;
  f.dims(2, 1, 1);
  f.datatype(nifti::kUInt8, 8);
  f.put<float>(112, 2.0f);
  f.put<float>(116, -1024.0f);
  f.append<std::uint8_t>(0);
  f.append<std::uint8_t>(255);
  const Volume v = nifti::decode(f.bytes);
  EXPECT_EQ(v.data(0, 0, 0), -1024.0);
  EXPECT_EQ(v.data(1, 0, 0), 2.0 * 255 - 1024.0);
}

TEST(Nifti, ZeroSlopeMeansUnscaled) {
  Fixture f;
  f.dims(1, 1, 1);
  f.datatype(nifti::kInt32, 32);
  f.put<float>(116, 7.0f);
  f.append<std::int32_t>(-123456);
  EXPECT_EQ(nifti::decode(f.bytes).data(0, 0, 0), -123456.0);
}

TEST(Nifti, Float64AndUnusualVoxOffset) {
  Fixture f(false, 400);
  f.dims(1, 2, 1);
  f.datatype(nifti::kFloat64, 64);
  f.append<double>(0.1);
  f.append<double>(-0.3);
  const Volume v = nifti::decode(f.bytes);
  EXPECT_EQ(v.data(0, 0, 0), 0.1);
  EXPECT_EQ(v.data(0, 1, 0), -0.3);
}

TEST(Nifti, ReadsModalityFromDescrip) {
  Fixture f;
  f.dims(1, 1, 1);
  f.datatype(nifti::kUInt8, 8);
  std::memcpy(f.bytes.data() + 148, "modality=CT", 11);
  f.append<std::uint8_t>(1);
  EXPECT_EQ(nifti::decode(f.bytes).modality, Modality::CT);
}

TEST(Nifti, Errors) {
  auto code = [](const std::vector<unsigned char>& b) {
    try {
      nifti::decode(b);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidArgument;
  };
  Fixture ok;
  ok.dims(2, 2, 2);
  ok.datatype(nifti::kUInt8, 8);
  for (int i = 0; i < 8; ++i) ok.append<std::uint8_t>(1);
  EXPECT_NO_THROW(nifti::decode(ok.bytes));

  auto bad_magic = ok.bytes;
  bad_magic[345] = 'x';
  EXPECT_EQ(code(bad_magic), Errc::BadMagic);

  auto pair = ok.bytes;
  std::memcpy(pair.data() + 344, "ni1\0", 4);
  EXPECT_EQ(code(pair), Errc::HeaderOnlyFile);

  auto truncated = ok.bytes;
  truncated.resize(truncated.size() - 1);
  EXPECT_EQ(code(truncated), Errc::TruncatedData);
  EXPECT_EQ(code(std::vector<unsigned char>(100, 0)), Errc::TruncatedData);

  Fixture dt = ok;
  dt.datatype(128, 24);  // RGB
  EXPECT_EQ(code(dt.bytes), Errc::UnsupportedDatatype);

  Fixture amb = ok;
  amb.put<std::int16_t>(40, 0);
  EXPECT_EQ(code(amb.bytes), Errc::AmbiguousHeader);
}

TEST(Nifti, RoundTripsThroughGzipFile) {
  testing::TempDir dir("nifti");
  Volume v;
  v.data = Array3<double>(3, 4, 5);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data.raw()[i] = static_cast<double>(i) * 0.5 - 3.0;
  v.spacing = {0.8, 0.8, 2.5};
  v.modality = Modality::MR;
  for (const char* name : {"a.nii", "a.nii.gz"}) {
    write_nifti(v, dir / name);
    const Volume r = read_nifti(dir / name);
    EXPECT_EQ(r.data, v.data) << name;
    EXPECT_EQ(r.modality, Modality::MR);
    for (int a = 0; a < 3; ++a) EXPECT_FLOAT_EQ(r.spacing[a], v.spacing[a]);
  }
  const auto gz = nifti::detail::read_file(dir / "a.nii.gz");
  EXPECT_TRUE(gz.size() > 2 && gz[0] == 0x1f && gz[1] == 0x8b);
}

TEST(Nifti, Basenames) {
  EXPECT_EQ(nifti_basename("dir/scan01.nii.gz"), "scan01");
  EXPECT_EQ(nifti_basename("scan.v2.nii"), "scan.v2");
  EXPECT_TRUE(is_nifti_path("x.nii.gz"));
  EXPECT_FALSE(is_nifti_path("x.txt"));
}

TEST(Nifti, MissingFileIsIoFailure) {
  try {
    read_nifti("/nonexistent/none.nii");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IoFailure);
  }
}

}  // namespace
}  // namespace voxdet
