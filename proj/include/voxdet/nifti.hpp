// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
//
// Only the "n+1" single-file flavour is accepted; the header-only "ni1" pair
// layout is rejected. Byte order is resolved from dim[0], which must land in
// 1..7 under exactly one interpretation. qform/sform are parsed and kept in the
// header struct but never applied: boxes live in voxel index space.
#pragma once

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "voxdet/array3.hpp"
#include "voxdet/common.hpp"

namespace voxdet {

enum class Modality { CT, MR, Unknown };

inline std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::CT: return "CT";
    case Modality::MR: return "MR";
    default: return "UNKNOWN";
  }
}

// Scan intensities indexed (x, y, z).
struct Volume {
  Array3<double> data;
  Vec3 spacing{1.0, 1.0, 1.0};
  Modality modality = Modality::Unknown;

  Dims3 source_dims() const { return data.dims(); }
};

enum class Endianness { Little, Big };

struct NiftiHeader {
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 0.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
  std::string descrip;
  std::array<char, 4> magic{};
  Endianness byte_order = Endianness::Little;
};

namespace nifti {

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kWriteVoxOffset = 352;

enum Datatype : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
};

namespace detail {

template <typename T>
T load(const unsigned char* p, bool swap) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if (swap) std::reverse(b.begin(), b.end());
  return std::bit_cast<T>(b);
}

template <typename T>
void store_le(unsigned char* p, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  std::memcpy(p, &v, sizeof(T));
}

inline bool is_gzip(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error(Errc::IoFailure, "inflateInit2 failed");
  std::vector<unsigned char> out;
  std::vector<unsigned char> chunk(1 << 20);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      // A cut-off gzip stream is reported as truncation, same as a short payload.
      if (rc == Z_BUF_ERROR) throw Error(Errc::TruncatedData, "gzip stream ended early");
      throw Error(Errc::IoFailure, "corrupt gzip stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw Error(Errc::TruncatedData, "gzip stream ended early");
    }
  }
  inflateEnd(&zs);
  return out;
}

// gzip with a zero mtime so identical payloads give identical files.
inline std::vector<unsigned char> gzip(const std::vector<unsigned char>& in) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error(Errc::IoFailure, "deflateInit2 failed");
  std::vector<unsigned char> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 32);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(Errc::IoFailure, "deflate failed");
  out.resize(zs.total_out);
  return out;
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

inline std::size_t datatype_size(std::int16_t code) {
  switch (code) {
    case kUInt8: return 1;
    case kInt16: return 2;
    case kInt32: return 4;
    case kFloat32: return 4;
    case kFloat64: return 8;
    default: throw Error(Errc::UnsupportedDatatype, "datatype code " + std::to_string(code));
  }
}

}  // namespace detail

inline Endianness detect_endianness(std::span<const unsigned char> raw) {
  if (raw.size() < kHeaderSize) throw Error(Errc::TruncatedData, "header shorter than 348 bytes");
  const auto little = detail::load<std::int16_t>(raw.data() + 40, std::endian::native != std::endian::little);
  const auto big = detail::load<std::int16_t>(raw.data() + 40, std::endian::native != std::endian::big);
  if (little >= 1 && little <= 7) return Endianness::Little;
  if (big >= 1 && big <= 7) return Endianness::Big;
  throw Error(Errc::AmbiguousHeader, "dim[0] outside 1..7 in either byte order");
}

inline NiftiHeader parse_header(std::span<const unsigned char> raw) {
  if (raw.size() < kHeaderSize) throw Error(Errc::TruncatedData, "header shorter than 348 bytes");
  NiftiHeader h;
  std::memcpy(h.magic.data(), raw.data() + 344, 4);
  const std::string_view magic(h.magic.data(), 3);
  if (magic == "ni1" && h.magic[3] == '\0') throw Error(Errc::HeaderOnlyFile, "two-file NIfTI (.hdr/.img) is not supported");
  if (magic != "n+1" || h.magic[3] != '\0') throw Error(Errc::BadMagic, "expected \"n+1\\0\"");

  h.byte_order = detect_endianness(raw);
  const bool swap = (h.byte_order == Endianness::Little) != (std::endian::native == std::endian::little);
  const unsigned char* p = raw.data();
  for (int i = 0; i < 8; ++i) h.dim[i] = detail::load<std::int16_t>(p + 40 + 2 * i, swap);
  h.datatype = detail::load<std::int16_t>(p + 70, swap);
  h.bitpix = detail::load<std::int16_t>(p + 72, swap);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = detail::load<float>(p + 76 + 4 * i, swap);
  h.vox_offset = detail::load<float>(p + 108, swap);
  h.scl_slope = detail::load<float>(p + 112, swap);
  h.scl_inter = detail::load<float>(p + 116, swap);
  h.qform_code = detail::load<std::int16_t>(p + 252, swap);
  h.sform_code = detail::load<std::int16_t>(p + 254, swap);
  for (int i = 0; i < 4; ++i) {
    h.srow_x[i] = detail::load<float>(p + 280 + 4 * i, swap);
    h.srow_y[i] = detail::load<float>(p + 296 + 4 * i, swap);
    h.srow_z[i] = detail::load<float>(p + 312 + 4 * i, swap);
  }
  const char* d = reinterpret_cast<const char*>(p + 148);
  h.descrip.assign(d, strnlen(d, 80));
  return h;
}

inline Modality modality_from_descrip(std::string_view descrip) {
  if (descrip.find("modality=CT") != std::string_view::npos) return Modality::CT;
  if (descrip.find("modality=MR") != std::string_view::npos) return Modality::MR;
  return Modality::Unknown;
}

// Decodes a complete in-memory file (already gunzipped).
inline Volume decode(const std::vector<unsigned char>& bytes, NiftiHeader* header_out = nullptr) {
  const NiftiHeader h = parse_header(bytes);
  const bool swap = (h.byte_order == Endianness::Little) != (std::endian::native == std::endian::little);
  Dims3 dims{1, 1, 1};
  for (int i = 1; i <= std::min<int>(3, h.dim[0]); ++i) {
    if (h.dim[i] < 1) throw Error(Errc::InvalidArgument, "dim[" + std::to_string(i) + "] < 1");
    dims[i - 1] = h.dim[i];
  }
  const std::size_t elem = detail::datatype_size(h.datatype);
  const std::size_t count = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  if (!(h.vox_offset >= 0.0f)) throw Error(Errc::InvalidArgument, "negative vox_offset");
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < kHeaderSize || bytes.size() < offset || bytes.size() - offset < count * elem)
    throw Error(Errc::TruncatedData, "payload holds fewer than " + std::to_string(count) + " voxels");

  const bool scale = h.scl_slope != 0.0f;
  const double slope = h.scl_slope, inter = h.scl_inter;
  Volume vol;
  vol.data = Array3<double>(dims);
  for (int i = 0; i < 3; ++i) {
    const double s = h.dim[0] > i ? std::fabs(static_cast<double>(h.pixdim[i + 1])) : 1.0;
    vol.spacing[i] = s > 0.0 && std::isfinite(s) ? s : 1.0;
  }
  vol.modality = modality_from_descrip(h.descrip);

  const unsigned char* src = bytes.data() + offset;
  auto raw_at = [&](std::size_t n) -> double {
    const unsigned char* q = src + n * elem;
    switch (h.datatype) {
      case kUInt8: return static_cast<double>(*q);
      case kInt16: return detail::load<std::int16_t>(q, swap);
      case kInt32: return detail::load<std::int32_t>(q, swap);
      case kFloat32: return detail::load<float>(q, swap);
      default: return detail::load<double>(q, swap);
    }
  };
  // NIfTI stores x fastest.
  std::size_t n = 0;
  for (std::int64_t z = 0; z < dims[2]; ++z)
    for (std::int64_t y = 0; y < dims[1]; ++y)
      for (std::int64_t x = 0; x < dims[0]; ++x, ++n) {
        const double v = raw_at(n);
        vol.data(x, y, z) = scale ? slope * v + inter : v;
      }
  if (header_out) *header_out = h;
  return vol;
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  auto bytes = detail::read_file(path);
  if (detail::is_gzip(bytes)) bytes = detail::gunzip(bytes);
  return bytes;
}

inline std::vector<unsigned char> encode(const Volume& vol) {
  const Dims3 d = vol.data.dims();
  for (auto n : d)
    if (n > 32767) throw Error(Errc::InvalidArgument, "NIfTI-1 dims are limited to 32767");
  const std::size_t count = vol.data.size();
  std::vector<unsigned char> out(kWriteVoxOffset + count * 4, 0);
  unsigned char* p = out.data();
  detail::store_le<std::int32_t>(p + 0, 348);
  detail::store_le<std::int16_t>(p + 40, 3);
  for (int i = 0; i < 3; ++i) detail::store_le<std::int16_t>(p + 42 + 2 * i, static_cast<std::int16_t>(d[i]));
  for (int i = 4; i < 8; ++i) detail::store_le<std::int16_t>(p + 40 + 2 * i, 1);
  detail::store_le<std::int16_t>(p + 70, kFloat32);
  detail::store_le<std::int16_t>(p + 72, 32);
  detail::store_le<float>(p + 76, 1.0f);
  for (int i = 0; i < 3; ++i) detail::store_le<float>(p + 80 + 4 * i, static_cast<float>(vol.spacing[i]));
  for (int i = 4; i < 8; ++i) detail::store_le<float>(p + 76 + 4 * i, 1.0f);
  detail::store_le<float>(p + 108, static_cast<float>(kWriteVoxOffset));
  detail::store_le<float>(p + 112, 1.0f);
  detail::store_le<float>(p + 116, 0.0f);
  p[123] = 2;  // xyzt_units: mm
  if (vol.modality != Modality::Unknown) {
    const std::string desc = "modality=" + std::string(modality_name(vol.modality));
    std::memcpy(p + 148, desc.data(), desc.size());
  }
  std::memcpy(p + 344, "n+1\0", 4);

  unsigned char* dst = p + kWriteVoxOffset;
  for (std::int64_t z = 0; z < d[2]; ++z)
    for (std::int64_t y = 0; y < d[1]; ++y)
      for (std::int64_t x = 0; x < d[0]; ++x, dst += 4)
        detail::store_le<float>(dst, static_cast<float>(vol.data(x, y, z)));
  return out;
}

}  // namespace nifti

inline Volume read_nifti(const std::filesystem::path& path, NiftiHeader* header_out = nullptr) {
  return nifti::decode(nifti::read_bytes(path), header_out);
}

// Always float32 with unit slope; a ".gz" suffix selects gzip wrapping.
inline void write_nifti(const Volume& vol, const std::filesystem::path& path) {
  auto bytes = nifti::encode(vol);
  if (path.extension() == ".gz") bytes = nifti::detail::gzip(bytes);
  nifti::detail::write_file(path, bytes);
}

inline bool is_nifti_path(const std::filesystem::path& p) {
  const std::string name = p.filename().string();
  auto ends_with = [&](std::string_view s) {
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with(".nii") || ends_with(".nii.gz");
}

// "scan01.nii.gz" -> "scan01"
inline std::string nifti_basename(const std::filesystem::path& p) {
  std::string name = p.filename().string();
  for (std::string_view ext : {".nii.gz", ".nii"}) {
    if (name.size() > ext.size() && name.compare(name.size() - ext.size(), ext.size(), ext) == 0)
      return name.substr(0, name.size() - ext.size());
  }
  return p.stem().string();
}

}  // namespace voxdet
