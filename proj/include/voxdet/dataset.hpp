// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scan discovery, label pairing, and the cube cache.
#pragma once

#include <zlib.h>

#include <cstdlib>
#include <filesystem>

#include "voxdet/labels.hpp"
#include "voxdet/nifti.hpp"
#include "voxdet/parallel.hpp"
#include "voxdet/preprocess.hpp"

namespace voxdet {

struct Sample {
  std::string id;           // scan basename
  Array3<double> cube;      // (z, x, y), resampled, not normalized
  Dims3 source_dims{};      // (x, y, z) of the scan
  Modality modality = Modality::Unknown;
  std::vector<Box3> boxes;  // empty when unlabeled
};

// NIfTI files in a directory, sorted by basename.
inline std::vector<std::filesystem::path> list_scans(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(Errc::IoFailure, dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_nifti_path(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return nifti_basename(a) < nifti_basename(b); });
  return out;
}

// Environment-selected cache directory for resampled cubes; empty when unset.
inline std::filesystem::path cache_dir() {
  const char* v = std::getenv("VOXDET_CACHE");
  return v && *v ? std::filesystem::path(v) : std::filesystem::path();
}

namespace detail {

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

}  // namespace detail

struct LoadedScan {
  Array3<double> cube;
  Dims3 source_dims{};
  Modality modality = Modality::Unknown;
  bool from_cache = false;
};

// Reads and resamples one scan. With a cache directory, cubes are keyed by
// basename, side and a CRC of the source bytes, and stored as float32 NIfTI.
inline LoadedScan load_cube(const std::filesystem::path& scan, std::int64_t side,
                            const std::filesystem::path& cache = {}) {
  const auto bytes = nifti::read_bytes(scan);
  NiftiHeader header;
  LoadedScan out;
  std::filesystem::path key;
  if (!cache.empty()) {
    const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
    key = cache / (nifti_basename(scan) + "." + std::to_string(side) + "." + detail::hex32(crc) + ".nii");
    std::error_code ec;
    if (std::filesystem::exists(key, ec)) {
      Volume cached = read_nifti(key);
      Volume src = nifti::decode(bytes, &header);
      out.cube = transpose_zxy(cached.data);
      out.source_dims = src.source_dims();
      out.modality = src.modality;
      out.from_cache = true;
      return out;
    }
  }
  const Volume vol = nifti::decode(bytes, &header);
  Cube c = to_cube(vol, side);
  out.cube = std::move(c.data);
  out.source_dims = vol.source_dims();
  out.modality = vol.modality;
  if (!key.empty()) {
    std::filesystem::create_directories(key.parent_path());
    Volume v;
    v.data = transpose_xyz(out.cube);
    v.modality = out.modality;
    write_nifti(v, key);
    // the cache stores float32; reload so cached and uncached runs see identical values
    out.cube = transpose_zxy(read_nifti(key).data);
  }
  return out;
}

// Loads the scans named by `ids` (all scans when empty) with labels from
// labels_dir/<id>.txt. A scan without a label file is LabelMismatch.
inline std::vector<Sample> load_samples(const std::filesystem::path& images_dir, const std::filesystem::path& labels_dir,
                                        std::int64_t side, const std::vector<std::string>& ids = {}, int threads = 1,
                                        bool require_labels = true) {
  std::vector<std::filesystem::path> scans;
  const auto all = list_scans(images_dir);
  if (ids.empty()) {
    scans = all;
  } else {
    std::map<std::string, std::filesystem::path> by_id;
    for (const auto& p : all) by_id[nifti_basename(p)] = p;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(Errc::IoFailure, "scan " + id + " not found in " + images_dir.string());
      scans.push_back(it->second);
    }
  }
  std::vector<Sample> out(scans.size());
  for (std::size_t i = 0; i < scans.size(); ++i) {
    out[i].id = nifti_basename(scans[i]);
    const auto label = labels_dir / (out[i].id + ".txt");
    if (!labels_dir.empty() && std::filesystem::exists(label)) {
      out[i].boxes = read_labels(label);
    } else if (require_labels) {
      throw Error(Errc::LabelMismatch, "no label file for scan " + out[i].id);
    }
  }
  const auto cache = cache_dir();
  parallel_for(scans.size(), threads, [&](std::size_t i) {
    auto loaded = load_cube(scans[i], side, cache);
    out[i].cube = std::move(loaded.cube);
    out[i].source_dims = loaded.source_dims;
    out[i].modality = loaded.modality;
  });
  return out;
}

}  // namespace voxdet
