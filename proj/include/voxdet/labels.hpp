// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Box labels from segmentation masks, offline axial-rotation augmentation,
// and the plain-text label file format ("class zc xc yc dz dx dy").
#pragma once

#include <charconv>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "voxdet/array3.hpp"
#include "voxdet/box.hpp"
#include "voxdet/preprocess.hpp"

namespace voxdet {

// (z, x, y) label grid; 0 is background, value k > 0 marks class k - 1.
using Mask = Array3<std::int32_t>;

enum class BoxMode { PerComponent, PerClassUnion, GlobalUnion };

inline BoxMode parse_box_mode(std::string_view s) {
  if (s == "component") return BoxMode::PerComponent;
  if (s == "class") return BoxMode::PerClassUnion;
  if (s == "global") return BoxMode::GlobalUnion;
  throw Error(Errc::InvalidArgument, "box mode must be component, class or global");
}

namespace detail {

struct VoxelExtent {
  std::array<std::int64_t, 3> lo{INT64_MAX, INT64_MAX, INT64_MAX};
  std::array<std::int64_t, 3> hi{-1, -1, -1};  // inclusive

  void add(std::int64_t i, std::int64_t j, std::int64_t k) {
    const std::array<std::int64_t, 3> p{i, j, k};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  bool valid() const { return hi[0] >= 0; }

  Box3 to_box(int cls, const Dims3& dims) const {
    VoxelBox vb;
    vb.class_id = cls;
    for (int a = 0; a < 3; ++a) {
      vb.lo[a] = static_cast<double>(lo[a]);
      vb.hi[a] = static_cast<double>(hi[a] + 1);
    }
    return box_original_to_cube(vb, dims);
  }
};

}  // namespace detail

inline std::vector<Box3> mask_to_boxes(const Mask& mask, BoxMode mode) {
  const Dims3 d = mask.dims();
  std::vector<Box3> boxes;

  if (mode == BoxMode::GlobalUnion || mode == BoxMode::PerClassUnion) {
    std::map<std::int32_t, detail::VoxelExtent> per_class;
    detail::VoxelExtent all;
    for (std::int64_t i = 0; i < d[0]; ++i)
      for (std::int64_t j = 0; j < d[1]; ++j)
        for (std::int64_t k = 0; k < d[2]; ++k) {
          const auto v = mask(i, j, k);
          if (v < 0) throw Error(Errc::InvalidArgument, "negative mask label");
          if (v == 0) continue;
          all.add(i, j, k);
          if (mode == BoxMode::PerClassUnion) per_class[v].add(i, j, k);
        }
    if (!all.valid()) throw Error(Errc::EmptyMask, "mask has no foreground voxels");
    if (mode == BoxMode::GlobalUnion) return {all.to_box(0, d)};
    for (const auto& [label, ext] : per_class) boxes.push_back(ext.to_box(label - 1, d));
    return boxes;
  }

  // 26-connected components in scan order.
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::deque<std::array<std::int64_t, 3>> queue;
  for (std::int64_t i = 0; i < d[0]; ++i)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t k = 0; k < d[2]; ++k) {
        const auto v0 = mask(i, j, k);
        if (v0 < 0) throw Error(Errc::InvalidArgument, "negative mask label");
        if (v0 == 0 || seen[mask.index(i, j, k)]) continue;
        detail::VoxelExtent ext;
        std::map<std::int32_t, std::int64_t> votes;
        seen[mask.index(i, j, k)] = 1;
        queue.push_back({i, j, k});
        while (!queue.empty()) {
          const auto p = queue.front();
          queue.pop_front();
          ext.add(p[0], p[1], p[2]);
          ++votes[mask(p[0], p[1], p[2])];
          for (std::int64_t di = -1; di <= 1; ++di)
            for (std::int64_t dj = -1; dj <= 1; ++dj)
              for (std::int64_t dk = -1; dk <= 1; ++dk) {
                const std::int64_t a = p[0] + di, b = p[1] + dj, c = p[2] + dk;
                if (a < 0 || b < 0 || c < 0 || a >= d[0] || b >= d[1] || c >= d[2]) continue;
                const auto idx = mask.index(a, b, c);
                if (seen[idx] || mask(a, b, c) == 0) continue;
                seen[idx] = 1;
                queue.push_back({a, b, c});
              }
        }
        // majority label, ties to the lowest label
        std::int32_t best = 0;
        std::int64_t best_n = -1;
        for (const auto& [label, n] : votes)
          if (n > best_n) best = label, best_n = n;
        boxes.push_back(ext.to_box(best - 1, d));
      }
  if (boxes.empty()) throw Error(Errc::EmptyMask, "mask has no foreground voxels");
  return boxes;
}

struct RotatedPair {
  Array3<double> image;
  Mask mask;
};

// Rotates every axial (x, y) slice of a (z, x, y) grid about the slice centre.
// Image: bilinear, out-of-bounds filled with the image minimum. Mask: nearest, fill 0.
inline RotatedPair rotate_axial(const Array3<double>& image, const Mask& mask, double angle_deg) {
  if (!std::isfinite(angle_deg)) throw Error(Errc::InvalidArgument, "rotation angle must be finite");
  if (image.dims() != mask.dims()) throw Error(Errc::ShapeMismatch, "image and mask dims differ");
  const auto [nz, nx, ny] = image.dims();
  RotatedPair out{Array3<double>(image.dims()), Mask(mask.dims())};
  const double fill = image.min();
  const double rad = angle_deg * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cx = 0.5 * static_cast<double>(nx - 1), cy = 0.5 * static_cast<double>(ny - 1);
  constexpr double kEdge = 1e-9;

  for (std::int64_t x = 0; x < nx; ++x)
    for (std::int64_t y = 0; y < ny; ++y) {
      // inverse map output -> source
      const double px = static_cast<double>(x) - cx, py = static_cast<double>(y) - cy;
      double sx = cs * px + sn * py + cx;
      double sy = -sn * px + cs * py + cy;
      const bool inside = sx >= -kEdge && sy >= -kEdge && sx <= static_cast<double>(nx - 1) + kEdge &&
                          sy <= static_cast<double>(ny - 1) + kEdge;
      const auto rx = static_cast<std::int64_t>(std::lround(sx));
      const auto ry = static_cast<std::int64_t>(std::lround(sy));
      const bool nn_inside = rx >= 0 && ry >= 0 && rx < nx && ry < ny;
      sx = std::clamp(sx, 0.0, static_cast<double>(nx - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(ny - 1));
      const auto x0 = static_cast<std::int64_t>(std::floor(sx));
      const auto y0 = static_cast<std::int64_t>(std::floor(sy));
      const std::int64_t x1 = std::min(x0 + 1, nx - 1), y1 = std::min(y0 + 1, ny - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::int64_t z = 0; z < nz; ++z) {
        if (inside) {
          const double v0 = (1.0 - fy) * image(z, x0, y0) + fy * image(z, x0, y1);
          const double v1 = (1.0 - fy) * image(z, x1, y0) + fy * image(z, x1, y1);
          out.image(z, x, y) = (1.0 - fx) * v0 + fx * v1;
        } else {
          out.image(z, x, y) = fill;
        }
        out.mask(z, x, y) = nn_inside ? mask(z, rx, ry) : 0;
      }
    }
  return out;
}

struct RotatedExample {
  Array3<double> image;
  Mask mask;
  std::vector<Box3> boxes;
  double angle_deg = 0.0;
  bool original = false;
};

inline std::vector<Box3> boxes_or_empty(const Mask& mask, BoxMode mode) {
  try {
    return mask_to_boxes(mask, mode);
  } catch (const Error& e) {
    if (e.code() == Errc::EmptyMask) return {};
    throw;
  }
}

// One example per base angle (each jittered by U(-jitter, +jitter)) plus the
// untouched original.
inline std::vector<RotatedExample> gen_rotated_set(const Array3<double>& image, const Mask& mask,
                                                   const std::vector<double>& base_angles, double jitter_deg,
                                                   std::uint64_t seed, BoxMode mode = BoxMode::PerClassUnion) {
  if (!(jitter_deg >= 0.0)) throw Error(Errc::InvalidArgument, "jitter must be >= 0");
  Rng rng(seed);
  std::vector<RotatedExample> out;
  out.reserve(base_angles.size() + 1);
  for (double base : base_angles) {
    const double angle = base + rng.uniform(-jitter_deg, jitter_deg);
    auto rot = rotate_axial(image, mask, angle);
    auto boxes = boxes_or_empty(rot.mask, mode);
    out.push_back({std::move(rot.image), std::move(rot.mask), std::move(boxes), angle, false});
  }
  out.push_back({image, mask, boxes_or_empty(mask, mode), 0.0, true});
  return out;
}

inline const std::vector<double>& default_rotation_angles() {
  static const std::vector<double> angles{0.0, 8.0, -8.0, 17.0, -17.0};
  return angles;
}
inline constexpr double kDefaultRotationJitter = 3.0;

inline std::string format_label_line(const Box3& b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f %.6f %.6f", b.class_id, b.center[0], b.center[1],
                b.center[2], b.extent[0], b.extent[1], b.extent[2]);
  return buf;
}

inline void write_labels(const std::filesystem::path& path, const std::vector<Box3>& boxes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  for (const auto& b : boxes) out << format_label_line(b) << '\n';
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t s = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > s) out.push_back(line.substr(s, i - s));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& v) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace detail

struct Record {
  int line = 0;
  std::vector<double> values;
};

// Parses whitespace-separated records of `fields` numbers; the first is an
// integer class id. Blank lines are skipped.
inline std::vector<Record> read_records(const std::filesystem::path& path, std::size_t fields) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::vector<Record> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& why) {
      return Error(Errc::ParseError, path.filename().string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (tok.size() != fields)
      throw fail("expected " + std::to_string(fields) + " fields, got " + std::to_string(tok.size()));
    Record r{line_no, std::vector<double>(fields)};
    int cls = 0;
    if (!detail::parse_number(tok[0], cls) || cls < 0) throw fail("bad class id");
    r.values[0] = cls;
    for (std::size_t f = 1; f < fields; ++f)
      if (!detail::parse_number(tok[f], r.values[f]) || !std::isfinite(r.values[f])) throw fail("bad number");
    rows.push_back(std::move(r));
  }
  return rows;
}

// Reads `count` normalized box fields starting at `first`.
inline Box3 record_box(const Record& r, std::size_t first, const std::filesystem::path& path) {
  Box3 b;
  b.class_id = static_cast<int>(r.values[0]);
  for (int a = 0; a < 3; ++a) {
    b.center[a] = r.values[first + a];
    b.extent[a] = r.values[first + 3 + a];
    if (!(b.extent[a] > 0.0) || b.center[a] < 0.0 || b.center[a] > 1.0)
      throw Error(Errc::ParseError,
                  path.filename().string() + ":" + std::to_string(r.line) + ": not a valid normalized box");
  }
  return b;
}

inline std::vector<Box3> read_labels(const std::filesystem::path& path) {
  std::vector<Box3> boxes;
  for (const auto& r : read_records(path, 7)) boxes.push_back(record_box(r, 1, path));
  return boxes;
}

}  // namespace voxdet
