// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic labeled volumes: Gaussian background plus additive-offset
// objects, written as a NIfTI dataset with a patient-level train/val split.
#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

#include "voxdet/labels.hpp"
#include "voxdet/nifti.hpp"

namespace voxdet {

enum class PhantomShape { Sphere, Ellipsoid, Box };

inline std::string_view phantom_shape_name(PhantomShape s) {
  switch (s) {
    case PhantomShape::Sphere: return "sphere";
    case PhantomShape::Ellipsoid: return "ellipsoid";
    case PhantomShape::Box: return "box";
  }
  return "?";
}

inline PhantomShape parse_phantom_shape(std::string_view s) {
  if (s == "sphere") return PhantomShape::Sphere;
  if (s == "ellipsoid") return PhantomShape::Ellipsoid;
  if (s == "box") return PhantomShape::Box;
  throw Error(Errc::InvalidArgument, "unknown phantom shape '" + std::string(s) + "'");
}

struct PhantomSpec {
  std::int64_t side = 96;
  std::array<int, 2> num_objects{1, 3};
  std::vector<PhantomShape> shapes{PhantomShape::Sphere};  // class id = position in this list
  std::array<double, 2> radius{0.08, 0.20};                 // fraction of side
  std::array<double, 2> intensity{4.0, 6.0};                // additive offset
  double noise_sigma = 1.0;
  double min_gap = 2.0;  // voxels between the bounding spheres of two objects
  int max_attempts = 1000;

  void validate() const {
    if (side < 4 || num_objects[0] < 0 || num_objects[1] < num_objects[0] || shapes.empty() || !(radius[0] > 0.0) ||
        radius[1] < radius[0] || radius[1] >= 0.5 || intensity[1] < intensity[0] || noise_sigma < 0.0)
      throw Error(Errc::InvalidArgument, "invalid phantom spec");
  }
};

struct PhantomObject {
  int class_id = 0;
  PhantomShape shape = PhantomShape::Sphere;
  Vec3 center{};  // (z, x, y) voxel units, continuous
  Vec3 radii{};   // per-axis half-size in voxels
  double offset = 0.0;
};

struct Phantom {
  Volume volume;  // (x, y, z)
  Mask mask;      // (z, x, y)
  std::vector<Box3> boxes;
  std::vector<PhantomObject> objects;
};

// Voxel (i, j, k) has center (i + 0.5, j + 0.5, k + 0.5).
inline bool phantom_contains(const PhantomObject& o, std::int64_t i, std::int64_t j, std::int64_t k) {
  const double p[3] = {static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5, static_cast<double>(k) + 0.5};
  if (o.shape == PhantomShape::Box) {
    for (int a = 0; a < 3; ++a)
      if (std::abs(p[a] - o.center[a]) > o.radii[a]) return false;
    return true;
  }
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - o.center[a]) / o.radii[a];
    s += u * u;
  }
  return s <= 1.0;
}

// Renders objects onto a (z, x, y) image and mask; label = class + 1.
inline void render_objects(const std::vector<PhantomObject>& objects, Array3<double>& image, Mask& mask) {
  const auto& d = image.dims();
  for (const auto& o : objects) {
    std::int64_t lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(o.center[a] - o.radii[a])) - 1);
      hi[a] = std::min<std::int64_t>(d[a], static_cast<std::int64_t>(std::ceil(o.center[a] + o.radii[a])) + 1);
    }
    for (std::int64_t i = lo[0]; i < hi[0]; ++i)
      for (std::int64_t j = lo[1]; j < hi[1]; ++j)
        for (std::int64_t k = lo[2]; k < hi[2]; ++k)
          if (phantom_contains(o, i, j, k)) {
            image(i, j, k) += o.offset;
            mask(i, j, k) = o.class_id + 1;
          }
  }
}

inline Phantom gen_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const double D = static_cast<double>(spec.side);
  Phantom ph;
  const auto count = rng.uniform_int(spec.num_objects[0], spec.num_objects[1]);
  for (std::int64_t n = 0; n < count; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      PhantomObject o;
      o.class_id = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(spec.shapes.size()) - 1));
      o.shape = spec.shapes[static_cast<std::size_t>(o.class_id)];
      const double r = rng.uniform(spec.radius[0], spec.radius[1]) * D;
      for (int a = 0; a < 3; ++a) o.radii[a] = o.shape == PhantomShape::Sphere ? r : r * rng.uniform(0.6, 1.0);
      for (int a = 0; a < 3; ++a) o.center[a] = rng.uniform(r + 1.0, D - r - 1.0);
      o.offset = rng.uniform(spec.intensity[0], spec.intensity[1]);
      // bounding radius of a box is its half-diagonal
      auto reach = [](const PhantomObject& q) {
        const double m = std::max({q.radii[0], q.radii[1], q.radii[2]});
        return q.shape == PhantomShape::Box ? std::sqrt(q.radii[0] * q.radii[0] + q.radii[1] * q.radii[1] + q.radii[2] * q.radii[2]) : m;
      };
      placed = true;
      for (const auto& other : ph.objects) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) d2 += (o.center[a] - other.center[a]) * (o.center[a] - other.center[a]);
        if (std::sqrt(d2) < reach(o) + reach(other) + spec.min_gap) {
          placed = false;
          break;
        }
      }
      if (placed) ph.objects.push_back(o);
    }
    if (!placed)
      throw Error(Errc::PlacementFailed, "could not place object " + std::to_string(n + 1) + " after " +
                                             std::to_string(spec.max_attempts) + " attempts");
  }
  Array3<double> image(spec.side, spec.side, spec.side);
  for (auto& v : image.raw()) v = spec.noise_sigma * rng.normal();
  ph.mask = Mask(spec.side, spec.side, spec.side, 0);
  render_objects(ph.objects, image, ph.mask);
  ph.volume.data = transpose_xyz(image);
  ph.volume.modality = Modality::MR;
  ph.boxes = boxes_or_empty(ph.mask, BoxMode::PerComponent);
  return ph;
}

struct ManifestEntry {
  std::string id;
  std::string split;  // "train" or "val"
  std::size_t objects = 0;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> scans;

  std::vector<std::string> ids(std::string_view split) const {
    std::vector<std::string> out;
    for (const auto& s : scans)
      if (s.split == split) out.push_back(s.id);
    return out;
  }
};

inline std::string patient_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "P%04zu", i);
  return buf;
}

// Seeded shuffle of patient indices; the first round(n * train_frac) are training patients.
inline std::vector<bool> patient_split(std::size_t n, double train_frac, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::mix(seed, 0x5E1175ULL));
  for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
  std::vector<bool> train(n, false);
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_frac));
  for (std::size_t k = 0; k < n_train; ++k) train[order[k]] = true;
  return train;
}

inline nlohmann::ordered_json manifest_json(const DatasetManifest& m, const PhantomSpec& spec) {
  using J = nlohmann::ordered_json;
  J shapes = J::array();
  for (auto s : spec.shapes) shapes.push_back(std::string(phantom_shape_name(s)));
  J scans = J::array();
  for (const auto& s : m.scans)
    scans.push_back(J{{"id", s.id},
                      {"split", s.split},
                      {"image", "images/" + s.id + ".nii.gz"},
                      {"label", "labels/" + s.id + ".txt"},
                      {"mask", "masks/" + s.id + ".nii.gz"},
                      {"objects", s.objects}});
  return J{{"seed", m.seed},
           {"n", m.scans.size()},
           {"spec",
            J{{"side", spec.side},
              {"num_objects", spec.num_objects},
              {"shapes", shapes},
              {"radius", spec.radius},
              {"intensity", spec.intensity},
              {"noise_sigma", spec.noise_sigma},
              {"min_gap", spec.min_gap}}},
           {"train", m.ids("train")},
           {"val", m.ids("val")},
           {"scans", scans}};
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("scans"))
      m.scans.push_back({s.at("id").get<std::string>(), s.at("split").get<std::string>(), s.at("objects").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return m;
}

// Writes images/, labels/, masks/ and manifest.json under out_dir.
inline DatasetManifest gen_dataset(std::size_t n, const PhantomSpec& spec, std::uint64_t seed,
                                   const std::filesystem::path& out_dir, double train_frac = 0.8) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"images", "labels", "masks"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  const auto train = patient_split(n, train_frac, seed);
  DatasetManifest m;
  m.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = patient_id(i);
    const Phantom ph = gen_phantom(spec, Rng::mix(seed, i));
    write_nifti(ph.volume, out_dir / "images" / (id + ".nii.gz"));
    Volume mv;
    mv.data = transpose_xyz(ph.mask).cast<double>();
    mv.modality = Modality::MR;
    write_nifti(mv, out_dir / "masks" / (id + ".nii.gz"));
    write_labels(out_dir / "labels" / (id + ".txt"), ph.boxes);
    m.scans.push_back({id, train[i] ? "train" : "val", ph.boxes.size()});
  }
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write manifest");
  out << manifest_json(m, spec).dump(2) << '\n';
  return m;
}

}  // namespace voxdet
