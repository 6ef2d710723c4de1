// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Model description files. YAML with the layer-row layout
//   [from, repeats, kind, args]
// under `backbone` and `head`, plus depth_multiple / width_multiple / nc /
// anchors. `anchors` is either an integer k (fit by k-means from the training
// labels before training) or one flat list of dz,dx,dy triples per scale.
#pragma once

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voxdet/anchors.hpp"
#include "voxdet/common.hpp"

namespace voxdet {

enum class LayerKind { Conv, C3, SPPF, Upsample, Concat, Detect };

inline std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "Conv";
    case LayerKind::C3: return "C3";
    case LayerKind::SPPF: return "SPPF";
    case LayerKind::Upsample: return "Upsample";
    case LayerKind::Concat: return "Concat";
    case LayerKind::Detect: return "Detect";
  }
  return "?";
}

struct LayerSpec {
  std::vector<int> from;  // absolute indices, -1 = network input
  int repeats = 1;        // after depth_multiple
  LayerKind kind = LayerKind::Conv;
  std::vector<std::string> args;  // raw scalars as written
};

struct ModelSpec {
  std::vector<LayerSpec> layers;
  double depth_multiple = 1.0;
  double width_multiple = 1.0;
  int num_classes = 1;
  int input_channels = 1;
  int anchor_count = kDefaultAnchorCount;
  AnchorSet anchors;  // empty until fitted or given explicitly
  std::string text;   // original config text

  const LayerSpec& detect() const { return layers.back(); }
  int num_scales() const { return static_cast<int>(detect().from.size()); }
  int anchors_per_scale() const { return anchor_count / num_scales(); }
  bool anchors_resolved() const { return anchors.size() == static_cast<std::size_t>(anchor_count); }
};

// Nearest multiple of 8, at least 8.
inline int scale_channels(double c, double width_multiple) {
  const double v = c * width_multiple / 8.0;
  return std::max(8, static_cast<int>(std::floor(v + 0.5)) * 8);
}

inline int scale_repeats(int n, double depth_multiple) {
  return n > 1 ? std::max(static_cast<int>(std::lround(n * depth_multiple)), 1) : n;
}

namespace detail {

inline LayerKind parse_kind(const std::string& s, int index) {
  if (s == "Conv") return LayerKind::Conv;
  if (s == "C3") return LayerKind::C3;
  if (s == "SPPF") return LayerKind::SPPF;
  if (s == "Upsample" || s == "nn.Upsample") return LayerKind::Upsample;
  if (s == "Concat") return LayerKind::Concat;
  if (s == "Detect") return LayerKind::Detect;
  throw Error(Errc::UnknownLayerKind, "layer " + std::to_string(index) + ": '" + s + "'");
}

}  // namespace detail

inline ModelSpec parse_model_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(Errc::ParseError, std::string("model config: ") + e.what());
  }
  if (!root.IsMap()) throw Error(Errc::ParseError, "model config must be a mapping");
  ModelSpec spec;
  spec.text = text;
  try {
    spec.depth_multiple = root["depth_multiple"].as<double>(1.0);
    spec.width_multiple = root["width_multiple"].as<double>(1.0);
    spec.num_classes = root["nc"].as<int>(1);
    spec.input_channels = root["ch"].as<int>(1);
  } catch (const YAML::Exception& e) {
    throw Error(Errc::ParseError, std::string("model config: ") + e.what());
  }
  if (spec.num_classes < 1) throw Error(Errc::ParseError, "nc must be >= 1");

  std::vector<std::vector<double>> anchor_rows;
  const YAML::Node an = root["anchors"];
  if (!an || an.IsNull()) {
    spec.anchor_count = kDefaultAnchorCount;
  } else if (an.IsScalar()) {
    spec.anchor_count = an.as<int>();
  } else if (an.IsSequence()) {
    for (const auto& row : an) anchor_rows.push_back(row.as<std::vector<double>>());
  } else {
    throw Error(Errc::ParseError, "anchors must be an integer or a list of per-scale lists");
  }

  int index = 0;
  for (const char* section : {"backbone", "head"}) {
    const YAML::Node rows = root[section];
    if (!rows) continue;
    if (!rows.IsSequence()) throw Error(Errc::ParseError, std::string(section) + " must be a list");
    for (const auto& row : rows) {
      if (!row.IsSequence() || row.size() != 4)
        throw Error(Errc::ParseError, "layer " + std::to_string(index) + ": expected [from, repeats, kind, args]");
      LayerSpec ls;
      std::vector<int> from;
      if (row[0].IsSequence()) {
        from = row[0].as<std::vector<int>>();
      } else {
        from = {row[0].as<int>()};
      }
      for (int f : from) {
        const int abs = f < 0 ? index + f : f;
        // -1 from layer 0 refers to the network input
        if (f < 0 && abs == -1 && index == 0) {
          ls.from.push_back(-1);
          continue;
        }
        if (abs < 0 || abs >= index)
          throw Error(Errc::DanglingReference, "layer " + std::to_string(index) + " references " + std::to_string(f));
        ls.from.push_back(abs);
      }
      ls.kind = detail::parse_kind(row[2].as<std::string>(), index);
      ls.repeats = scale_repeats(row[1].as<int>(), spec.depth_multiple);
      if (row[3].IsSequence()) {
        for (const auto& a : row[3]) ls.args.push_back(a.IsNull() ? std::string("None") : a.as<std::string>());
      }
      spec.layers.push_back(std::move(ls));
      ++index;
    }
  }
  if (spec.layers.empty()) throw Error(Errc::MissingDetect, "config has no layers");
  int detects = 0;
  for (const auto& l : spec.layers) detects += l.kind == LayerKind::Detect;
  if (detects != 1 || spec.layers.back().kind != LayerKind::Detect)
    throw Error(Errc::MissingDetect, "exactly one Detect layer must close the config");
  const int scales = spec.num_scales();
  if (scales < 1) throw Error(Errc::MissingDetect, "Detect consumes no feature maps");

  if (!anchor_rows.empty()) {
    if (static_cast<int>(anchor_rows.size()) != scales)
      throw Error(Errc::ParseError, "anchors list has " + std::to_string(anchor_rows.size()) + " rows for " +
                                        std::to_string(scales) + " scales");
    std::vector<Extent3> all;
    for (const auto& r : anchor_rows) {
      if (r.empty() || r.size() % 3 != 0 || r.size() != anchor_rows.front().size())
        throw Error(Errc::ParseError, "each anchor row needs the same number of dz,dx,dy triples");
      for (std::size_t i = 0; i < r.size(); i += 3) {
        const Extent3 e{r[i], r[i + 1], r[i + 2]};
        for (double v : e)
          if (!(v > 0.0)) throw Error(Errc::NonPositiveExtent, "anchor extents must be > 0");
        all.push_back(e);
      }
    }
    spec.anchor_count = static_cast<int>(all.size());
    spec.anchors.anchors = all;
    spec.anchors.per_scale.assign(static_cast<std::size_t>(scales), static_cast<int>(anchor_rows.front().size() / 3));
  }
  if (spec.anchor_count < scales || spec.anchor_count % scales != 0)
    throw Error(Errc::ParseError, "anchor count " + std::to_string(spec.anchor_count) + " not divisible by " +
                                      std::to_string(scales) + " scales");
  return spec;
}

inline ModelSpec load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str());
}

// Grid sides of the detection scales for a cube side: every stride-2 stage
// (3x3x3 kernel, padding 1) maps n to ceil(n / 2); scales sit after 3, 4 and 5 stages.
inline std::vector<std::int64_t> feature_shapes(std::int64_t side, int num_scales = kDefaultDetectScales) {
  if (side < kMinCubeSide)
    throw Error(Errc::SideTooSmall, "cube side " + std::to_string(side) + " < " + std::to_string(kMinCubeSide));
  std::vector<std::int64_t> out;
  std::int64_t n = side;
  const int deepest = 5, first = deepest - num_scales + 1;
  for (int stage = 1; stage <= deepest; ++stage) {
    n = (n + 1) / 2;
    if (stage >= first) out.push_back(n);
  }
  return out;
}

}  // namespace voxdet
