// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <set>

#include "voxdet/augment.hpp"
#include "voxdet/loss.hpp"

namespace voxdet {

struct Hyperparameters {
  double lr0 = 0.01;
  double lrf = 0.01;  // final lr = lr0 * lrf
  double momentum = 0.937;
  double weight_decay = 5e-4;
  double warmup_epochs = 3.0;
  double warmup_momentum = 0.8;
  double warmup_bias_lr = 0.1;
  double grad_clip = 10.0;  // max global gradient norm, 0 disables
  int batch_size = 8;
  int epochs = 1000;
  int patience = 200;
  LossConfig loss;
  AugmentConfig augment;

  void validate() const {
    auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, "hyperparameters: " + why); };
    if (!(lr0 > 0.0) || !(lrf > 0.0)) throw bad("learning rates must be > 0");
    if (momentum < 0.0 || momentum >= 1.0 || warmup_momentum < 0.0 || warmup_momentum >= 1.0)
      throw bad("momentum must be in [0, 1)");
    if (weight_decay < 0.0 || warmup_epochs < 0.0 || grad_clip < 0.0) throw bad("negative value");
    if (loss.box_gain < 0.0 || loss.obj_gain < 0.0 || loss.cls_gain < 0.0) throw bad("gains must be >= 0");
    if (!(loss.anchor_t > 1.0)) throw bad("anchor_t must be > 1");
    if (loss.focal_gamma < 0.0) throw bad("focal_gamma must be >= 0");
    if (batch_size < 1 || epochs < 1) throw bad("batch_size and epochs must be >= 1");
    if (patience < 1 || patience >= epochs) throw bad("patience must be in [1, epochs)");
    augment.validate();
  }
};

inline Hyperparameters parse_hyperparameters(const std::string& text) {
  Hyperparameters h;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(Errc::ParseError, std::string("hyperparameters: ") + e.what());
  }
  if (root.IsNull()) return h;
  if (!root.IsMap()) throw Error(Errc::ParseError, "hyperparameters must be a mapping");
  auto pair = [](const YAML::Node& n) {
    const auto v = n.as<std::vector<double>>();
    if (v.size() != 2) throw Error(Errc::ParseError, "expected a [lo, hi] pair");
    return std::array<double, 2>{v[0], v[1]};
  };
  try {
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      const YAML::Node& v = kv.second;
      if (key == "lr0") h.lr0 = v.as<double>();
      else if (key == "lrf") h.lrf = v.as<double>();
      else if (key == "momentum") h.momentum = v.as<double>();
      else if (key == "weight_decay") h.weight_decay = v.as<double>();
      else if (key == "warmup_epochs") h.warmup_epochs = v.as<double>();
      else if (key == "warmup_momentum") h.warmup_momentum = v.as<double>();
      else if (key == "warmup_bias_lr") h.warmup_bias_lr = v.as<double>();
      else if (key == "grad_clip") h.grad_clip = v.as<double>();
      else if (key == "batch_size") h.batch_size = v.as<int>();
      else if (key == "epochs") h.epochs = v.as<int>();
      else if (key == "patience") h.patience = v.as<int>();
      else if (key == "box") h.loss.box_gain = v.as<double>();
      else if (key == "obj") h.loss.obj_gain = v.as<double>();
      else if (key == "cls") h.loss.cls_gain = v.as<double>();
      else if (key == "anchor_t") h.loss.anchor_t = v.as<double>();
      else if (key == "focal_gamma") h.loss.focal_gamma = v.as<double>();
      else if (key == "obj_balance") h.loss.balance = v.as<std::vector<double>>();
      else if (key == "cutout_prob") h.augment.cutout_prob = v.as<double>();
      else if (key == "cutout_max_blocks") h.augment.cutout_max_blocks = v.as<int>();
      else if (key == "cutout_size") h.augment.cutout_size = pair(v);
      else if (key == "translate") h.augment.translate_frac = v.as<double>();
      else if (key == "zoom") h.augment.zoom_range = pair(v);
      else throw Error(Errc::ParseError, "unknown hyperparameter '" + key + "'");
    }
  } catch (const YAML::Exception& e) {
    throw Error(Errc::ParseError, std::string("hyperparameters: ") + e.what());
  }
  h.validate();
  return h;
}

inline Hyperparameters load_hyperparameters(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_hyperparameters(ss.str());
}

}  // namespace voxdet
