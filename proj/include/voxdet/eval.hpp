// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Greedy 3-D NMS, COCO-style matching and AP, and the evaluation report.
#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "voxdet/decode.hpp"
#include "voxdet/labels.hpp"
#include "voxdet/nifti.hpp"
#include "voxdet/preprocess.hpp"

namespace voxdet {

inline constexpr double kEvalConfThreshold = 0.001;
inline constexpr double kDeployConfThreshold = 0.25;
inline constexpr double kNmsIouThreshold = 0.45;

namespace detail {

// Stable confidence-descending order: ties keep the lower input position.
inline std::vector<std::size_t> by_confidence(const std::vector<double>& conf) {
  std::vector<std::size_t> order(conf.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  return order;
}

inline std::vector<double> confidences(const std::vector<Detection>& dets) {
  std::vector<double> c;
  c.reserve(dets.size());
  for (const auto& d : dets) c.push_back(d.confidence);
  return c;
}

}  // namespace detail

// Keeps a detection iff its IoU with every earlier kept one (same class unless
// class_agnostic) is below iou_thr. Output is in kept order.
inline std::vector<Detection> nms3d(const std::vector<Detection>& dets, double iou_thr, bool class_agnostic = false) {
  std::vector<Detection> kept;
  for (std::size_t i : detail::by_confidence(detail::confidences(dets))) {
    const Detection& d = dets[i];
    bool keep = true;
    for (const auto& k : kept) {
      if (!class_agnostic && k.class_id != d.class_id) continue;
      if (iou3d(k.box, d.box) >= iou_thr) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  return kept;
}

struct MatchResult {
  std::vector<bool> tp;          // per prediction
  std::vector<bool> gt_matched;  // per ground truth
  std::vector<int> matched_gt;   // per prediction, -1 when unmatched
};

// `preds` must be confidence-descending. Each prediction claims the unmatched
// same-class GT of highest IoU >= iou_thr (lowest index on ties).
inline MatchResult match_detections(const std::vector<Detection>& preds, const std::vector<Box3>& gts, double iou_thr) {
  MatchResult r;
  r.tp.assign(preds.size(), false);
  r.gt_matched.assign(gts.size(), false);
  r.matched_gt.assign(preds.size(), -1);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (r.gt_matched[g] || gts[g].class_id != preds[i].class_id) continue;
      const double iou = iou3d(preds[i].box, gts[g]);
      if (iou >= iou_thr && iou > best_iou) best_iou = iou, best = static_cast<int>(g);
    }
    if (best >= 0) {
      r.tp[i] = true;
      r.gt_matched[static_cast<std::size_t>(best)] = true;
      r.matched_gt[i] = best;
    }
  }
  return r;
}

enum class ApMode { Coco101, AllPoints };

// AP of confidence-ranked TP/FP flags. Returns nullopt when the class has
// neither GT nor predictions (excluded from means), 0 when it has predictions but no GT.
inline std::optional<double> average_precision(const std::vector<bool>& tp, const std::vector<double>& conf,
                                               std::size_t num_gt, ApMode mode = ApMode::Coco101) {
  if (tp.size() != conf.size()) throw Error(Errc::InvalidArgument, "flags and confidences differ in length");
  if (num_gt == 0) return tp.empty() ? std::nullopt : std::optional<double>(0.0);
  const auto order = detail::by_confidence(conf);
  std::vector<double> recall, precision;
  std::size_t ctp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    ctp += tp[order[k]] ? 1 : 0;
    recall.push_back(static_cast<double>(ctp) / static_cast<double>(num_gt));
    precision.push_back(static_cast<double>(ctp) / static_cast<double>(k + 1));
  }
  // precision envelope: max to the right
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  if (mode == ApMode::AllPoints) {
    double ap = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < recall.size(); ++k) {
      ap += (recall[k] - prev) * precision[k];
      prev = recall[k];
    }
    return ap;
  }
  double sum = 0.0;
  std::size_t k = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = static_cast<double>(i) / 100.0;
    while (k < recall.size() && recall[k] < r) ++k;
    if (k < recall.size()) sum += precision[k];
  }
  return sum / 101.0;
}

// Threshold sets; values are formed as integers / 100 so 0.55 etc. are the nearest doubles.
inline std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(static_cast<double>(50 + 5 * i) / 100.0);
  return t;
}
inline std::vector<double> relaxed_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 5; ++i) t.push_back(static_cast<double>(50 + 10 * i) / 100.0);
  return t;
}

struct ClassReport {
  int class_id = 0;
  std::size_t num_gt = 0;
  std::size_t num_pred = 0;
  std::map<int, double> ap;  // keyed by threshold in hundredths
  double ap50 = 0.0, ap50_95 = 0.0, ap50_90 = 0.0;
};

struct ScanRecord {
  std::string scan;
  std::size_t predictions = 0, ground_truth = 0, tp = 0, fp = 0, fn = 0;  // at IoU 0.5
};

struct EvalReport {
  std::vector<ClassReport> classes;
  double map50 = 0.0, map50_95 = 0.0, map50_90 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::vector<ScanRecord> scans;
};

namespace detail {

inline int hundredths(double t) { return static_cast<int>(std::lround(t * 100.0)); }

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// preds[i] and gts[i] belong to scan i. mAP = mean over classes, then over thresholds.
inline EvalReport map_report(const std::vector<std::vector<Detection>>& preds, const std::vector<std::vector<Box3>>& gts,
                             const std::vector<std::string>& scan_names = {}) {
  if (preds.size() != gts.size()) throw Error(Errc::InvalidArgument, "prediction and label scan counts differ");
  std::set<int> classes;
  for (const auto& s : gts)
    for (const auto& b : s) classes.insert(b.class_id);
  for (const auto& s : preds)
    for (const auto& d : s) classes.insert(d.class_id);

  std::vector<double> all_thr = coco_thresholds();
  for (double t : relaxed_thresholds())
    if (std::find(all_thr.begin(), all_thr.end(), t) == all_thr.end()) all_thr.push_back(t);

  EvalReport rep;
  std::map<int, std::vector<double>> per_thr;  // hundredths -> per-class APs (non-skipped)
  for (int c : classes) {
    ClassReport cr;
    cr.class_id = c;
    std::vector<std::vector<Detection>> cp(preds.size());
    std::vector<std::vector<Box3>> cg(gts.size());
    for (std::size_t s = 0; s < preds.size(); ++s) {
      for (const auto& d : preds[s])
        if (d.class_id == c) cp[s].push_back(d);
      const auto order = detail::by_confidence(detail::confidences(cp[s]));
      std::vector<Detection> sorted;
      for (auto i : order) sorted.push_back(cp[s][i]);
      cp[s] = std::move(sorted);
      for (const auto& b : gts[s])
        if (b.class_id == c) cg[s].push_back(b);
      cr.num_gt += cg[s].size();
      cr.num_pred += cp[s].size();
    }
    bool skipped = false;
    for (double thr : all_thr) {
      std::vector<bool> flags;
      std::vector<double> conf;
      for (std::size_t s = 0; s < preds.size(); ++s) {
        const auto m = match_detections(cp[s], cg[s], thr);
        for (std::size_t i = 0; i < cp[s].size(); ++i) {
          flags.push_back(m.tp[i]);
          conf.push_back(cp[s][i].confidence);
        }
      }
      const auto ap = average_precision(flags, conf, cr.num_gt);
      if (!ap) {
        skipped = true;
        break;
      }
      cr.ap[detail::hundredths(thr)] = *ap;
      per_thr[detail::hundredths(thr)].push_back(*ap);
    }
    if (skipped) continue;
    std::vector<double> a95, a90;
    for (double t : coco_thresholds()) a95.push_back(cr.ap[detail::hundredths(t)]);
    for (double t : relaxed_thresholds()) a90.push_back(cr.ap[detail::hundredths(t)]);
    cr.ap50 = cr.ap[50];
    cr.ap50_95 = detail::mean_of(a95);
    cr.ap50_90 = detail::mean_of(a90);
    rep.classes.push_back(std::move(cr));
  }
  auto aggregate = [&](const std::vector<double>& thr) {
    std::vector<double> m;
    for (double t : thr) m.push_back(detail::mean_of(per_thr[detail::hundredths(t)]));
    return detail::mean_of(m);
  };
  rep.map50 = aggregate({0.5});
  rep.map50_95 = aggregate(coco_thresholds());
  rep.map50_90 = aggregate(relaxed_thresholds());

  for (std::size_t s = 0; s < preds.size(); ++s) {
    ScanRecord sr;
    sr.scan = s < scan_names.size() ? scan_names[s] : std::to_string(s);
    sr.predictions = preds[s].size();
    sr.ground_truth = gts[s].size();
    std::vector<Detection> sorted;
    for (auto i : detail::by_confidence(detail::confidences(preds[s]))) sorted.push_back(preds[s][i]);
    const auto m = match_detections(sorted, gts[s], 0.5);
    for (bool t : m.tp) (t ? sr.tp : sr.fp) += 1;
    for (bool g : m.gt_matched) sr.fn += g ? 0 : 1;
    rep.tp += sr.tp;
    rep.fp += sr.fp;
    rep.fn += sr.fn;
    rep.scans.push_back(sr);
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  using J = nlohmann::ordered_json;
  J j;
  j["map50"] = r.map50;
  j["map50_95"] = r.map50_95;
  j["map50_90"] = r.map50_90;
  j["counts"] = J{{"iou", 0.5}, {"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}};
  J classes = J::array();
  for (const auto& c : r.classes) {
    J ap = J::object();
    for (const auto& [t, v] : c.ap) {
      char key[8];
      std::snprintf(key, sizeof(key), "%.2f", t / 100.0);
      ap[key] = v;
    }
    classes.push_back(J{{"class_id", c.class_id},
                        {"num_gt", c.num_gt},
                        {"num_pred", c.num_pred},
                        {"ap50", c.ap50},
                        {"ap50_95", c.ap50_95},
                        {"ap50_90", c.ap50_90},
                        {"ap", ap}});
  }
  j["classes"] = classes;
  J scans = J::array();
  for (const auto& s : r.scans)
    scans.push_back(J{{"scan", s.scan},
                      {"predictions", s.predictions},
                      {"ground_truth", s.ground_truth},
                      {"tp", s.tp},
                      {"fp", s.fp},
                      {"fn", s.fn}});
  j["scans"] = scans;
  return j;
}

// Prediction files: "class conf zc xc yc dz dx dy" per line.
inline std::string format_prediction_line(const Detection& d) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%d %.9g %.6f %.6f %.6f %.6f %.6f %.6f", d.class_id, d.confidence, d.box.center[0],
                d.box.center[1], d.box.center[2], d.box.extent[0], d.box.extent[1], d.box.extent[2]);
  return buf;
}

inline void write_predictions(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  for (const auto& d : dets) out << format_prediction_line(d) << '\n';
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

inline std::vector<Detection> read_predictions(const std::filesystem::path& path) {
  std::vector<Detection> dets;
  for (const auto& r : read_records(path, 8)) {
    Detection d;
    d.box = record_box(r, 2, path);
    d.class_id = d.box.class_id;
    d.confidence = r.values[1];
    if (d.confidence < 0.0 || d.confidence > 1.0)
      throw Error(Errc::ParseError, path.filename().string() + ":" + std::to_string(r.line) + ": confidence outside [0,1]");
    d.index = dets.size();
    dets.push_back(d);
  }
  return dets;
}

// Filled-box overlay in the source scan's (x, y, z) voxel grid; voxel value = class + 1,
// later (lower-confidence) boxes do not overwrite earlier ones.
inline Volume overlay_volume(const std::vector<Detection>& dets, const Volume& source) {
  const Dims3 xyz = source.source_dims();
  const Dims3 zxy{xyz[2], xyz[0], xyz[1]};
  Volume out;
  out.data = Array3<double>(xyz, 0.0);
  out.spacing = source.spacing;
  out.modality = source.modality;
  for (const auto& d : dets) {
    const VoxelBox vb = box_cube_to_original(d.box, zxy);
    std::int64_t lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(vb.lo[a] + 0.5)), 0, zxy[a]);
      hi[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(vb.hi[a] + 0.5)), 0, zxy[a]);
    }
    for (std::int64_t z = lo[0]; z < hi[0]; ++z)
      for (std::int64_t x = lo[1]; x < hi[1]; ++x)
        for (std::int64_t y = lo[2]; y < hi[2]; ++y) {
          double& v = out.data(x, y, z);
          if (v == 0.0) v = static_cast<double>(d.class_id + 1);
        }
  }
  return out;
}

}  // namespace voxdet
