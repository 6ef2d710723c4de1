// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// voxdet command-line tool.
//
// Exit codes: 0 ok, 1 usage or other error, 2 unreadable or missing scans,
// 3 diverged loss, 4 scan/label mismatch, 5 checkpoint mismatch,
// 6 prediction/label basename mismatch.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "voxdet/voxdet.hpp"

namespace fs = std::filesystem;
using namespace voxdet;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kBadScans = 2, kDiverged = 3, kLabelMismatch = 4, kBadCheckpoint = 5, kBadPairs = 6 };

struct Options {
  std::string data, labels, model_cfg, hyp, weights, out;
  std::optional<std::int64_t> cube_side;
  std::uint64_t seed = 0;
  int threads = 1;
  double conf_thr = kDeployConfThreshold;
  double iou_thr = kNmsIouThreshold;
  bool overlay = false;
  int epochs = 0;
  int patience = 0;
  std::size_t count = 200;
  double train_frac = 0.8;
};

struct ExitWith {
  int code;
  std::string message;
};

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::DivergedLoss: return kDiverged;
    case Errc::LabelMismatch: return kLabelMismatch;
    case Errc::CheckpointMismatch: return kBadCheckpoint;
    default: return kFailure;
  }
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<fs::path> scans_or_exit(const std::string& dir) {
  auto scans = list_scans(dir);
  if (scans.empty()) throw ExitWith{kBadScans, "no scans found in " + dir};
  return scans;
}

// ---------------------------------------------------------------- preprocess

int cmd_preprocess(const Options& o) {
  const auto scans = scans_or_exit(o.data);
  const std::int64_t side = o.cube_side.value_or(PreprocessConfig{}.cube_side);
  struct Stats {
    Dims3 dims{};
    std::size_t n = 0;
    double sum = 0.0, sum_sq = 0.0, min = 0.0, max = 0.0;
    std::string error;
  };
  std::vector<Stats> stats(scans.size());
  const fs::path cache = cache_dir();
  parallel_for(scans.size(), o.threads, [&](std::size_t i) {
    try {
      const Volume v = read_nifti(scans[i]);
      Stats& s = stats[i];
      s.dims = v.source_dims();
      s.n = v.data.size();
      s.min = v.data.min();
      s.max = v.data.max();
      for (double x : v.data.values()) s.sum += x, s.sum_sq += x * x;
      if (!cache.empty()) load_cube(scans[i], side, cache);
      else to_cube(v, side);
    } catch (const Error& e) {
      stats[i].error = e.what();
    }
  });
  std::vector<std::string> offenders;
  for (std::size_t i = 0; i < scans.size(); ++i)
    if (!stats[i].error.empty()) offenders.push_back(scans[i].filename().string() + ": " + stats[i].error);
  if (!offenders.empty()) {
    std::string msg = std::to_string(offenders.size()) + " unreadable scan(s):";
    for (const auto& s : offenders) msg += "\n  " + s;
    throw ExitWith{kBadScans, msg};
  }
  std::map<std::string, std::size_t> hist;
  double n = 0.0, sum = 0.0, sum_sq = 0.0, lo = stats[0].min, hi = stats[0].max;
  for (const auto& s : stats) {
    ++hist[std::to_string(s.dims[0]) + "x" + std::to_string(s.dims[1]) + "x" + std::to_string(s.dims[2])];
    n += static_cast<double>(s.n), sum += s.sum, sum_sq += s.sum_sq;
    lo = std::min(lo, s.min), hi = std::max(hi, s.max);
  }
  const double mean = sum / n;
  nlohmann::ordered_json summary{{"n_scans", scans.size()},
                                 {"cube_side", side},
                                 {"source_dims", hist},
                                 {"intensity",
                                  {{"min", lo},
                                   {"max", hi},
                                   {"mean", mean},
                                   {"std", std::sqrt(std::max(0.0, sum_sq / n - mean * mean))}}},
                                 {"cache", cache.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(cache.string())}};
  std::cout << summary.dump(2) << '\n';
  if (!o.out.empty()) write_json(fs::path(o.out) / "preprocess_summary.json", summary);
  return kOk;
}

// ------------------------------------------------------------------- anchors

int cmd_anchors(const Options& o) {
  const std::int64_t side = o.cube_side.value_or(PreprocessConfig{}.cube_side);
  std::vector<Extent3> extents;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.labels))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    for (const auto& b : read_labels(f))
      extents.push_back({b.extent[0] * static_cast<double>(side), b.extent[1] * static_cast<double>(side),
                         b.extent[2] * static_cast<double>(side)});
  int k = kDefaultAnchorCount, scales = kDefaultDetectScales;
  if (!o.model_cfg.empty()) {
    const ModelSpec spec = load_model_config(o.model_cfg);
    k = spec.anchor_count, scales = spec.num_scales();
  }
  const AnchorSet a = anchor_kmeans(extents, static_cast<std::size_t>(k), o.seed, scales);
  std::string text = "# " + std::to_string(extents.size()) + " boxes, cube side " + std::to_string(side) +
                     ", mean 1-IoU " + std::to_string(a.distortion) + "\nanchors: [";
  std::size_t i = 0;
  for (std::size_t s = 0; s < a.per_scale.size(); ++s) {
    text += s ? ", [" : "[";
    for (int j = 0; j < a.per_scale[s]; ++j, ++i) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s%.4f,%.4f,%.4f", j ? ", " : "", a.anchors[i][0], a.anchors[i][1], a.anchors[i][2]);
      text += buf;
    }
    text += "]";
  }
  text += "]\n";
  std::cout << text;
  if (!o.out.empty()) {
    std::ofstream out(o.out, std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + o.out);
    out << text;
  }
  return kOk;
}

// --------------------------------------------------------------------- train

// A dataset root with manifest.json supplies its own split; otherwise a
// seeded 80/20 split over scan basenames is used.
std::pair<std::vector<std::string>, std::vector<std::string>> split_ids(const fs::path& images, const fs::path& root,
                                                                        const Options& o) {
  if (fs::exists(root / "manifest.json")) {
    const auto m = read_manifest(root / "manifest.json");
    return {m.ids("train"), m.ids("val")};
  }
  std::vector<std::string> all;
  for (const auto& p : list_scans(images)) all.push_back(nifti_basename(p));
  const auto train = patient_split(all.size(), o.train_frac, o.seed);
  std::pair<std::vector<std::string>, std::vector<std::string>> out;
  for (std::size_t i = 0; i < all.size(); ++i) (train[i] ? out.first : out.second).push_back(all[i]);
  return out;
}

int cmd_train(const Options& o) {
  fs::path images = o.data, labels = o.labels;
  const fs::path root = o.data;
  if (fs::is_directory(root / "images")) images = root / "images";
  if (labels.empty()) labels = root / "labels";
  scans_or_exit(images.string());

  Hyperparameters h = o.hyp.empty() ? Hyperparameters{} : load_hyperparameters(o.hyp);
  if (o.patience > 0) h.patience = o.patience;
  h.validate();
  const std::int64_t side = o.cube_side.value_or(PreprocessConfig{}.cube_side);
  const auto [train_ids, val_ids] = split_ids(images, root, o);
  if (train_ids.empty()) throw ExitWith{kBadScans, "no training scans"};
  const auto train_set = load_samples(images, labels, side, train_ids, o.threads);
  const auto val_set = val_ids.empty() ? std::vector<Sample>{} : load_samples(images, labels, side, val_ids, o.threads);

  ModelSpec spec = load_model_config(o.model_cfg);
  Model<float> model(std::move(spec), o.seed);
  TrainOptions opt;
  opt.hyp = h;
  opt.side = side;
  opt.seed = o.seed;
  opt.epoch_limit = o.epochs;
  opt.out_dir = o.out;
  const int shown = o.epochs > 0 ? std::min(o.epochs, h.epochs) : h.epochs;
  opt.on_epoch = [&](const EpochMetrics& m) {
    std::printf("epoch %d/%d  box %.5f  obj %.5f  cls %.5f  total %.5f  mAP50 %.4f  mAP50:95 %.4f  fitness %.4f\n",
                m.epoch, shown, m.box, m.obj, m.cls, m.total, m.map50, m.map50_95, m.fitness);
    std::fflush(stdout);
  };
  std::printf("train %zu scans, val %zu scans, cube %lld, %zu parameters\n", train_set.size(), val_set.size(),
              static_cast<long long>(side), model.parameter_count());
  const TrainResult r = train(model, train_set, val_set, opt);
  std::printf("%s after %zu epochs; best epoch %d fitness %.4f\n", r.stopped_early ? "early stop" : "done",
              r.history.size(), r.best_epoch, r.best_fitness);
  return kOk;
}

// -------------------------------------------------------------------- detect

int cmd_detect(const Options& o) {
  LoadedCheckpoint<float> ck;
  try {
    ck = load_checkpoint<float>(o.weights);
  } catch (const Error& e) {
    throw ExitWith{kBadCheckpoint, e.what()};
  }
  const std::int64_t side = ck.info.cube_side;
  if (o.cube_side && *o.cube_side != side)
    throw ExitWith{kBadCheckpoint, "checkpoint was trained at cube side " + std::to_string(side) + ", not " +
                                       std::to_string(*o.cube_side)};
  if (!o.model_cfg.empty()) {
    const ModelSpec want = load_model_config(o.model_cfg);
    if (count_parameters(want) != ck.model->parameter_count() || want.num_classes != ck.model->spec().num_classes)
      throw ExitWith{kBadCheckpoint, "checkpoint does not match " + o.model_cfg};
  }
  const auto scans = scans_or_exit(o.data);
  const auto samples = load_samples(o.data, {}, side, {}, o.threads, false);
  DetectConfig cfg;
  cfg.conf_thr = o.conf_thr;
  cfg.iou_thr = o.iou_thr;
  const auto preds = predict(*ck.model, samples, side, cfg);
  fs::create_directories(o.out);
  std::size_t total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    write_predictions(fs::path(o.out) / (samples[i].id + ".txt"), preds[i]);
    if (o.overlay) write_nifti(overlay_volume(preds[i], read_nifti(scans[i])), fs::path(o.out) / (samples[i].id + "_boxes.nii.gz"));
    total += preds[i].size();
  }
  std::printf("%zu scans, %zu detections -> %s\n", samples.size(), total, o.out.c_str());
  return kOk;
}

// ---------------------------------------------------------------------- eval

std::vector<std::string> txt_basenames(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(Errc::IoFailure, dir.string() + " is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_eval(const Options& o) {
  const auto pred_ids = txt_basenames(o.data), gt_ids = txt_basenames(o.labels);
  if (pred_ids != gt_ids) {
    std::vector<std::string> only_pred, only_gt;
    std::set_difference(pred_ids.begin(), pred_ids.end(), gt_ids.begin(), gt_ids.end(), std::back_inserter(only_pred));
    std::set_difference(gt_ids.begin(), gt_ids.end(), pred_ids.begin(), pred_ids.end(), std::back_inserter(only_gt));
    std::string msg = "prediction and label basenames differ";
    for (const auto& s : only_pred) msg += "\n  no labels for " + s;
    for (const auto& s : only_gt) msg += "\n  no predictions for " + s;
    throw ExitWith{kBadPairs, msg};
  }
  if (gt_ids.empty()) throw ExitWith{kBadPairs, "no label files in " + o.labels};
  std::vector<std::vector<Detection>> preds;
  std::vector<std::vector<Box3>> gts;
  for (const auto& id : gt_ids) {
    preds.push_back(read_predictions(fs::path(o.data) / (id + ".txt")));
    gts.push_back(read_labels(fs::path(o.labels) / (id + ".txt")));
  }
  const auto report = to_json(map_report(preds, gts, gt_ids));
  if (!o.out.empty()) write_json(o.out, report);
  std::printf("mAP@0.5 %.4f  mAP@0.5:0.95 %.4f  mAP@0.5:0.9 %.4f\n", report["map50"].get<double>(),
              report["map50_95"].get<double>(), report["map50_90"].get<double>());
  return kOk;
}

// --------------------------------------------------------------- phantom-gen

int cmd_phantom(const Options& o) {
  PhantomSpec spec;
  spec.side = o.cube_side.value_or(96);
  const auto m = gen_dataset(o.count, spec, o.seed, o.out, o.train_frac);
  std::printf("%zu phantoms (%zu train, %zu val) -> %s\n", m.scans.size(), m.ids("train").size(), m.ids("val").size(),
              o.out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxdet: single-shot 3-D object detection for volumetric scans"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  Options o;
  std::int64_t side = 0;

  auto side_opt = [&](CLI::App* c, const std::string& what) {
    c->add_option("--cube-side", side, what)->check(CLI::PositiveNumber);
  };
  auto seed_opt = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed")->capture_default_str(); };
  auto threads_opt = [&](CLI::App* c) {
    c->add_option("--threads", o.threads, "Worker threads for scan loading")->check(CLI::PositiveNumber)->capture_default_str();
  };

  auto* pre = app.add_subcommand("preprocess", "Read and resample every scan; write a JSON summary (cubes go to $VOXDET_CACHE)");
  pre->add_option("--data", o.data, "Directory of .nii/.nii.gz scans")->required();
  pre->add_option("--out", o.out, "Directory for preprocess_summary.json");
  side_opt(pre, "Cube side D (default 350)");
  seed_opt(pre);
  threads_opt(pre);

  auto* anc = app.add_subcommand("anchors", "Cluster label extents into an anchor set");
  anc->add_option("--labels", o.labels, "Directory of label files")->required();
  anc->add_option("--model-cfg", o.model_cfg, "Model config supplying anchor count and scales (default 6 over 3)");
  anc->add_option("--out", o.out, "Write the anchors line here");
  side_opt(anc, "Cube side D used to express extents in voxels (default 350)");
  seed_opt(anc);

  auto* tr = app.add_subcommand("train", "Train a detector");
  tr->add_option("--data", o.data, "Dataset root (images/, labels/, manifest.json) or a directory of scans")->required();
  tr->add_option("--labels", o.labels, "Label directory (default <data>/labels)");
  tr->add_option("--model-cfg", o.model_cfg, "Model config YAML, e.g. configs/small.yaml")->required();
  tr->add_option("--hyp", o.hyp, "Hyperparameter YAML (default: built-in)");
  tr->add_option("--out", o.out, "Run directory for best.ckpt, last.ckpt, metrics.jsonl")->required();
  side_opt(tr, "Cube side D (default 350)");
  seed_opt(tr);
  threads_opt(tr);
  tr->add_option("--epochs", o.epochs, "Stop after this many epochs; the lr schedule still spans the configured epochs")
      ->check(CLI::PositiveNumber);
  tr->add_option("--patience", o.patience, "Early-stopping patience override")->check(CLI::PositiveNumber);

  auto* det = app.add_subcommand("detect", "Run a checkpoint over scans and write prediction files");
  det->add_option("--data", o.data, "Directory of scans")->required();
  det->add_option("--weights", o.weights, "Checkpoint file")->required();
  det->add_option("--out", o.out, "Output directory for <scan>.txt predictions")->required();
  det->add_option("--model-cfg", o.model_cfg, "Optional config the checkpoint must match");
  side_opt(det, "Must equal the checkpoint's cube side when given");
  det->add_option("--conf-thr", o.conf_thr, "Confidence threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  det->add_option("--iou-thr", o.iou_thr, "NMS IoU threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  det->add_flag("--overlay", o.overlay, "Also write <scan>_boxes.nii.gz box masks in source geometry");
  seed_opt(det);
  threads_opt(det);

  auto* ev = app.add_subcommand("eval", "Score prediction files against labels");
  ev->add_option("--data", o.data, "Directory of <scan>.txt prediction files")->required();
  ev->add_option("--labels", o.labels, "Directory of <scan>.txt label files")->required();
  ev->add_option("--out", o.out, "Write the JSON report here");
  seed_opt(ev);

  auto* ph = app.add_subcommand("phantom-gen", "Write a synthetic labeled dataset");
  ph->add_option("--out", o.out, "Dataset root")->required();
  ph->add_option("--n", o.count, "Number of phantoms")->capture_default_str();
  ph->add_option("--train-frac", o.train_frac, "Training fraction of the patient split")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  side_opt(ph, "Phantom side (default 96)");
  seed_opt(ph);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kFailure;
  }
  for (auto* c : {pre, anc, tr, det, ph})
    if (c->parsed() && c->count("--cube-side")) o.cube_side = side;

  try {
    if (pre->parsed()) return cmd_preprocess(o);
    if (anc->parsed()) return cmd_anchors(o);
    if (tr->parsed()) return cmd_train(o);
    if (det->parsed()) return cmd_detect(o);
    if (ev->parsed()) return cmd_eval(o);
    if (ph->parsed()) return cmd_phantom(o);
  } catch (const ExitWith& e) {
    std::fprintf(stderr, "voxdet: %s\n", e.message.c_str());
    return e.code;
  } catch (const Error& e) {
    std::fprintf(stderr, "voxdet: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "voxdet: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
