// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// SGD training with warmup + cosine decay, per-epoch validation, and
// patience-based early stopping on fitness = 0.1 mAP@0.5 + 0.9 mAP@0.5:0.95.
#pragma once

#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>

#include "voxdet/augment.hpp"
#include "voxdet/checkpoint.hpp"
#include "voxdet/dataset.hpp"
#include "voxdet/eval.hpp"
#include "voxdet/hyp.hpp"
#include "voxdet/loss.hpp"

namespace voxdet {

inline double fitness(double map50, double map50_95) { return 0.1 * map50 + 0.9 * map50_95; }

// Stops once `patience` epochs have passed since the last strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when training should stop after `epoch`.
  bool update(int epoch, double fit) {
    if (!seen_ || fit > best_fitness_) {
      best_fitness_ = fit;
      best_epoch_ = epoch;
      seen_ = true;
    }
    return epoch - best_epoch_ >= patience_;
  }
  int best_epoch() const { return best_epoch_; }
  double best_fitness() const { return best_fitness_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_fitness_ = 0.0;
  bool seen_ = false;
};

// Cosine factor from 1 at epoch 0 to lrf at `epochs`.
inline double cosine_lr_factor(double epoch, int epochs, double lrf) {
  return ((1.0 - std::cos(epoch * std::numbers::pi / static_cast<double>(epochs))) / 2.0) * (lrf - 1.0) + 1.0;
}

struct ScheduleState {
  double lr_weight = 0.0, lr_norm = 0.0, lr_bias = 0.0, momentum = 0.0;
};

// Linear warmup over the first warmup_epochs * batches_per_epoch iterations:
// bias lr falls from warmup_bias_lr, the other groups rise from 0, momentum
// rises from warmup_momentum.
inline ScheduleState schedule(const Hyperparameters& h, int epoch, std::int64_t iteration, std::int64_t batches_per_epoch) {
  const double base = h.lr0 * cosine_lr_factor(epoch, h.epochs, h.lrf);
  ScheduleState s{base, base, base, h.momentum};
  const auto warm = static_cast<std::int64_t>(std::llround(h.warmup_epochs * static_cast<double>(batches_per_epoch)));
  if (iteration < warm) {
    const double f = static_cast<double>(iteration) / static_cast<double>(warm);
    s.lr_weight = s.lr_norm = f * base;
    s.lr_bias = h.warmup_bias_lr + f * (base - h.warmup_bias_lr);
    s.momentum = h.warmup_momentum + f * (h.momentum - h.warmup_momentum);
  }
  return s;
}

// Nesterov SGD; weight decay only on convolution weights.
template <typename T>
class Sgd {
 public:
  explicit Sgd(std::vector<Param<T>*> params) : params_(std::move(params)) {
    for (auto* p : params_) velocity_.emplace_back(p->size(), T{});
  }

  double grad_norm() const {
    double s = 0.0;
    for (auto* p : params_)
      for (T g : p->grad) s += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(s);
  }

  void clip(double max_norm) {
    if (!(max_norm > 0.0)) return;
    const double n = grad_norm();
    if (n <= max_norm) return;
    const auto f = static_cast<T>(max_norm / (n + 1e-6));
    for (auto* p : params_)
      for (T& g : p->grad) g *= f;
  }

  void step(const ScheduleState& s, double weight_decay) {
    const auto mu = static_cast<T>(s.momentum);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      double lr = s.lr_weight, wd = weight_decay;
      if (p.group == ParamGroup::Norm) lr = s.lr_norm, wd = 0.0;
      if (p.group == ParamGroup::Bias) lr = s.lr_bias, wd = 0.0;
      const auto tl = static_cast<T>(lr), tw = static_cast<T>(wd);
      auto& v = velocity_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const T g = p.grad[k] + tw * p.value[k];
        v[k] = mu * v[k] + g;
        p.value[k] -= tl * (g + mu * v[k]);
      }
    }
  }

 private:
  std::vector<Param<T>*> params_;
  std::vector<std::vector<T>> velocity_;
};

// Fits anchors to the training label extents (cube voxels).
inline AnchorSet fit_anchors(const std::vector<Sample>& train, const ModelSpec& spec, std::int64_t side,
                             std::uint64_t seed) {
  std::vector<Extent3> extents;
  for (const auto& s : train)
    for (const auto& b : s.boxes)
      extents.push_back({b.extent[0] * static_cast<double>(side), b.extent[1] * static_cast<double>(side),
                         b.extent[2] * static_cast<double>(side)});
  return anchor_kmeans(extents, static_cast<std::size_t>(spec.anchor_count), seed, spec.num_scales());
}

// Normalized float input batch from cubes.
template <typename T>
Tensor<T> make_batch(const std::vector<const Array3<double>*>& cubes) {
  const std::int64_t D = cubes.front()->dim(0);
  Tensor<T> x(static_cast<std::int64_t>(cubes.size()), 1, D, D, D);
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    const auto& src = cubes[i]->raw();
    std::transform(src.begin(), src.end(), x.sample(static_cast<std::int64_t>(i)), [](double v) { return static_cast<T>(v); });
  }
  return x;
}

inline Array3<double> normalized(Array3<double> cube, Modality m) {
  Cube c;
  c.side = cube.dim(0);
  c.data = std::move(cube);
  c.modality = m;
  return normalize(std::move(c), normalization_for(m)).data;
}

struct DetectConfig {
  double conf_thr = kEvalConfThreshold;
  double iou_thr = kNmsIouThreshold;
  std::size_t max_det = 300;
  int batch_size = 4;
};

// Inference + decode + per-class NMS for each sample.
template <typename T>
std::vector<std::vector<Detection>> predict(Model<T>& model, const std::vector<Sample>& samples, std::int64_t side,
                                            const DetectConfig& cfg) {
  std::vector<std::vector<Detection>> out;
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t b1 = std::min(samples.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
    std::vector<Array3<double>> norm;
    for (std::size_t i = b0; i < b1; ++i) norm.push_back(normalized(samples[i].cube, samples[i].modality));
    std::vector<const Array3<double>*> ptrs;
    for (const auto& a : norm) ptrs.push_back(&a);
    const Tensor<T> x = make_batch<T>(ptrs);
    const auto preds = model.forward(x, false);
    for (auto& dets : decode(preds, model.anchors(), side, cfg.conf_thr)) {
      auto kept = nms3d(dets, cfg.iou_thr);
      if (kept.size() > cfg.max_det) kept.resize(cfg.max_det);
      out.push_back(std::move(kept));
    }
  }
  return out;
}

template <typename T>
EvalReport evaluate(Model<T>& model, const std::vector<Sample>& samples, std::int64_t side, const DetectConfig& cfg) {
  const auto preds = predict(model, samples, side, cfg);
  std::vector<std::vector<Box3>> gts;
  std::vector<std::string> names;
  for (const auto& s : samples) gts.push_back(s.boxes), names.push_back(s.id);
  return map_report(preds, gts, names);
}

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double box = 0.0, obj = 0.0, cls = 0.0, total = 0.0;  // mean over batches
  double map50 = 0.0, map50_95 = 0.0, fitness = 0.0;
  double lr = 0.0;
};

inline nlohmann::ordered_json to_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch}, {"box", m.box},         {"obj", m.obj},         {"cls", m.cls},
          {"total", m.total}, {"map50", m.map50},     {"map50_95", m.map50_95}, {"fitness", m.fitness},
          {"lr", m.lr}};
}

struct TrainOptions {
  Hyperparameters hyp;
  std::int64_t side = 64;
  std::uint64_t seed = 0;
  bool augment = true;
  int epoch_limit = 0;  // stop after this many epochs, 0 = hyp.epochs; the lr schedule still spans hyp.epochs
  DetectConfig eval;
  std::filesystem::path out_dir;  // best.ckpt, last.ckpt, metrics.jsonl when set
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_fitness = 0.0;
  bool stopped_early = false;
};

// Trains `model` in place; on return it holds the best-fitness weights.
template <typename T>
TrainResult train(Model<T>& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainOptions& opt) {
  if (train_set.empty()) throw Error(Errc::EmptyDataset, "no training samples");
  const Hyperparameters& h = opt.hyp;
  h.validate();
  if (!model.spec().anchors_resolved()) model.set_anchors(fit_anchors(train_set, model.spec(), opt.side, opt.seed));
  Sgd<T> sgd(model.params());
  EarlyStopper stopper(h.patience);
  TrainResult result;
  std::ofstream metrics;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    metrics.open(opt.out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw Error(Errc::IoFailure, "cannot write metrics.jsonl");
  }
  const auto n = static_cast<std::int64_t>(train_set.size());
  const std::int64_t bs = std::min<std::int64_t>(h.batch_size, n);
  const std::int64_t batches = (n + bs - 1) / bs;
  std::vector<std::vector<float>> best_weights;
  auto snapshot = [&] {
    std::vector<std::vector<float>> w;
    for (auto* p : model.params()) w.emplace_back(p->value.begin(), p->value.end());
    for (auto& b : model.buffers()) w.emplace_back(b.values->begin(), b.values->end());
    return w;
  };
  auto restore = [&](const std::vector<std::vector<float>>& w) {
    std::size_t i = 0;
    for (auto* p : model.params()) std::copy(w[i].begin(), w[i].end(), p->value.begin()), ++i;
    for (auto& b : model.buffers()) std::copy(w[i].begin(), w[i].end(), b.values->begin()), ++i;
  };

  std::int64_t iteration = 0;
  const int last_epoch = opt.epoch_limit > 0 ? std::min(opt.epoch_limit, h.epochs) : h.epochs;
  for (int epoch = 0; epoch < last_epoch; ++epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(Rng::mix(opt.seed, static_cast<std::uint64_t>(epoch), 0x5u));
    for (std::size_t i = order.size(); i-- > 1;)
      std::swap(order[i], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i)))]);

    EpochMetrics em;
    em.epoch = epoch + 1;
    for (std::int64_t b = 0; b < batches; ++b, ++iteration) {
      std::vector<Array3<double>> cubes;
      std::vector<std::vector<Box3>> labels;
      for (std::int64_t k = b * bs; k < std::min(n, (b + 1) * bs); ++k) {
        const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
        const Sample& s = train_set[idx];
        if (opt.augment) {
          // stream keyed by (epoch, sample index): independent of batch composition
          Rng rng(Rng::mix(opt.seed, static_cast<std::uint64_t>(epoch) + 1, idx));
          Augmented a = voxdet::augment(s.cube, s.boxes, rng, h.augment);
          cubes.push_back(normalized(std::move(a.data), s.modality));
          labels.push_back(std::move(a.boxes));
        } else {
          cubes.push_back(normalized(s.cube, s.modality));
          labels.push_back(s.boxes);
        }
      }
      std::vector<const Array3<double>*> ptrs;
      for (const auto& c : cubes) ptrs.push_back(&c);
      const Tensor<T> x = make_batch<T>(ptrs);
      const auto preds = model.forward(x, true);
      std::vector<PredGrid<T>> grad;
      const LossBreakdown lb = total_loss(preds, labels, model.anchors(), opt.side, h.loss, &grad);
      if (!std::isfinite(lb.total))
        throw Error(Errc::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch + 1));
      model.zero_grad();
      model.backward(grad);
      sgd.clip(h.grad_clip);
      const ScheduleState st = schedule(h, epoch, iteration, batches);
      sgd.step(st, h.weight_decay);
      em.box += h.loss.box_gain * lb.box;
      em.obj += h.loss.obj_gain * lb.obj;
      em.cls += h.loss.cls_gain * lb.cls;
      em.total += lb.total;
      em.lr = st.lr_weight;
    }
    const double nb = static_cast<double>(batches);
    em.box /= nb, em.obj /= nb, em.cls /= nb, em.total /= nb;
    if (!val_set.empty()) {
      const EvalReport rep = evaluate(model, val_set, opt.side, opt.eval);
      em.map50 = rep.map50;
      em.map50_95 = rep.map50_95;
    }
    em.fitness = fitness(em.map50, em.map50_95);
    result.history.push_back(em);
    if (metrics.is_open()) metrics << to_json(em).dump() << '\n' << std::flush;
    if (opt.on_epoch) opt.on_epoch(em);

    const int before = stopper.best_epoch();
    const bool stop = stopper.update(em.epoch, em.fitness);
    if (stopper.best_epoch() != before || best_weights.empty()) {
      best_weights = snapshot();
      if (!opt.out_dir.empty())
        save_checkpoint(model, CheckpointInfo{opt.side, {{"epoch", em.epoch}, {"fitness", em.fitness}}},
                        opt.out_dir / "best.ckpt");
    }
    if (!opt.out_dir.empty())
      save_checkpoint(model, CheckpointInfo{opt.side, {{"epoch", em.epoch}, {"fitness", em.fitness}}},
                      opt.out_dir / "last.ckpt");
    if (stop) {
      result.stopped_early = em.epoch < last_epoch;
      break;
    }
  }
  result.best_epoch = stopper.best_epoch();
  result.best_fitness = stopper.best_fitness();
  restore(best_weights);
  return result;
}

}  // namespace voxdet
