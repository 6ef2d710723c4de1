// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Target assignment and the composite detection loss
//   total = bs * (box_gain * L_box + obj_gain * L_obj + cls_gain * L_cls)
// with analytic gradients w.r.t. every raw head logit.
#pragma once

#include <map>
#include <tuple>

#include "voxdet/decode.hpp"

namespace voxdet {

struct LossConfig {
  double box_gain = 0.05;
  double obj_gain = 1.0;
  double cls_gain = 0.5;
  double anchor_t = 4.0;
  double focal_gamma = 0.0;  // 0 disables
  std::vector<double> balance{4.0, 1.0, 0.4};

  double balance_at(std::size_t s) const { return s < balance.size() ? balance[s] : 1.0; }
};

struct Target {
  std::int64_t sample = 0;
  int anchor = 0;
  std::int64_t cell[3]{0, 0, 0};
  Box3 box;
};

struct Assignment {
  std::vector<std::vector<Target>> scales;  // positives per detection scale
  std::size_t unmatched = 0;                // GT boxes with no positive anywhere

  std::size_t positives() const {
    std::size_t n = 0;
    for (const auto& s : scales) n += s.size();
    return n;
  }
};

namespace detail {

inline bool anchor_fits(const Box3& b, const Extent3& anchor, std::int64_t side, double anchor_t) {
  for (int a = 0; a < 3; ++a) {
    const double r = b.extent[a] * static_cast<double>(side) / anchor[static_cast<std::size_t>(a)];
    if (!(std::max(r, 1.0 / r) < anchor_t)) return false;
  }
  return true;
}

}  // namespace detail

// Center cell plus, per axis, the neighbor on the side of the fractional
// offset (strictly below or above 0.5). A later GT overwrites an earlier one
// on the same (sample, anchor, cell).
inline Assignment assign_targets(const std::vector<std::vector<Box3>>& labels, const AnchorSet& anchors,
                                 const std::vector<std::int64_t>& grids, std::int64_t side, double anchor_t) {
  if (grids.size() != anchors.per_scale.size())
    throw Error(Errc::GridMismatch, "grid count does not match anchor scales");
  Assignment out;
  out.scales.resize(grids.size());
  using Key = std::tuple<std::int64_t, int, std::int64_t, std::int64_t, std::int64_t>;
  std::vector<std::map<Key, std::size_t>> slot(grids.size());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    for (const Box3& b : labels[n]) {
      bool any = false;
      for (std::size_t s = 0; s < grids.size(); ++s) {
        const std::int64_t G = grids[s];
        const auto sa = anchors.scale(s);
        for (std::size_t a = 0; a < sa.size(); ++a) {
          if (!detail::anchor_fits(b, sa[a], side, anchor_t)) continue;
          any = true;
          std::int64_t base[3];
          double frac[3];
          for (int k = 0; k < 3; ++k) {
            const double g = b.center[k] * static_cast<double>(G);
            base[k] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(g)), 0, G - 1);
            frac[k] = g - static_cast<double>(base[k]);
          }
          std::vector<std::array<std::int64_t, 3>> cells{{base[0], base[1], base[2]}};
          for (int k = 0; k < 3; ++k) {
            std::array<std::int64_t, 3> c{base[0], base[1], base[2]};
            if (frac[k] < 0.5 && base[k] >= 1) {
              c[static_cast<std::size_t>(k)] -= 1;
            } else if (frac[k] > 0.5 && base[k] <= G - 2) {
              c[static_cast<std::size_t>(k)] += 1;
            } else {
              continue;
            }
            cells.push_back(c);
          }
          for (const auto& c : cells) {
            Target t;
            t.sample = static_cast<std::int64_t>(n);
            t.anchor = static_cast<int>(a);
            for (int k = 0; k < 3; ++k) t.cell[k] = c[static_cast<std::size_t>(k)];
            t.box = b;
            const Key key{t.sample, t.anchor, c[0], c[1], c[2]};
            auto it = slot[s].find(key);
            if (it == slot[s].end()) {
              slot[s].emplace(key, out.scales[s].size());
              out.scales[s].push_back(t);
            } else {
              out.scales[s][it->second] = t;
            }
          }
        }
      }
      if (!any) ++out.unmatched;
    }
  }
  return out;
}

// Gradient of a scalar w.r.t. a box's center and extent.
struct BoxGrad {
  Vec3 center{0, 0, 0};
  Vec3 extent{0, 0, 0};
};

// 1 - IoU + |c_p - c_t|^2 / diag^2 of the enclosing box.
inline double diou_box_loss(const Box3& p, const Box3& t, BoxGrad* grad = nullptr) {
  double L[3], C[3], dLlo[3], dLhi[3], dClo[3], dChi[3];
  double inter = 1.0, diag2 = 0.0, rho2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double pl = p.lo(a), ph = p.hi(a), tl = t.lo(a), th = t.hi(a);
    const double len = std::min(ph, th) - std::max(pl, tl);
    L[a] = std::max(0.0, len);
    dLhi[a] = len > 0.0 && ph < th ? 1.0 : 0.0;
    dLlo[a] = len > 0.0 && pl > tl ? -1.0 : 0.0;
    C[a] = std::max(ph, th) - std::min(pl, tl);
    dChi[a] = ph > th ? 1.0 : 0.0;
    dClo[a] = pl < tl ? -1.0 : 0.0;
    inter *= L[a];
    diag2 += C[a] * C[a];
    const double d = p.center[a] - t.center[a];
    rho2 += d * d;
  }
  const double vp = p.volume(), U = vp + t.volume() - inter;
  const double iou = U > 0.0 ? inter / U : 0.0;
  const double loss = 1.0 - iou + (diag2 > 0.0 ? rho2 / diag2 : 0.0);
  if (!grad) return loss;
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    const double others = L[b] * L[c];
    const double dinter_lo = others * dLlo[a], dinter_hi = others * dLhi[a];
    const double dvp_de = p.extent[b] * p.extent[c];
    // d iou = (d inter (U + inter) - inter d vp) / U^2
    auto diou = [&](double dinter, double dvp) { return U > 0.0 ? (dinter * (U + inter) - inter * dvp) / (U * U) : 0.0; };
    auto dpen = [&](double ddiag2, double drho2) {
      return diag2 > 0.0 ? drho2 / diag2 - rho2 * ddiag2 / (diag2 * diag2) : 0.0;
    };
    const double ddiag_lo = 2.0 * C[a] * dClo[a], ddiag_hi = 2.0 * C[a] * dChi[a];
    const double drho_c = 2.0 * (p.center[a] - t.center[a]);
    // lo = c - e/2, hi = c + e/2
    const double g_lo = -diou(dinter_lo, 0.0) + dpen(ddiag_lo, 0.0);
    const double g_hi = -diou(dinter_hi, 0.0) + dpen(ddiag_hi, 0.0);
    grad->center[a] = g_lo + g_hi + dpen(0.0, drho_c);
    grad->extent[a] = 0.5 * (g_hi - g_lo) - diou(0.0, dvp_de);
  }
  return loss;
}

namespace detail {

// softplus(x) = log(1 + e^x), stable.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double bce_logits(double z, double y) { return softplus(z) - y * z; }
inline double bce_logits_grad(double z, double y) { return sigmoid(z) - y; }

// -(1 - p_t)^gamma log p_t for a hard target y in {0, 1}; gamma = 0 is plain BCE.
inline double focal_logits(double z, double y, double gamma, double* dz) {
  if (gamma == 0.0) {
    if (dz) *dz = bce_logits_grad(z, y);
    return bce_logits(z, y);
  }
  const double sgn = y > 0.5 ? 1.0 : -1.0;
  const double zt = sgn * z;
  const double pt = sigmoid(zt), log_pt = -softplus(-zt), q = 1.0 - pt;
  const double mod = std::pow(q, gamma);
  if (dz) *dz = sgn * mod * (gamma * pt * log_pt - q);
  return -mod * log_pt;
}

template <typename T>
void check_loss_inputs(const std::vector<PredGrid<T>>& preds, const AnchorSet& anchors) {
  if (preds.size() != anchors.per_scale.size())
    throw Error(Errc::GridMismatch, "prediction scales do not match anchor scales");
  for (std::size_t s = 0; s < preds.size(); ++s)
    if (preds[s].anchors != anchors.per_scale[s]) throw Error(Errc::GridMismatch, "anchor count mismatch");
}

template <typename T>
CellRef cell_ref(const PredGrid<T>& p, const Target& t, const AnchorSet& anchors, std::size_t s, std::int64_t side) {
  return CellRef{{t.cell[0], t.cell[1], t.cell[2]}, p.grid(), anchors.scale(s)[static_cast<std::size_t>(t.anchor)], side};
}

template <typename T>
Box3 predicted_box(const PredGrid<T>& p, const Target& t, const CellRef& ref) {
  double raw[6];
  for (int k = 0; k < 6; ++k) raw[k] = p.at(t.sample, t.anchor, k, t.cell[0], t.cell[1], t.cell[2]);
  return decode_box(raw, ref);
}

}  // namespace detail

template <typename T>
std::vector<PredGrid<T>> zero_grads_like(const std::vector<PredGrid<T>>& preds) {
  std::vector<PredGrid<T>> g;
  for (const auto& p : preds) g.push_back(PredGrid<T>::zeros_like(p));
  return g;
}

// Sum over scales of the mean DIoU loss over that scale's positives.
// `grad` (if given) receives d(scale * L_box)/d logits, accumulated.
template <typename T>
double box_loss(const std::vector<PredGrid<T>>& preds, const Assignment& asg, const AnchorSet& anchors,
                std::int64_t side, std::vector<PredGrid<T>>* grad = nullptr, double scale = 1.0) {
  double total = 0.0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto& targets = asg.scales[s];
    if (targets.empty()) continue;
    const double w = 1.0 / static_cast<double>(targets.size());
    const auto& p = preds[s];
    const double G = static_cast<double>(p.grid()), D = static_cast<double>(side);
    for (const auto& t : targets) {
      const auto ref = detail::cell_ref(p, t, anchors, s, side);
      BoxGrad bg;
      total += w * diou_box_loss(detail::predicted_box(p, t, ref), t.box, grad ? &bg : nullptr);
      if (!grad) continue;
      auto& gp = (*grad)[s];
      for (int a = 0; a < 3; ++a) {
        const double zc = p.at(t.sample, t.anchor, a, t.cell[0], t.cell[1], t.cell[2]);
        const double ze = p.at(t.sample, t.anchor, 3 + a, t.cell[0], t.cell[1], t.cell[2]);
        const double sc = sigmoid(zc), se = sigmoid(ze);
        // dc/dz = 2 s (1 - s) / G; de/dz = 8 anchor s^2 (1 - s) / D
        const double dc = 2.0 * sc * (1.0 - sc) / G;
        const double de = 8.0 * ref.anchor[static_cast<std::size_t>(a)] * se * se * (1.0 - se) / D;
        gp.at(t.sample, t.anchor, a, t.cell[0], t.cell[1], t.cell[2]) += static_cast<T>(scale * w * bg.center[a] * dc);
        gp.at(t.sample, t.anchor, 3 + a, t.cell[0], t.cell[1], t.cell[2]) +=
            static_cast<T>(scale * w * bg.extent[a] * de);
      }
    }
  }
  return total;
}

// Objectness targets at positives: clamp(IoU(decoded prediction, GT), 0, 1),
// treated as constants. Indexed like Assignment::scales.
using ObjTargets = std::vector<std::vector<double>>;

template <typename T>
ObjTargets objectness_targets(const std::vector<PredGrid<T>>& preds, const Assignment& asg, const AnchorSet& anchors,
                              std::int64_t side) {
  ObjTargets out(preds.size());
  for (std::size_t s = 0; s < preds.size(); ++s)
    for (const auto& t : asg.scales[s]) {
      const auto ref = detail::cell_ref(preds[s], t, anchors, s, side);
      out[s].push_back(std::clamp(iou3d(detail::predicted_box(preds[s], t, ref), t.box), 0.0, 1.0));
    }
  return out;
}

// Balance-weighted sum over scales of the mean BCE over every (sample, anchor, cell).
template <typename T>
double objectness_loss(const std::vector<PredGrid<T>>& preds, const Assignment& asg, const ObjTargets& targets,
                       const LossConfig& cfg, std::vector<PredGrid<T>>* grad = nullptr, double scale = 1.0) {
  double total = 0.0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto& p = preds[s];
    const std::int64_t G = p.grid();
    const std::int64_t cells = p.batch() * p.anchors * G * G * G;
    std::vector<double> tgt(static_cast<std::size_t>(cells), 0.0);
    auto flat = [&](const Target& t) {
      return static_cast<std::size_t>((((t.sample * p.anchors + t.anchor) * G + t.cell[0]) * G + t.cell[1]) * G +
                                      t.cell[2]);
    };
    for (std::size_t i = 0; i < asg.scales[s].size(); ++i) tgt[flat(asg.scales[s][i])] = targets[s][i];
    const double w = cfg.balance_at(s) / static_cast<double>(cells);
    const std::int64_t vol = G * G * G;
    double sum = 0.0;
    for (std::int64_t n = 0; n < p.batch(); ++n)
      for (int a = 0; a < p.anchors; ++a) {
        const std::size_t base = p.offset(n, a, 6, 0, 0, 0);
        const std::size_t tb = static_cast<std::size_t>((n * p.anchors + a) * vol);
        for (std::int64_t i = 0; i < vol; ++i) {
          const double z = p.raw.data[base + static_cast<std::size_t>(i)];
          const double y = tgt[tb + static_cast<std::size_t>(i)];
          sum += detail::bce_logits(z, y);
          if (grad) (*grad)[s].raw.data[base + static_cast<std::size_t>(i)] += static_cast<T>(scale * w * detail::bce_logits_grad(z, y));
        }
      }
    total += w * sum;
  }
  return total;
}

// Sum over scales of the mean (focal) BCE over positives x classes; identically 0 for one class.
template <typename T>
double classification_loss(const std::vector<PredGrid<T>>& preds, const Assignment& asg, double focal_gamma,
                           std::vector<PredGrid<T>>* grad = nullptr, double scale = 1.0) {
  double total = 0.0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto& p = preds[s];
    const auto& targets = asg.scales[s];
    if (p.num_classes <= 1 || targets.empty()) continue;
    const double w = 1.0 / static_cast<double>(targets.size() * static_cast<std::size_t>(p.num_classes));
    for (const auto& t : targets)
      for (int c = 0; c < p.num_classes; ++c) {
        const double z = p.at(t.sample, t.anchor, 7 + c, t.cell[0], t.cell[1], t.cell[2]);
        const double y = c == t.box.class_id ? 1.0 : 0.0;
        double dz = 0.0;
        total += w * detail::focal_logits(z, y, focal_gamma, grad ? &dz : nullptr);
        if (grad) (*grad)[s].at(t.sample, t.anchor, 7 + c, t.cell[0], t.cell[1], t.cell[2]) += static_cast<T>(scale * w * dz);
      }
  }
  return total;
}

struct LossBreakdown {
  double total = 0.0;
  double box = 0.0;  // L_box, L_obj, L_cls before gains and batch scaling
  double obj = 0.0;
  double cls = 0.0;
  std::size_t positives = 0;
  std::size_t unmatched = 0;
};

// `frozen` replaces the IoU-derived objectness targets (gradient checks hold them fixed).
template <typename T>
LossBreakdown total_loss(const std::vector<PredGrid<T>>& preds, const std::vector<std::vector<Box3>>& labels,
                         const AnchorSet& anchors, std::int64_t side, const LossConfig& cfg,
                         std::vector<PredGrid<T>>* grad = nullptr, const ObjTargets* frozen = nullptr) {
  detail::check_loss_inputs(preds, anchors);
  std::vector<std::int64_t> grids;
  for (const auto& p : preds) grids.push_back(p.grid());
  const Assignment asg = assign_targets(labels, anchors, grids, side, cfg.anchor_t);
  if (grad) *grad = zero_grads_like(preds);
  const double bs = static_cast<double>(preds.front().batch());
  LossBreakdown out;
  out.positives = asg.positives();
  out.unmatched = asg.unmatched;
  out.box = box_loss(preds, asg, anchors, side, grad, bs * cfg.box_gain);
  const ObjTargets targets = frozen ? *frozen : objectness_targets(preds, asg, anchors, side);
  out.obj = objectness_loss(preds, asg, targets, cfg, grad, bs * cfg.obj_gain);
  out.cls = classification_loss(preds, asg, cfg.focal_gamma, grad, bs * cfg.cls_gain);
  out.total = bs * (cfg.box_gain * out.box + cfg.obj_gain * out.obj + cfg.cls_gain * out.cls);
  return out;
}

}  // namespace voxdet
