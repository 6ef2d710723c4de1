// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// 3-D network primitives with explicit forward/backward passes.
// Convolution lowers to GEMM through a chunked im2col so the column buffer
// stays bounded at large cube sides.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "voxdet/tensor.hpp"

namespace voxdet {

enum class ParamGroup { Weight, Norm, Bias };

template <typename T>
struct Param {
  std::string name;
  std::vector<std::int64_t> shape;
  AlignedVector<T> value;
  AlignedVector<T> grad;
  ParamGroup group = ParamGroup::Weight;

  Param() = default;
  Param(std::string n, std::vector<std::int64_t> s, ParamGroup g, T fill = T{}) : name(std::move(n)), shape(std::move(s)), group(g) {
    std::size_t count = 1;
    for (auto v : shape) count *= static_cast<std::size_t>(v);
    value.assign(count, fill);
    grad.assign(count, T{});
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{}); }
};

// Non-trainable state that still belongs in a checkpoint (BN running stats).
template <typename T>
struct Buffer {
  std::string name;
  std::vector<T>* values = nullptr;
};

namespace detail {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::int64_t kMaxColumnElements = std::int64_t{1} << 24;

struct ConvGeom {
  std::int64_t cin, d, h, w, k, s, p, od, oh, ow;

  std::int64_t rows() const { return cin * k * k * k; }
  std::int64_t plane() const { return oh * ow; }
  // valid [lo, hi) output range whose input index o*s - p + t stays inside [0, n)
  static void valid_range(std::int64_t n, std::int64_t on, std::int64_t s, std::int64_t p, std::int64_t t,
                          std::int64_t& lo, std::int64_t& hi) {
    lo = 0;
    while (lo < on && lo * s - p + t < 0) ++lo;
    hi = on;
    while (hi > lo && (hi - 1) * s - p + t >= n) --hi;
  }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, std::int64_t od0, std::int64_t nd, T* col) {
  const std::int64_t pc = nd * g.plane();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.cin; ++c)
    for (std::int64_t kd = 0; kd < g.k; ++kd)
      for (std::int64_t kh = 0; kh < g.k; ++kh)
        for (std::int64_t kw = 0; kw < g.k; ++kw, ++row) {
          T* r = col + row * pc;
          std::int64_t w_lo, w_hi;
          ConvGeom::valid_range(g.w, g.ow, g.s, g.p, kw, w_lo, w_hi);
          for (std::int64_t od = od0; od < od0 + nd; ++od) {
            T* rd = r + (od - od0) * g.plane();
            const std::int64_t id = od * g.s - g.p + kd;
            if (id < 0 || id >= g.d) {
              std::fill(rd, rd + g.plane(), T{});
              continue;
            }
            for (std::int64_t oh = 0; oh < g.oh; ++oh) {
              T* rh = rd + oh * g.ow;
              const std::int64_t ih = oh * g.s - g.p + kh;
              if (ih < 0 || ih >= g.h) {
                std::fill(rh, rh + g.ow, T{});
                continue;
              }
              const T* src = x + ((c * g.d + id) * g.h + ih) * g.w - g.p + kw;
              std::fill(rh, rh + w_lo, T{});
              if (g.s == 1) {
                std::memcpy(rh + w_lo, src + w_lo, static_cast<std::size_t>(w_hi - w_lo) * sizeof(T));
              } else {
                for (std::int64_t ow = w_lo; ow < w_hi; ++ow) rh[ow] = src[ow * g.s];
              }
              std::fill(rh + w_hi, rh + g.ow, T{});
            }
          }
        }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, std::int64_t od0, std::int64_t nd, T* dx) {
  const std::int64_t pc = nd * g.plane();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.cin; ++c)
    for (std::int64_t kd = 0; kd < g.k; ++kd)
      for (std::int64_t kh = 0; kh < g.k; ++kh)
        for (std::int64_t kw = 0; kw < g.k; ++kw, ++row) {
          const T* r = col + row * pc;
          std::int64_t w_lo, w_hi;
          ConvGeom::valid_range(g.w, g.ow, g.s, g.p, kw, w_lo, w_hi);
          for (std::int64_t od = od0; od < od0 + nd; ++od) {
            const std::int64_t id = od * g.s - g.p + kd;
            if (id < 0 || id >= g.d) continue;
            const T* rd = r + (od - od0) * g.plane();
            for (std::int64_t oh = 0; oh < g.oh; ++oh) {
              const std::int64_t ih = oh * g.s - g.p + kh;
              if (ih < 0 || ih >= g.h) continue;
              const T* rh = rd + oh * g.ow;
              T* dst = dx + ((c * g.d + id) * g.h + ih) * g.w - g.p + kw;
              for (std::int64_t ow = w_lo; ow < w_hi; ++ow) dst[ow * g.s] += rh[ow];
            }
          }
        }
}

}  // namespace detail

inline std::int64_t conv_out_size(std::int64_t n, std::int64_t k, std::int64_t s, std::int64_t p) {
  return (n + 2 * p - k) / s + 1;
}

template <typename T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t s,
         std::int64_t p, bool bias)
      : cin_(cin), cout_(cout), k_(k), s_(s), p_(p), has_bias_(bias),
        weight_(name + ".weight", {cout, cin, k, k, k}, ParamGroup::Weight) {
    if (bias) bias_ = Param<T>(name + ".bias", {cout}, ParamGroup::Bias);
  }

  std::int64_t in_channels() const { return cin_; }
  std::int64_t out_channels() const { return cout_; }
  std::int64_t kernel() const { return k_; }
  std::int64_t stride() const { return s_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  // He-uniform over fan-in.
  void init(Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(cin_ * k_ * k_ * k_));
    for (auto& v : weight_.value) v = static_cast<T>(rng.uniform(-bound, bound));
    std::fill(bias_.value.begin(), bias_.value.end(), T{});
  }

  std::array<std::int64_t, 5> out_shape(const std::array<std::int64_t, 5>& in) const {
    return {in[0], cout_, conv_out_size(in[2], k_, s_, p_), conv_out_size(in[3], k_, s_, p_),
            conv_out_size(in[4], k_, s_, p_)};
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.c() != cin_) throw Error(Errc::ShapeMismatch, weight_.name + ": expected " + std::to_string(cin_) + " channels");
    const auto os = out_shape(x.shape);
    Tensor<T> y(os[0], os[1], os[2], os[3], os[4]);
    const auto g = geom(x);
    const std::int64_t P = g.od * g.plane();
    Eigen::Map<const detail::MatR<T>> W(weight_.value.data(), cout_, g.rows());
    AlignedVector<T> col;
    for (std::int64_t n = 0; n < x.n(); ++n) {
      Eigen::Map<detail::MatR<T>> Y(y.sample(n), cout_, P);
      if (pointwise()) {
        Eigen::Map<const detail::MatR<T>> X(x.sample(n), cin_, P);
        Y.noalias() = W * X;
      } else {
        const std::int64_t nd = chunk_depth(g);
        col.resize(static_cast<std::size_t>(g.rows() * nd * g.plane()));
        for (std::int64_t od0 = 0; od0 < g.od; od0 += nd) {
          const std::int64_t cur = std::min(nd, g.od - od0);
          const std::int64_t pc = cur * g.plane();
          detail::im2col(x.sample(n), g, od0, cur, col.data());
          Eigen::Map<const detail::MatR<T>> C(col.data(), g.rows(), pc);
          Y.middleCols(od0 * g.plane(), pc).noalias() = W * C;
        }
      }
      if (has_bias_)
        for (std::int64_t o = 0; o < cout_; ++o) Y.row(o).array() += bias_.value[static_cast<std::size_t>(o)];
    }
    return y;
  }

  // Accumulates parameter gradients; returns dL/dx when requested.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx) {
    const auto g = geom(x);
    const std::int64_t P = g.od * g.plane();
    Eigen::Map<const detail::MatR<T>> W(weight_.value.data(), cout_, g.rows());
    Eigen::Map<detail::MatR<T>> dW(weight_.grad.data(), cout_, g.rows());
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>::like(x);
    AlignedVector<T> col, dcol;
    for (std::int64_t n = 0; n < x.n(); ++n) {
      Eigen::Map<const detail::MatR<T>> dY(dy.sample(n), cout_, P);
      if (has_bias_)
        for (std::int64_t o = 0; o < cout_; ++o) bias_.grad[static_cast<std::size_t>(o)] += dY.row(o).sum();
      if (pointwise()) {
        Eigen::Map<const detail::MatR<T>> X(x.sample(n), cin_, P);
        dW.noalias() += dY * X.transpose();
        if (need_dx) {
          Eigen::Map<detail::MatR<T>> dX(dx.sample(n), cin_, P);
          dX.noalias() = W.transpose() * dY;
        }
        continue;
      }
      const std::int64_t nd = chunk_depth(g);
      col.resize(static_cast<std::size_t>(g.rows() * nd * g.plane()));
      if (need_dx) dcol.resize(col.size());
      for (std::int64_t od0 = 0; od0 < g.od; od0 += nd) {
        const std::int64_t cur = std::min(nd, g.od - od0);
        const std::int64_t pc = cur * g.plane();
        detail::im2col(x.sample(n), g, od0, cur, col.data());
        Eigen::Map<const detail::MatR<T>> C(col.data(), g.rows(), pc);
        const auto dYc = dY.middleCols(od0 * g.plane(), pc);
        dW.noalias() += dYc * C.transpose();
        if (need_dx) {
          Eigen::Map<detail::MatR<T>> dC(dcol.data(), g.rows(), pc);
          dC.noalias() = W.transpose() * dYc;
          detail::col2im_add(dcol.data(), g, od0, cur, dx.sample(n));
        }
      }
    }
    return dx;
  }

 private:
  bool pointwise() const { return k_ == 1 && s_ == 1 && p_ == 0; }

  detail::ConvGeom geom(const Tensor<T>& x) const {
    return {cin_, x.d(), x.h(), x.w(), k_, s_, p_, conv_out_size(x.d(), k_, s_, p_),
            conv_out_size(x.h(), k_, s_, p_), conv_out_size(x.w(), k_, s_, p_)};
  }

  static std::int64_t chunk_depth(const detail::ConvGeom& g) {
    const std::int64_t per_slice = g.rows() * g.plane();
    return std::clamp<std::int64_t>(detail::kMaxColumnElements / std::max<std::int64_t>(per_slice, 1), 1, g.od);
  }

  std::int64_t cin_ = 0, cout_ = 0, k_ = 1, s_ = 1, p_ = 0;
  bool has_bias_ = false;
  Param<T> weight_;
  Param<T> bias_;
};

// Batch normalization over (N, D, H, W) per channel. Running statistics follow
// running = (1 - momentum) * running + momentum * batch, with unbiased variance.
template <typename T>
class BatchNorm3d {
 public:
  struct Cache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
  };

  BatchNorm3d() = default;
  BatchNorm3d(const std::string& name, std::int64_t c, double momentum = 0.03, double eps = 1e-3)
      : c_(c), momentum_(momentum), eps_(eps),
        gamma_(name + ".weight", {c}, ParamGroup::Norm, T(1)),
        beta_(name + ".bias", {c}, ParamGroup::Bias, T(0)),
        running_mean_(static_cast<std::size_t>(c), T(0)),
        running_var_(static_cast<std::size_t>(c), T(1)),
        name_(name) {}

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) {
    out.push_back({name_ + ".running_mean", &running_mean_});
    out.push_back({name_ + ".running_var", &running_var_});
  }
  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  std::vector<T>& running_mean() { return running_mean_; }
  std::vector<T>& running_var() { return running_var_; }

  // In-place forward on y; fills cache when training.
  void forward(Tensor<T>& y, bool train, Cache* cache) {
    const std::int64_t sp = y.spatial(), nb = y.n();
    const double m = static_cast<double>(sp * nb);
    if (cache) {
      cache->inv_std.assign(static_cast<std::size_t>(c_), T{});
      cache->xhat = Tensor<T>::like(y);
    }
    for (std::int64_t ch = 0; ch < c_; ++ch) {
      double mean, var;
      if (train) {
        double s = 0.0;
        for (std::int64_t n = 0; n < nb; ++n) {
          const T* p = y.channel(n, ch);
          for (std::int64_t i = 0; i < sp; ++i) s += p[i];
        }
        mean = s / m;
        double ss = 0.0;
        for (std::int64_t n = 0; n < nb; ++n) {
          const T* p = y.channel(n, ch);
          for (std::int64_t i = 0; i < sp; ++i) ss += (p[i] - mean) * (p[i] - mean);
        }
        var = ss / m;
        const auto c = static_cast<std::size_t>(ch);
        const double unbiased = m > 1.0 ? ss / (m - 1.0) : var;
        running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
        running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
      } else {
        mean = running_mean_[static_cast<std::size_t>(ch)];
        var = running_var_[static_cast<std::size_t>(ch)];
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
      const T g = gamma_.value[static_cast<std::size_t>(ch)], b = beta_.value[static_cast<std::size_t>(ch)];
      const T mu = static_cast<T>(mean);
      if (cache) cache->inv_std[static_cast<std::size_t>(ch)] = inv;
      for (std::int64_t n = 0; n < nb; ++n) {
        T* p = y.channel(n, ch);
        T* xh = cache ? cache->xhat.channel(n, ch) : nullptr;
        for (std::int64_t i = 0; i < sp; ++i) {
          const T v = (p[i] - mu) * inv;
          if (xh) xh[i] = v;
          p[i] = g * v + b;
        }
      }
    }
  }

  // dy -> dx in place, batch-statistics mode.
  void backward(Tensor<T>& dy, const Cache& cache) {
    const std::int64_t sp = dy.spatial(), nb = dy.n();
    const double m = static_cast<double>(sp * nb);
    for (std::int64_t ch = 0; ch < c_; ++ch) {
      const auto c = static_cast<std::size_t>(ch);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::int64_t n = 0; n < nb; ++n) {
        const T* g = dy.channel(n, ch);
        const T* xh = cache.xhat.channel(n, ch);
        for (std::int64_t i = 0; i < sp; ++i) {
          sum_dy += g[i];
          sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
        }
      }
      gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
      beta_.grad[c] += static_cast<T>(sum_dy);
      const T scale = gamma_.value[c] * cache.inv_std[c];
      const T mean_dy = static_cast<T>(sum_dy / m), mean_dy_xhat = static_cast<T>(sum_dy_xhat / m);
      for (std::int64_t n = 0; n < nb; ++n) {
        T* g = dy.channel(n, ch);
        const T* xh = cache.xhat.channel(n, ch);
        for (std::int64_t i = 0; i < sp; ++i) g[i] = scale * (g[i] - mean_dy - xh[i] * mean_dy_xhat);
      }
    }
  }

 private:
  std::int64_t c_ = 0;
  double momentum_ = 0.03, eps_ = 1e-3;
  Param<T> gamma_, beta_;
  std::vector<T> running_mean_, running_var_;
  std::string name_;
};

template <typename T>
inline T silu_value(T x) {
  return x / (T(1) + std::exp(-x));
}

// d silu / dx at pre-activation x
template <typename T>
inline T silu_grad(T x) {
  const T s = T(1) / (T(1) + std::exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

// Stride-1 "same" max pooling with a cubic window; records argmax for backward.
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, std::int64_t k, std::vector<std::int32_t>* argmax) {
  const std::int64_t p = k / 2, D = x.d(), H = x.h(), W = x.w();
  Tensor<T> y = Tensor<T>::like(x);
  if (argmax) argmax->assign(y.size(), 0);
  for (std::int64_t n = 0; n < x.n(); ++n)
    for (std::int64_t c = 0; c < x.c(); ++c) {
      const T* src = x.channel(n, c);
      T* dst = y.channel(n, c);
      std::int32_t* am = argmax ? argmax->data() + (dst - y.data.data()) : nullptr;
      for (std::int64_t d = 0; d < D; ++d)
        for (std::int64_t h = 0; h < H; ++h)
          for (std::int64_t w = 0; w < W; ++w) {
            T best = -std::numeric_limits<T>::infinity();
            std::int64_t arg = 0;
            for (std::int64_t a = std::max<std::int64_t>(0, d - p); a <= std::min(D - 1, d + p); ++a)
              for (std::int64_t b = std::max<std::int64_t>(0, h - p); b <= std::min(H - 1, h + p); ++b)
                for (std::int64_t e = std::max<std::int64_t>(0, w - p); e <= std::min(W - 1, w + p); ++e) {
                  const std::int64_t idx = (a * H + b) * W + e;
                  if (src[idx] > best) best = src[idx], arg = idx;
                }
            const std::int64_t o = (d * H + h) * W + w;
            dst[o] = best;
            if (am) am[o] = static_cast<std::int32_t>(arg);
          }
    }
  return y;
}

template <typename T>
void maxpool3d_backward_add(const Tensor<T>& dy, const std::vector<std::int32_t>& argmax, Tensor<T>& dx) {
  const std::int64_t sp = dy.spatial();
  for (std::int64_t n = 0; n < dy.n(); ++n)
    for (std::int64_t c = 0; c < dy.c(); ++c) {
      const T* g = dy.channel(n, c);
      const std::int32_t* am = argmax.data() + (g - dy.data.data());
      T* dst = dx.channel(n, c);
      for (std::int64_t i = 0; i < sp; ++i) dst[am[i]] += g[i];
    }
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), 2 * x.d(), 2 * x.h(), 2 * x.w());
  for (std::int64_t n = 0; n < x.n(); ++n)
    for (std::int64_t c = 0; c < x.c(); ++c) {
      const T* src = x.channel(n, c);
      T* dst = y.channel(n, c);
      for (std::int64_t d = 0; d < y.d(); ++d)
        for (std::int64_t h = 0; h < y.h(); ++h)
          for (std::int64_t w = 0; w < y.w(); ++w)
            dst[(d * y.h() + h) * y.w() + w] = src[((d / 2) * x.h() + h / 2) * x.w() + w / 2];
    }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& dy, const std::array<std::int64_t, 5>& in_shape) {
  Tensor<T> dx(in_shape[0], in_shape[1], in_shape[2], in_shape[3], in_shape[4]);
  for (std::int64_t n = 0; n < dy.n(); ++n)
    for (std::int64_t c = 0; c < dy.c(); ++c) {
      const T* g = dy.channel(n, c);
      T* dst = dx.channel(n, c);
      for (std::int64_t d = 0; d < dy.d(); ++d)
        for (std::int64_t h = 0; h < dy.h(); ++h)
          for (std::int64_t w = 0; w < dy.w(); ++w)
            dst[((d / 2) * dx.h() + h / 2) * dx.w() + w / 2] += g[(d * dy.h() + h) * dy.w() + w];
    }
  return dx;
}

// Channel concatenation. Inputs whose spatial size exceeds the smallest one
// (an upsampled odd-sized map) are cropped to the low-index corner.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& xs) {
  std::int64_t n = xs.front()->n(), c = 0;
  std::int64_t d = xs.front()->d(), h = xs.front()->h(), w = xs.front()->w();
  for (const auto* x : xs) {
    if (x->n() != n) throw Error(Errc::ShapeMismatch, "concat batch mismatch");
    d = std::min(d, x->d()), h = std::min(h, x->h()), w = std::min(w, x->w());
    c += x->c();
  }
  for (const auto* x : xs)
    if (x->d() - d > 1 || x->h() - h > 1 || x->w() - w > 1)
      throw Error(Errc::ShapeMismatch, "concat inputs differ by more than one voxel: " + shape_string(x->shape));
  Tensor<T> y(n, c, d, h, w);
  for (std::int64_t s = 0; s < n; ++s) {
    std::int64_t co = 0;
    for (const auto* x : xs)
      for (std::int64_t ci = 0; ci < x->c(); ++ci, ++co) {
        const T* src = x->channel(s, ci);
        T* dst = y.channel(s, co);
        for (std::int64_t a = 0; a < d; ++a)
          for (std::int64_t b = 0; b < h; ++b)
            std::memcpy(dst + (a * h + b) * w, src + (a * x->h() + b) * x->w(), static_cast<std::size_t>(w) * sizeof(T));
      }
  }
  return y;
}

template <typename T>
std::vector<Tensor<T>> concat_channels_backward(const Tensor<T>& dy, const std::vector<std::array<std::int64_t, 5>>& in_shapes) {
  std::vector<Tensor<T>> out;
  std::int64_t co = 0;
  const std::int64_t d = dy.d(), h = dy.h(), w = dy.w();
  for (const auto& s : in_shapes) {
    Tensor<T> dx(s[0], s[1], s[2], s[3], s[4]);
    for (std::int64_t n = 0; n < s[0]; ++n)
      for (std::int64_t ci = 0; ci < s[1]; ++ci) {
        const T* src = dy.channel(n, co + ci);
        T* dst = dx.channel(n, ci);
        for (std::int64_t a = 0; a < d; ++a)
          for (std::int64_t b = 0; b < h; ++b)
            std::memcpy(dst + (a * s[3] + b) * s[4], src + (a * h + b) * w, static_cast<std::size_t>(w) * sizeof(T));
      }
    co += s[1];
    out.push_back(std::move(dx));
  }
  return out;
}

}  // namespace voxdet
