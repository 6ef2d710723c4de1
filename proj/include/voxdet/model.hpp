// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Configurable 3-D detection network built from a ModelSpec.
//
// Building blocks:
//   Conv     3-D convolution (no bias) + batch norm + SiLU
//   C3       1x1 split into a bottleneck stack and a bypass, concat, 1x1 merge
//   SPPF     1x1 reduce, three serial 5^3 max pools, concat, 1x1
//   Upsample nearest x2
//   Concat   channel concatenation
//   Detect   one 1x1 convolution (with bias) per consumed feature map
#pragma once

#include <memory>
#include <numeric>
#include <set>

#include "voxdet/layers.hpp"
#include "voxdet/model_config.hpp"

namespace voxdet {

using Shape5 = std::array<std::int64_t, 5>;

inline constexpr double kObjectnessBiasInit = -5.0;

template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t s,
            std::int64_t p = -1)
      : conv_(name + ".conv", cin, cout, k, s, p < 0 ? k / 2 : p, false), bn_(name + ".bn", cout) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = conv_.forward(x);
    bn_.forward(y, train, train ? &bn_cache_ : nullptr);
    if (train) pre_act_ = y;
    for (auto& v : y.data) v = silu_value(v);
    has_cache_ = train;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, Tensor<T> dy, bool need_dx = true) {
    if (!has_cache_) throw Error(Errc::InvalidArgument, "backward without a training forward pass");
    for (std::size_t i = 0; i < dy.data.size(); ++i) dy.data[i] *= silu_grad(pre_act_.data[i]);
    bn_.backward(dy, bn_cache_);
    return conv_.backward(x, dy, need_dx);
  }

  Shape5 out_shape(const Shape5& in) const { return conv_.out_shape(in); }
  std::int64_t out_channels() const { return conv_.out_channels(); }

  void init(Rng& rng) { conv_.init(rng); }
  void collect(std::vector<Param<T>*>& out) {
    conv_.collect(out);
    bn_.collect(out);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) { bn_.collect_buffers(out); }
  void clear_cache() {
    pre_act_.release();
    bn_cache_.xhat.release();
    has_cache_ = false;
  }
  Conv3d<T>& conv() { return conv_; }
  BatchNorm3d<T>& bn() { return bn_; }

 private:
  Conv3d<T> conv_;
  BatchNorm3d<T> bn_;
  typename BatchNorm3d<T>::Cache bn_cache_;
  Tensor<T> pre_act_;
  bool has_cache_ = false;
};

template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const std::vector<const Tensor<T>*>& in, bool train) = 0;
  virtual std::vector<Tensor<T>> backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>& dy) = 0;
  virtual Shape5 out_shape(const std::vector<Shape5>& in) const = 0;
  virtual void init(Rng&) {}
  virtual void collect(std::vector<Param<T>*>&) {}
  virtual void collect_buffers(std::vector<Buffer<T>>&) {}
  virtual void clear_cache() {}
};

template <typename T>
class ConvLayer final : public Module<T> {
 public:
  ConvLayer(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t s,
            std::int64_t p)
      : block_(name, cin, cout, k, s, p) {}
  Tensor<T> forward(const std::vector<const Tensor<T>*>& in, bool train) override { return block_.forward(*in[0], train); }
  std::vector<Tensor<T>> backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>& dy) override {
    std::vector<Tensor<T>> out;
    out.push_back(block_.backward(*in[0], dy));
    return out;
  }
  Shape5 out_shape(const std::vector<Shape5>& in) const override { return block_.out_shape(in[0]); }
  void init(Rng& rng) override { block_.init(rng); }
  void collect(std::vector<Param<T>*>& out) override { block_.collect(out); }
  void collect_buffers(std::vector<Buffer<T>>& out) override { block_.collect_buffers(out); }
  void clear_cache() override { block_.clear_cache(); }

 private:
  ConvBlock<T> block_;
};

template <typename T>
class Bottleneck {
 public:
  Bottleneck(const std::string& name, std::int64_t c, bool shortcut)
      : cv1_(name + ".cv1", c, c, 1, 1), cv2_(name + ".cv2", c, c, 3, 1), add_(shortcut) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> h = cv1_.forward(x, train);
    Tensor<T> y = cv2_.forward(h, train);
    if (train) hidden_ = std::move(h);
    if (add_)
      for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
    return y;
  }
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dh = cv2_.backward(hidden_, dy);
    Tensor<T> dx = cv1_.backward(x, std::move(dh));
    if (add_)
      for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
    return dx;
  }
  void init(Rng& rng) {
    cv1_.init(rng);
    cv2_.init(rng);
  }
  void collect(std::vector<Param<T>*>& out) {
    cv1_.collect(out);
    cv2_.collect(out);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) {
    cv1_.collect_buffers(out);
    cv2_.collect_buffers(out);
  }
  void clear_cache() {
    cv1_.clear_cache();
    cv2_.clear_cache();
    hidden_.release();
  }

 private:
  ConvBlock<T> cv1_, cv2_;
  bool add_;
  Tensor<T> hidden_;
};

template <typename T>
class C3Layer final : public Module<T> {
 public:
  C3Layer(const std::string& name, std::int64_t cin, std::int64_t cout, int n, bool shortcut)
      : hidden_(cout / 2),
        cv1_(name + ".cv1", cin, cout / 2, 1, 1),
        cv2_(name + ".cv2", cin, cout / 2, 1, 1),
        cv3_(name + ".cv3", 2 * (cout / 2), cout, 1, 1) {
    for (int i = 0; i < n; ++i) m_.emplace_back(name + ".m." + std::to_string(i), hidden_, shortcut);
  }

  Tensor<T> forward(const std::vector<const Tensor<T>*>& in, bool train) override {
    const Tensor<T>& x = *in[0];
    std::vector<Tensor<T>> chain;
    chain.push_back(cv1_.forward(x, train));
    for (auto& b : m_) chain.push_back(b.forward(chain.back(), train));
    Tensor<T> bypass = cv2_.forward(x, train);
    Tensor<T> cat = concat_channels<T>({&chain.back(), &bypass});
    Tensor<T> y = cv3_.forward(cat, train);
    if (train) {
      chain_ = std::move(chain);
      cat_ = std::move(cat);
    }
    return y;
  }

  std::vector<Tensor<T>> backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>& dy) override {
    const Tensor<T>& x = *in[0];
    Tensor<T> dcat = cv3_.backward(cat_, dy);
    auto parts = concat_channels_backward(dcat, {chain_.back().shape, chain_.back().shape});
    Tensor<T> dx = cv2_.backward(x, std::move(parts[1]));
    Tensor<T> da = std::move(parts[0]);
    for (std::size_t i = m_.size(); i-- > 0;) da = m_[i].backward(chain_[i], da);
    Tensor<T> dx1 = cv1_.backward(x, std::move(da));
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dx1.data[i];
    std::vector<Tensor<T>> out;
    out.push_back(std::move(dx));
    return out;
  }

  Shape5 out_shape(const std::vector<Shape5>& in) const override {
    return {in[0][0], cv3_.out_channels(), in[0][2], in[0][3], in[0][4]};
  }
  void init(Rng& rng) override {
    cv1_.init(rng);
    cv2_.init(rng);
    for (auto& b : m_) b.init(rng);
    cv3_.init(rng);
  }
  void collect(std::vector<Param<T>*>& out) override {
    cv1_.collect(out);
    cv2_.collect(out);
    for (auto& b : m_) b.collect(out);
    cv3_.collect(out);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) override {
    cv1_.collect_buffers(out);
    cv2_.collect_buffers(out);
    for (auto& b : m_) b.collect_buffers(out);
    cv3_.collect_buffers(out);
  }
  void clear_cache() override {
    cv1_.clear_cache();
    cv2_.clear_cache();
    cv3_.clear_cache();
    for (auto& b : m_) b.clear_cache();
    chain_.clear();
    cat_.release();
  }

 private:
  std::int64_t hidden_;
  ConvBlock<T> cv1_, cv2_, cv3_;
  std::vector<Bottleneck<T>> m_;
  std::vector<Tensor<T>> chain_;
  Tensor<T> cat_;
};

template <typename T>
class SPPFLayer final : public Module<T> {
 public:
  SPPFLayer(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k)
      : k_(k), cv1_(name + ".cv1", cin, cin / 2, 1, 1), cv2_(name + ".cv2", 4 * (cin / 2), cout, 1, 1) {}

  Tensor<T> forward(const std::vector<const Tensor<T>*>& in, bool train) override {
    Tensor<T> a = cv1_.forward(*in[0], train);
    std::array<std::vector<std::int32_t>, 3> am;
    Tensor<T> y1 = maxpool3d(a, k_, train ? &am[0] : nullptr);
    Tensor<T> y2 = maxpool3d(y1, k_, train ? &am[1] : nullptr);
    Tensor<T> y3 = maxpool3d(y2, k_, train ? &am[2] : nullptr);
    Tensor<T> cat = concat_channels<T>({&a, &y1, &y2, &y3});
    Tensor<T> y = cv2_.forward(cat, train);
    if (train) {
      argmax_ = std::move(am);
      reduced_shape_ = a.shape;
      cat_ = std::move(cat);
    }
    return y;
  }

  std::vector<Tensor<T>> backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>& dy) override {
    Tensor<T> dcat = cv2_.backward(cat_, dy);
    auto p = concat_channels_backward(dcat, {reduced_shape_, reduced_shape_, reduced_shape_, reduced_shape_});
    maxpool3d_backward_add(p[3], argmax_[2], p[2]);
    maxpool3d_backward_add(p[2], argmax_[1], p[1]);
    maxpool3d_backward_add(p[1], argmax_[0], p[0]);
    std::vector<Tensor<T>> out;
    out.push_back(cv1_.backward(*in[0], std::move(p[0])));
    return out;
  }

  Shape5 out_shape(const std::vector<Shape5>& in) const override {
    return {in[0][0], cv2_.out_channels(), in[0][2], in[0][3], in[0][4]};
  }
  void init(Rng& rng) override {
    cv1_.init(rng);
    cv2_.init(rng);
  }
  void collect(std::vector<Param<T>*>& out) override {
    cv1_.collect(out);
    cv2_.collect(out);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) override {
    cv1_.collect_buffers(out);
    cv2_.collect_buffers(out);
  }
  void clear_cache() override {
    cv1_.clear_cache();
    cv2_.clear_cache();
    cat_.release();
    for (auto& a : argmax_) a.clear();
  }

 private:
  std::int64_t k_;
  ConvBlock<T> cv1_, cv2_;
  std::array<std::vector<std::int32_t>, 3> argmax_;
  Shape5 reduced_shape_{};
  Tensor<T> cat_;
};

template <typename T>
class UpsampleLayer final : public Module<T> {
 public:
  Tensor<T> forward(const std::vector<const Tensor<T>*>& in, bool) override { return upsample_nearest2(*in[0]); }
  std::vector<Tensor<T>> backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>& dy) override {
    std::vector<Tensor<T>> out;
    out.push_back(upsample_nearest2_backward(dy, in[0]->shape));
    return out;
  }
  Shape5 out_shape(const std::vector<Shape5>& in) const override {
    return {in[0][0], in[0][1], 2 * in[0][2], 2 * in[0][3], 2 * in[0][4]};
  }
};

template <typename T>
class ConcatLayer final : public Module<T> {
 public:
  Tensor<T> forward(const std::vector<const Tensor<T>*>& in, bool) override { return concat_channels(in); }
  std::vector<Tensor<T>> backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>& dy) override {
    std::vector<Shape5> shapes;
    for (const auto* x : in) shapes.push_back(x->shape);
    return concat_channels_backward(dy, shapes);
  }
  Shape5 out_shape(const std::vector<Shape5>& in) const override {
    Shape5 s = in[0];
    s[1] = 0;
    for (const auto& x : in) {
      s[1] += x[1];
      for (int a = 2; a < 5; ++a) s[a] = std::min(s[a], x[a]);
    }
    for (const auto& x : in)
      for (int a = 2; a < 5; ++a)
        if (x[a] - s[a] > 1) throw Error(Errc::ShapeMismatch, "concat inputs differ by more than one voxel");
    return s;
  }
};

template <typename T>
class Model {
 public:
  // Builds the graph; weights are He-uniform initialized from `seed` unless `initialize` is false.
  explicit Model(ModelSpec spec, std::uint64_t seed = 0, bool initialize = true) : spec_(std::move(spec)) {
    build();
    if (initialize) init(seed);
  }

  const ModelSpec& spec() const { return spec_; }
  const AnchorSet& anchors() const { return spec_.anchors; }
  void set_anchors(AnchorSet a) {
    if (a.size() != static_cast<std::size_t>(spec_.anchor_count))
      throw Error(Errc::ShapeMismatch, "model expects " + std::to_string(spec_.anchor_count) + " anchors");
    spec_.anchors = std::move(a);
  }
  int num_classes() const { return spec_.num_classes; }
  int anchors_per_scale() const { return spec_.anchors_per_scale(); }
  bool initialized() const { return initialized_; }
  void mark_initialized() { initialized_ = true; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& m : modules_)
      if (m) m->init(rng);
    const int no = 7 + spec_.num_classes;
    for (auto& head : detect_) {
      head.init(rng);
      auto& b = head.bias().value;
      std::fill(b.begin(), b.end(), T{});
      for (int a = 0; a < spec_.anchors_per_scale(); ++a) b[static_cast<std::size_t>(a * no + 6)] = static_cast<T>(kObjectnessBiasInit);
      // single class: the class logit receives no loss gradient, so it is pinned at 0 (sigma = 0.5)
      if (spec_.num_classes == 1) {
        auto& w = head.weight().value;
        const auto cin = static_cast<std::size_t>(head.in_channels());
        for (int a = 0; a < spec_.anchors_per_scale(); ++a) {
          const auto row = static_cast<std::size_t>(a * no + 7);
          std::fill(w.begin() + static_cast<long>(row * cin), w.begin() + static_cast<long>((row + 1) * cin), T{});
        }
      }
    }
    initialized_ = true;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& m : modules_)
      if (m) m->collect(out);
    for (auto& head : detect_) head.collect(out);
    return out;
  }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    for (auto& m : modules_)
      if (m) m->collect_buffers(out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  // Symbolic shape propagation: per-scale grid sides for a cube side.
  std::vector<std::int64_t> grid_sides(std::int64_t side) const {
    if (side < kMinCubeSide) throw Error(Errc::SideTooSmall, "cube side " + std::to_string(side));
    std::vector<Shape5> shapes(spec_.layers.size());
    const Shape5 input{1, spec_.input_channels, side, side, side};
    for (std::size_t i = 0; i + 1 < spec_.layers.size(); ++i) {
      std::vector<Shape5> in;
      for (int f : spec_.layers[i].from) in.push_back(f < 0 ? input : shapes[static_cast<std::size_t>(f)]);
      shapes[i] = modules_[i]->out_shape(in);
    }
    std::vector<std::int64_t> out;
    for (int f : spec_.detect().from) {
      const auto& s = shapes[static_cast<std::size_t>(f)];
      if (s[2] != s[3] || s[3] != s[4]) throw Error(Errc::ShapeMismatch, "non-cubic feature map");
      out.push_back(s[2]);
    }
    return out;
  }

  // x: (N, 1, D, D, D). Training mode keeps every activation for backward();
  // inference mode frees each activation after its last consumer.
  std::vector<PredGrid<T>> forward(const Tensor<T>& x, bool train) {
    if (!initialized_) throw Error(Errc::UninitializedWeights, "model weights were never initialized or loaded");
    if (x.c() != spec_.input_channels || x.d() != x.h() || x.h() != x.w())
      throw Error(Errc::ShapeMismatch, "expected a batch of single-channel cubes, got " + shape_string(x.shape));
    const std::size_t L = spec_.layers.size();
    outputs_.assign(L, Tensor<T>{});
    for (std::size_t i = 0; i + 1 < L; ++i) {
      std::vector<const Tensor<T>*> in;
      for (int f : spec_.layers[i].from) in.push_back(f < 0 ? &x : &outputs_[static_cast<std::size_t>(f)]);
      outputs_[i] = modules_[i]->forward(in, train);
      if (!train) {
        for (int f : spec_.layers[i].from)
          if (f >= 0 && last_use_[static_cast<std::size_t>(f)] == i) outputs_[static_cast<std::size_t>(f)].release();
      }
    }
    std::vector<PredGrid<T>> preds;
    const auto& det = spec_.detect();
    for (std::size_t s = 0; s < det.from.size(); ++s) {
      const auto& feat = outputs_[static_cast<std::size_t>(det.from[s])];
      preds.push_back(PredGrid<T>{detect_[s].forward(feat), spec_.anchors_per_scale(), spec_.num_classes});
    }
    if (train) {
      input_ = &x;
    } else {
      outputs_.clear();
      input_ = nullptr;
    }
    trained_forward_ = train;
    return preds;
  }

  // Gradients of the loss w.r.t. each PredGrid; accumulates into Param::grad.
  void backward(const std::vector<PredGrid<T>>& dpreds) {
    if (!trained_forward_ || !input_) throw Error(Errc::InvalidArgument, "backward() requires a training forward()");
    const std::size_t L = spec_.layers.size();
    std::vector<Tensor<T>> grads(L);
    auto accumulate = [&](int f, Tensor<T>&& g) {
      if (f < 0) return;
      auto& dst = grads[static_cast<std::size_t>(f)];
      if (dst.empty()) {
        dst = std::move(g);
      } else {
        for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
      }
    };
    const auto& det = spec_.detect();
    for (std::size_t s = 0; s < det.from.size(); ++s) {
      const int f = det.from[s];
      accumulate(f, detect_[s].backward(outputs_[static_cast<std::size_t>(f)], dpreds[s].raw, true));
    }
    for (std::size_t i = L - 1; i-- > 0;) {
      if (grads[i].empty()) continue;
      std::vector<const Tensor<T>*> in;
      for (int f : spec_.layers[i].from) in.push_back(f < 0 ? input_ : &outputs_[static_cast<std::size_t>(f)]);
      auto gin = modules_[i]->backward(in, grads[i]);
      grads[i].release();
      for (std::size_t j = 0; j < gin.size(); ++j) {
        // the first layer's input gradient is never needed
        if (spec_.layers[i].from[j] >= 0) accumulate(spec_.layers[i].from[j], std::move(gin[j]));
      }
    }
    release_activations();
  }

  void release_activations() {
    outputs_.clear();
    input_ = nullptr;
    trained_forward_ = false;
    for (auto& m : modules_)
      if (m) m->clear_cache();
  }

  std::vector<Conv3d<T>>& detect_heads() { return detect_; }

 private:
  void build() {
    const std::size_t L = spec_.layers.size();
    std::vector<std::int64_t> ch(L, 0);
    modules_.resize(L);
    last_use_.assign(L, 0);
    auto in_ch = [&](int f) { return f < 0 ? static_cast<std::int64_t>(spec_.input_channels) : ch[static_cast<std::size_t>(f)]; };
    auto arg_num = [&](const LayerSpec& l, std::size_t i, double def) {
      if (i >= l.args.size() || l.args[i] == "None") return def;
      try {
        return std::stod(l.args[i]);
      } catch (const std::exception&) {
        throw Error(Errc::ParseError, std::string(layer_kind_name(l.kind)) + " argument '" + l.args[i] + "' is not a number");
      }
    };
    for (std::size_t i = 0; i < L; ++i) {
      const auto& l = spec_.layers[i];
      const std::string name = "model." + std::to_string(i);
      for (int f : l.from)
        if (f >= 0) last_use_[static_cast<std::size_t>(f)] = i;
      const std::int64_t c1 = in_ch(l.from.front());
      if (l.kind != LayerKind::Concat && l.kind != LayerKind::Detect && l.from.size() != 1)
        throw Error(Errc::ParseError, "layer " + std::to_string(i) + " takes exactly one input");
      switch (l.kind) {
        case LayerKind::Conv: {
          const int c2 = scale_channels(arg_num(l, 0, 0), spec_.width_multiple);
          const auto k = static_cast<std::int64_t>(arg_num(l, 1, 1));
          const auto s = static_cast<std::int64_t>(arg_num(l, 2, 1));
          const auto p = static_cast<std::int64_t>(arg_num(l, 3, static_cast<double>(k / 2)));
          if (l.repeats != 1) throw Error(Errc::ParseError, "Conv repeats must be 1");
          modules_[i] = std::make_unique<ConvLayer<T>>(name, c1, c2, k, s, p);
          ch[i] = c2;
          break;
        }
        case LayerKind::C3: {
          const int c2 = scale_channels(arg_num(l, 0, 0), spec_.width_multiple);
          const bool shortcut = l.args.size() < 2 || (l.args[1] != "False" && l.args[1] != "false");
          modules_[i] = std::make_unique<C3Layer<T>>(name, c1, c2, l.repeats, shortcut);
          ch[i] = c2;
          break;
        }
        case LayerKind::SPPF: {
          const int c2 = scale_channels(arg_num(l, 0, 0), spec_.width_multiple);
          const auto k = static_cast<std::int64_t>(arg_num(l, 1, 5));
          modules_[i] = std::make_unique<SPPFLayer<T>>(name, c1, c2, k);
          ch[i] = c2;
          break;
        }
        case LayerKind::Upsample: {
          // accepts [2] or [None, 2, nearest]
          const double scale = l.args.size() >= 2 ? arg_num(l, 1, 2) : arg_num(l, 0, 2);
          if (scale != 2.0) throw Error(Errc::ParseError, "only x2 nearest upsampling is supported");
          modules_[i] = std::make_unique<UpsampleLayer<T>>();
          ch[i] = c1;
          break;
        }
        case LayerKind::Concat: {
          std::int64_t c = 0;
          for (int f : l.from) c += in_ch(f);
          modules_[i] = std::make_unique<ConcatLayer<T>>();
          ch[i] = c;
          break;
        }
        case LayerKind::Detect: {
          const std::int64_t no = spec_.anchors_per_scale() * (7 + spec_.num_classes);
          for (std::size_t s = 0; s < l.from.size(); ++s)
            detect_.emplace_back(name + ".m." + std::to_string(s), in_ch(l.from[s]), no, 1, 1, 0, true);
          break;
        }
      }
    }
  }

  ModelSpec spec_;
  std::vector<std::unique_ptr<Module<T>>> modules_;  // last slot (Detect) is null
  std::vector<Conv3d<T>> detect_;
  std::vector<std::size_t> last_use_;
  std::vector<Tensor<T>> outputs_;
  const Tensor<T>* input_ = nullptr;
  bool initialized_ = false;
  bool trained_forward_ = false;
};

// Parameter count from layer-spec arithmetic alone (no model instantiation).
inline std::size_t count_parameters(const ModelSpec& spec) {
  const std::size_t L = spec.layers.size();
  std::vector<std::int64_t> ch(L, 0);
  auto conv = [](std::int64_t cin, std::int64_t cout, std::int64_t k) {
    return static_cast<std::size_t>(cin * cout * k * k * k + 2 * cout);
  };
  std::size_t total = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const auto& l = spec.layers[i];
    auto in = [&](int f) { return f < 0 ? static_cast<std::int64_t>(spec.input_channels) : ch[static_cast<std::size_t>(f)]; };
    const std::int64_t c1 = in(l.from.front());
    auto num = [&](std::size_t j, double d) { return j < l.args.size() && l.args[j] != "None" ? std::stod(l.args[j]) : d; };
    switch (l.kind) {
      case LayerKind::Conv:
        ch[i] = scale_channels(num(0, 0), spec.width_multiple);
        total += conv(c1, ch[i], static_cast<std::int64_t>(num(1, 1)));
        break;
      case LayerKind::C3: {
        ch[i] = scale_channels(num(0, 0), spec.width_multiple);
        const std::int64_t h = ch[i] / 2;
        total += 2 * conv(c1, h, 1) + conv(2 * h, ch[i], 1);
        total += static_cast<std::size_t>(l.repeats) * (conv(h, h, 1) + conv(h, h, 3));
        break;
      }
      case LayerKind::SPPF:
        ch[i] = scale_channels(num(0, 0), spec.width_multiple);
        total += conv(c1, c1 / 2, 1) + conv(4 * (c1 / 2), ch[i], 1);
        break;
      case LayerKind::Upsample:
        ch[i] = c1;
        break;
      case LayerKind::Concat:
        for (int f : l.from) ch[i] += in(f);
        break;
      case LayerKind::Detect: {
        const std::int64_t no = spec.anchors_per_scale() * (7 + spec.num_classes);
        for (int f : l.from) total += static_cast<std::size_t>(in(f) * no + no);
        break;
      }
    }
  }
  return total;
}

}  // namespace voxdet
