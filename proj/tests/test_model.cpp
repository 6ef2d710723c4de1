// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "voxdet/model.hpp"

namespace voxdet {
namespace {

const std::string kSource = VOXDET_SOURCE_DIR;

// Every block kind at minimal width, three detection scales.
constexpr const char* kTinyConfig = R"(
nc: 2
depth_multiple: 0.33
width_multiple: 0.125
anchors: 6
backbone:
  [[-1, 1, Conv, [64, 3, 2, 1]],
   [-1, 1, Conv, [64, 3, 2]],
   [-1, 3, C3, [64]],
   [-1, 1, Conv, [64, 3, 2]],
   [-1, 1, C3, [64]],
   [-1, 1, Conv, [64, 3, 2]],
   [-1, 1, SPPF, [64, 3]],
  ]
head:
  [[-1, 1, Upsample, [None, 2, nearest]],
   [[-1, 4], 1, Concat, [1]],
   [-1, 1, C3, [64, False]],
   [[9, 6, 6], 1, Detect, [nc, anchors]],
  ]
)";

TEST(Model, SmallConfigParameterCount) {
  const ModelSpec spec = load_model_config(kSource + "/configs/small.yaml");
  Model<float> m(spec, 0);
  EXPECT_EQ(m.parameter_count(), 15699408u);
  EXPECT_EQ(count_parameters(spec), 15699408u);
}

TEST(Model, GridSidesMatchFeatureShapes) {
  for (const char* name : {"small", "large"}) {
    const ModelSpec spec = load_model_config(kSource + "/configs/" + name + ".yaml");
    Model<float> m(spec, 0, false);
    for (std::int64_t side : {32, 64, 96, 100, 350, 512}) EXPECT_EQ(m.grid_sides(side), feature_shapes(side)) << side;
  }
}

TEST(Model, ForwardShapes) {
  Model<float> m(load_model_config(kSource + "/configs/small.yaml"), 1);
  const Tensor<float> x(2, 1, 40, 40, 40, 0.5f);
  const auto preds = m.forward(x, false);
  ASSERT_EQ(preds.size(), 3u);
  const auto g = feature_shapes(40);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(preds[s].raw.shape, (std::array<std::int64_t, 5>{2, 2 * 8, g[s], g[s], g[s]}));
    EXPECT_EQ(preds[s].logical_shape(), (std::array<std::int64_t, 5>{2, g[s], g[s], g[s], 8}));
  }
}

TEST(Model, InitialObjectnessAndSingleClassLogits) {
  Model<float> m(load_model_config(kSource + "/configs/small.yaml"), 1);
  Tensor<float> x(1, 1, 32, 32, 32);
  Rng rng(2);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  const auto preds = m.forward(x, false);
  for (const auto& p : preds)
    for (int a = 0; a < p.anchors; ++a) {
      EXPECT_EQ(p.at(0, a, 7, 0, 0, 0), 0.0f);
      EXPECT_LT(p.at(0, a, 6, 0, 0, 0), -2.0f);
    }
}

TEST(Model, DeterministicInit) {
  const ModelSpec spec = parse_model_config(kTinyConfig);
  Model<float> a(spec, 5), b(spec, 5), c(spec, 6);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  EXPECT_EQ(pa[0]->value, pb[0]->value);
  EXPECT_NE(pa[0]->value, pc[0]->value);
}

TEST(Model, Errors) {
  const ModelSpec spec = parse_model_config(kTinyConfig);
  Model<float> m(spec, 0, false);
  auto code = [&](const Tensor<float>& x) {
    try {
      m.forward(x, false);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidArgument;
  };
  EXPECT_EQ(code(Tensor<float>(1, 1, 32, 32, 32)), Errc::UninitializedWeights);
  m.init(0);
  EXPECT_EQ(code(Tensor<float>(1, 2, 32, 32, 32)), Errc::ShapeMismatch);
  EXPECT_EQ(code(Tensor<float>(1, 1, 32, 32, 30)), Errc::ShapeMismatch);
  EXPECT_THROW(m.grid_sides(31), Error);
}

// Finite differences of a random linear functional of the network output,
// in double, over sampled parameters from every layer.
TEST(Model, BackwardMatchesFiniteDifferences) {
  const ModelSpec spec = parse_model_config(kTinyConfig);
  Model<double> m(spec, 3);
  Rng rng(4);
  for (auto* p : m.params())
    for (auto& v : p->value) v += 0.05 * rng.normal();  // break the zero-initialized symmetries
  Tensor<double> x(2, 1, 32, 32, 32);
  for (auto& v : x.data) v = rng.normal();
  auto preds = m.forward(x, true);
  std::vector<PredGrid<double>> w;
  for (const auto& p : preds) {
    auto g = PredGrid<double>::zeros_like(p);
    for (auto& v : g.raw.data) v = rng.normal();
    w.push_back(std::move(g));
  }
  auto objective = [&] {
    const auto out = m.forward(x, true);
    double s = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k)
      for (std::size_t i = 0; i < out[k].raw.data.size(); ++i) s += out[k].raw.data[i] * w[k].raw.data[i];
    m.release_activations();
    return s;
  };
  m.zero_grad();
  m.forward(x, true);
  m.backward(w);
  double worst = 0.0;
  const double eps = 1e-5;
  for (auto* p : m.params()) {
    for (int t = 0; t < 3; ++t) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(p->size()) - 1));
      const double analytic = p->grad[i];
      const double v0 = p->value[i];
      p->value[i] = v0 + eps;
      const double fp = objective();
      p->value[i] = v0 - eps;
      const double fm = objective();
      p->value[i] = v0;
      const double numeric = (fp - fm) / (2 * eps);
      const double err = std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
      worst = std::max(worst, err);
      EXPECT_LT(err, 1e-4) << p->name << "[" << i << "] analytic " << analytic << " numeric " << numeric;
    }
  }
  RecordProperty("max_relative_error", std::to_string(worst));
}

}  // namespace
}  // namespace voxdet
