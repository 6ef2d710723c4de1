// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "voxdet/common.hpp"

namespace voxdet {

inline constexpr double kGradcheckEpsilon = 1e-5;

// Rounding bound of one evaluation of f, in units of |f| * machine epsilon.
inline constexpr double kGradcheckRoundoffUlps = 8.0;

// max_i e_i with central differences fd_i and
//   e_i = max(0, |g_i - fd_i| - r_i) / max(1e-8, |g_i| + |fd_i|),
//   r_i = ulps * eps_mach * (|f(x + h)| + |f(x - h)|) / (2 h),
// r_i being the resolution of the difference quotient itself: a coordinate
// whose derivative is below r_i is only checked to within r_i.
inline double gradient_check(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& analytic, std::vector<double> x,
                             double eps = kGradcheckEpsilon) {
  if (analytic.size() != x.size()) throw Error(Errc::InvalidArgument, "gradient size does not match the point");
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + eps;
    const double fp = f(x);
    x[i] = x0 - eps;
    const double fm = f(x);
    x[i] = x0;
    const double fd = (fp - fm) / (2.0 * eps);
    if (!std::isfinite(fd) || !std::isfinite(analytic[i]))
      throw Error(Errc::NonFiniteValue, "non-finite gradient at coordinate " + std::to_string(i));
    const double resolution = kGradcheckRoundoffUlps * std::numeric_limits<double>::epsilon() *
                              (std::abs(fp) + std::abs(fm)) / (2.0 * eps);
    const double err = std::max(0.0, std::abs(analytic[i] - fd) - resolution) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

// Overload for a function that also reports its analytic gradient.
inline double gradient_check(const std::function<double(const std::vector<double>&, std::vector<double>*)>& fg,
                             const std::vector<double>& x, double eps = kGradcheckEpsilon) {
  std::vector<double> g;
  fg(x, &g);
  return gradient_check([&](const std::vector<double>& p) { return fg(p, nullptr); }, g, x, eps);
}

}  // namespace voxdet
