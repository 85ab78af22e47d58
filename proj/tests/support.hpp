#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cvloc/synth.hpp"

namespace cvloc::testing {

/// A reduced scene that generates in a few milliseconds.
inline SynthConfig small_config(std::uint64_t seed) {
  SynthConfig s;
  s.seed = seed;
  s.sat_size = 128;
  s.ground_width = 640;
  s.ground_height = 256;
  s.focal_px = 360;
  s.point_count = 400;
  s.feature_smoothness = 4;
  return s;
}

/// Regularized upper incomplete gamma Q(a, x) by series / continued fraction.
inline double gamma_q(double a, double x) {
  if (x <= 0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 10000; ++n) {
      ap += 1;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1 - a, c = 1e300, d = 1 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

/// Upper tail p-value of a chi-square statistic.
inline double chi_square_p(double stat, int dof) { return gamma_q(0.5 * dof, 0.5 * stat); }

/// Asymptotic Kolmogorov distribution tail P(K > lambda).
inline double ks_p(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double s = 0;
  for (int k = 1; k < 200; ++k) s += 2 * ((k % 2) ? 1 : -1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(s, 0.0, 1.0);
}

/// One-sample KS p-value of `x` against U(lo, hi).
inline double ks_uniform_p(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = (x[i] - lo) / (hi - lo);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sn = std::sqrt(n);
  return ks_p((sn + 0.12 + 0.11 / sn) * d);
}

}  // namespace cvloc::testing
