// Gauss-Legendre rules, composite Simpson and pairwise summation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "kslab/core/errors.hpp"

namespace kslab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b] (Newton iteration on P_n).
inline QuadratureRule gauss_legendre(std::size_t n, double a = -1.0, double b = 1.0) {
  if (n == 0) throw PreconditionError("gauss_legendre: n must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * static_cast<double>(k) - 1.0) * z * p1 - (static_cast<double>(k) - 1.0) * p2) /
             static_cast<double>(k);
      }
      dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = mid - half * z;
    rule.nodes[n - 1 - i] = mid + half * z;
    rule.weights[i] = rule.weights[n - 1 - i] = half * w;
  }
  return rule;
}

/// Sum with O(log n) error growth; the result does not depend on threading.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

/// Composite Simpson on equally spaced samples; an even number of
/// intervals is required.
inline double simpson(std::span<const double> y, double h) {
  const std::size_t n = y.size();
  if (n < 3 || (n - 1) % 2 != 0) throw PreconditionError("simpson: need an odd number of samples >= 3");
  double s = y[0] + y[n - 1];
  for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 ? 4.0 : 2.0) * y[i];
  return s * h / 3.0;
}

/// Integral of fn over [a, b] split at the given interior points, with a
/// fixed Gauss-Legendre rule on each piece subdivided `pieces` times.
template <class Fn>
double integrate_pieces(const Fn& fn, double a, double b, std::span<const double> cuts,
                        std::size_t order = 20, std::size_t pieces = 4) {
  std::vector<double> pts{a};
  for (double c : cuts) {
    if (c > a && c < b) pts.push_back(c);
  }
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  const auto ref = gauss_legendre(order);
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    const double len = (pts[s + 1] - pts[s]) / static_cast<double>(pieces);
    for (std::size_t p = 0; p < pieces; ++p) {
      const double lo = pts[s] + len * static_cast<double>(p);
      const double mid = lo + 0.5 * len;
      for (std::size_t k = 0; k < order; ++k) {
        total += 0.5 * len * ref.weights[k] * fn(mid + 0.5 * len * ref.nodes[k]);
      }
    }
  }
  return total;
}

}  // namespace kslab
