// Real functions of one variable with declared breakpoints.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kslab/core/errors.hpp"

namespace kslab {

/// Formats a double so that parsing it back gives the same value.
inline std::string exact_repr(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// A piecewise-smooth function: evaluator plus the points where it may fail
/// to be smooth. The descriptor identifies the function for caching and
/// manifests; two functions with equal descriptors must be equal.
struct PiecewiseFunction {
  std::function<double(double)> eval;
  std::vector<double> breakpoints;
  std::string descriptor;

  double operator()(double x) const { return eval(x); }

  /// Breakpoints strictly inside (a, b).
  std::vector<double> breakpoints_in(double a, double b) const {
    std::vector<double> out;
    const double lo = std::min(a, b), hi = std::max(a, b);
    for (double p : breakpoints) {
      if (p > lo && p < hi) out.push_back(p);
    }
    return out;
  }
};

inline PiecewiseFunction constant_function(double c) {
  return {[c](double) { return c; }, {}, "const(" + exact_repr(c) + ")"};
}

inline PiecewiseFunction zero_function() { return constant_function(0.0); }

/// x -> c on [a, b], 0 elsewhere.
inline PiecewiseFunction indicator_function(double a, double b, double c = 1.0) {
  return {[a, b, c](double x) { return (x >= a && x <= b) ? c : 0.0; },
          {a, b},
          "ind(" + exact_repr(a) + "," + exact_repr(b) + "," + exact_repr(c) + ")"};
}

/// Linear interpolation through (xs, ys); zero outside [xs.front(), xs.back()].
/// Repeated abscissae encode jumps (right-continuous at the jump).
inline PiecewiseFunction piecewise_linear(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw PreconditionError("piecewise_linear: need at least two (x, y) pairs of equal length");
  }
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] >= xs[i - 1])) throw PreconditionError("piecewise_linear: abscissae must be nondecreasing");
  }
  std::string desc = "pwl(";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    desc += exact_repr(xs[i]) + ":" + exact_repr(ys[i]) + (i + 1 < xs.size() ? ";" : ")");
  }
  std::vector<double> bps = xs;
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  auto data = std::make_shared<std::pair<std::vector<double>, std::vector<double>>>(std::move(xs), std::move(ys));
  auto fn = [data](double x) {
    const auto& [px, py] = *data;
    if (x < px.front() || x > px.back()) return 0.0;
    auto it = std::upper_bound(px.begin(), px.end(), x);
    if (it == px.end()) return py.back();
    const std::size_t k = static_cast<std::size_t>(it - px.begin());
    const double x0 = px[k - 1], x1 = px[k];
    if (x1 == x0) return py[k];
    const double t = (x - x0) / (x1 - x0);
    return py[k - 1] + t * (py[k] - py[k - 1]);
  };
  return {fn, std::move(bps), std::move(desc)};
}

/// y -> f(y + s). The breakpoints move by -s.
inline PiecewiseFunction translate(const PiecewiseFunction& f, double s) {
  if (s == 0.0) return f;
  std::vector<double> bps;
  bps.reserve(f.breakpoints.size());
  for (double p : f.breakpoints) bps.push_back(p - s);
  auto inner = f.eval;
  return {[inner, s](double y) { return inner(y + s); }, std::move(bps),
          "shift(" + f.descriptor + "," + exact_repr(s) + ")"};
}

/// a*f + b*g + c.
inline PiecewiseFunction linear_combination(double a, const PiecewiseFunction& f, double b,
                                            const PiecewiseFunction& g, double c = 0.0) {
  std::vector<double> bps = f.breakpoints;
  bps.insert(bps.end(), g.breakpoints.begin(), g.breakpoints.end());
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  auto fe = f.eval;
  auto ge = g.eval;
  return {[fe, ge, a, b, c](double x) { return a * fe(x) + b * ge(x) + c; }, std::move(bps),
          "lin(" + exact_repr(a) + "," + f.descriptor + "," + exact_repr(b) + "," + g.descriptor + "," +
              exact_repr(c) + ")"};
}

}  // namespace kslab
