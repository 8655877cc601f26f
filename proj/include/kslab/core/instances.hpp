// Random problem generators for the randomized check suites and tests.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "kslab/core/function.hpp"
#include "kslab/model.hpp"

namespace kslab::instances {

inline double uniform(std::mt19937_64& rng, double a, double b) { return a + (b - a) * uniform01(rng); }

/// Piecewise-constant potential on [a, b] with `pieces` random levels in
/// [lo, hi]; the levels hold on the whole line beyond the end pieces.
inline PiecewiseFunction random_step_potential(std::mt19937_64& rng, double a, double b, int pieces, double lo,
                                               double hi) {
  std::vector<double> cuts, levels;
  for (int k = 1; k < pieces; ++k) cuts.push_back(a + (b - a) * k / pieces + uniform(rng, -0.3, 0.3) * (b - a) / pieces);
  for (int k = 0; k < pieces; ++k) levels.push_back(uniform(rng, lo, hi));
  std::string desc = "steps(";
  for (double c : cuts) desc += exact_repr(c) + ",";
  for (double l : levels) desc += exact_repr(l) + ",";
  desc += ")";
  return {[cuts, levels](double x) {
            std::size_t k = 0;
            while (k < cuts.size() && x >= cuts[k]) ++k;
            return levels[k];
          },
          cuts, desc};
}

/// A smooth random potential: sum of two cosines plus a constant.
inline PiecewiseFunction random_smooth_potential(std::mt19937_64& rng, double scale) {
  const double c0 = uniform(rng, -scale, scale), a1 = uniform(rng, -scale, scale), k1 = uniform(rng, 0.5, 4.0),
               p1 = uniform(rng, 0.0, 6.0), a2 = uniform(rng, -scale, scale), k2 = uniform(rng, 0.5, 4.0);
  return {[=](double x) { return c0 + a1 * std::cos(k1 * x + p1) + a2 * std::sin(k2 * x); },
          {},
          "smooth(" + exact_repr(c0) + "," + exact_repr(a1) + "," + exact_repr(k1) + ")"};
}

}  // namespace kslab::instances
