// Acceptance run: one PASS/FAIL line per criterion. Optional arguments select
// criteria by number, e.g. `acceptance 6 9`.
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "kslab/checks.hpp"

using namespace kslab;

namespace {

const std::vector<double> kEnergyGrid{-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0};

SuiteResult criterion(int id) {
  const auto reference = reference_model(3.0);
  switch (id) {
    case 1:
      return identity_suite(100, 1);
    case 2:
      return solution_estimate_suite(50, 2);
    case 3:
      return eigensolver_suite(20, 3);
    case 4:
      return roundtrip_suite(reference_model(10.0), 20, 4);
    case 5:
      return jacobian_suite(reference, 10, 5);
    case 6:
      return operator_norm_suite(reference, 0, kEnergyGrid);
    case 7: {
      const PiecewiseFunction p{[](double y) { return std::cos(2.0 * std::numbers::pi * y); }, {}, "cos(2 pi y)"};
      return continuity_suite(reference, zero_function(), p, 1.0);
    }
    case 8:
      return large_coupling_suite(make_site_cell(reference, 0, 0.0), {1e2, 1e3, 1e4}, 10, 8);
    case 9: {
      const auto rate = operator_bound_rate(reference, {0}, kEnergyGrid);
      return correlator_decay_suite(reference, 8, {1, 2, 3, 4, 5, 6}, 2000, 9, rate).result;
    }
    case 10:
      // E_max = 2 keeps exactly one eigenvalue in the window for every
      // omega in [0, 1]^4, so the integrand is smooth.
      return mc_vs_quadrature_suite(reference_model(2.0), 2, 1, 2, 10000, 10, 15, 12);
    case 11:
      return bound_suite(reference, 2, {1, 2}, 1.0);
    default:
      throw PreconditionError("no criterion " + std::to_string(id));
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty()) {
    for (int i = 1; i <= 11; ++i) selected.insert(i);
  }
  int failures = 0;
  for (int id : selected) {
    SuiteResult r;
    try {
      r = criterion(id);
    } catch (const std::exception& e) {
      r.name = "error";
      r.passed = false;
      r.summary = e.what();
    }
    if (!r.passed) ++failures;
    std::printf("criterion %2d: %s  %s: %s [%.1f s]\n", id, r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.summary.c_str(), r.seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
