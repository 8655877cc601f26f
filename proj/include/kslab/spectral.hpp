// Dirichlet eigenvalues on [-L, L] by Pruefer shooting, and a dense
// finite-difference oracle.
//
// The phase of the solution with u(-L) = 0, u'(-L) = 1 is strictly
// increasing in E, and the k-th eigenvalue is the energy at which it reaches
// k pi at x = L. Eigenvalues are bracketed by a shared bisection tree.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <ostream>
#include <vector>

#include "kslab/core/errors.hpp"
#include "kslab/core/quadrature.hpp"
#include "kslab/model.hpp"
#include "kslab/prufer.hpp"

namespace kslab {

struct SpectralOptions {
  double tol = 1e-10;       // final bracket width in E
  double ode_tol = 1e-10;   // integrator tolerance
  std::size_t samples_per_unit = 512;
  int max_iterations = 200;
};

struct EigenPair {
  int index_k = 0;
  double energy = 0.0;
  std::vector<double> grid;
  std::vector<double> values;
  double l2_norm_check = 0.0;
  double right_end_phase = 0.0;
  bool boundary_ambiguous = false;
};

/// phi_{-L}(i, omega, E_k) reduced to [0, 2 pi N) at i = -L+1, ..., L-1,
/// together with j = k mod 2N.
struct PhaseProfile {
  int first_site = 0;
  std::vector<double> theta_values;
  std::vector<double> unwrapped;
  int branch_index_j = 0;
  int index_k = 0;
  double energy = 0.0;
};

namespace detail {

inline void check_box(const Couplings& omega, int L) {
  if (L < 1 || omega.first_index != -L + 1 || omega.values.size() != static_cast<std::size_t>(2 * L)) {
    throw PreconditionError("couplings must cover the box [-L, L] (sites -L+1 .. L)");
  }
}

inline double wrap_phase(double phi, double period) {
  double r = std::fmod(phi, period);
  if (r < 0.0) r += period;
  if (r >= period) r -= period;
  return r;
}

}  // namespace detail

/// Unwrapped phi_{-L}(L, omega, E) with phi_{-L}(-L) = 0.
inline double phase_at_right_end(const ModelSpec& spec, const Couplings& omega, int L, double E,
                                 double ode_tol = 1e-10) {
  detail::check_box(omega, L);
  const auto q = full_potential(spec, omega);
  auto qeff = [&](double x) { return q(x) - E; };
  return prufer_shoot(qeff, [](double) { return 0.0; }, q.breakpoints, -L, L, 0.0, ode_options(ode_tol), false, {},
                      [](double, double, double) {})
      .phi;
}

/// Number of Dirichlet eigenvalues below E: floor(phi_{-L}(L, E) / pi).
inline int count_eigenvalues_below(const ModelSpec& spec, const Couplings& omega, int L, double E,
                                   double ode_tol = 1e-10) {
  return static_cast<int>(std::floor(phase_at_right_end(spec, omega, L, E, ode_tol) / std::numbers::pi));
}

/// Normalized eigenfunction u_{-L} at energy E on the uniform grid.
inline EigenPair build_eigenpair(const ModelSpec& spec, const Couplings& omega, int L, int k, double E,
                                 const SpectralOptions& opt = {}) {
  detail::check_box(omega, L);
  const auto q = full_potential(spec, omega);
  const std::size_t n = static_cast<std::size_t>(2 * L) * opt.samples_per_unit;
  std::vector<double> grid(n + 1);
  for (std::size_t i = 0; i <= n; ++i) grid[i] = -L + 2.0 * L * static_cast<double>(i) / static_cast<double>(n);
  grid.back() = L;
  std::vector<double> phi(n + 1), lnR(n + 1);
  std::size_t idx = 0;
  auto qeff = [&](double x) { return q(x) - E; };
  const auto end = prufer_shoot(qeff, [](double) { return 0.0; }, q.breakpoints, -L, L, 0.0, ode_options(opt.ode_tol),
                                false, grid, [&](double, double p, double r) {
                                  phi[idx] = p;
                                  lnR[idx] = r;
                                  ++idx;
                                });
  const double top = *std::max_element(lnR.begin(), lnR.end());
  EigenPair pair;
  pair.index_k = k;
  pair.energy = E;
  pair.right_end_phase = end.phi;
  pair.grid = std::move(grid);
  pair.values.resize(n + 1);
  std::vector<double> sq(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    pair.values[i] = std::exp(lnR[i] - top) * std::sin(phi[i]);
    sq[i] = pair.values[i] * pair.values[i];
  }
  const double h = 2.0 * L / static_cast<double>(n);
  const double norm = std::sqrt(simpson(sq, h));
  for (std::size_t i = 0; i <= n; ++i) {
    pair.values[i] /= norm;
    sq[i] = pair.values[i] * pair.values[i];
  }
  pair.l2_norm_check = std::sqrt(simpson(sq, h));
  return pair;
}

/// Energy where phi_{-L}(L, E) crosses k pi, bracketed by [a, b].
template <class Phase>
double bisect_phase(const Phase& phase, int k, double a, double b, const SpectralOptions& opt) {
  const double target = k * std::numbers::pi;
  for (int it = 0; it < opt.max_iterations && b - a > opt.tol; ++it) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    if (phase(m) < target) {
      a = m;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

/// All eigenpairs with |E_k| <= E_max, sorted by k. Eigenvalues within tol
/// of a window edge are included and flagged.
inline std::vector<EigenPair> find_eigenvalues_in_window(const ModelSpec& spec, const Couplings& omega, int L,
                                                         const SpectralOptions& opt = {}, bool with_functions = true) {
  if (!(opt.tol > 0.0)) throw PreconditionError("find_eigenvalues_in_window: tol must be positive");
  detail::check_box(omega, L);
  const auto q = full_potential(spec, omega);
  const auto oo = ode_options(opt.ode_tol);
  auto phase = [&](double E) {
    auto qeff = [&](double x) { return q(x) - E; };
    return prufer_shoot(qeff, [](double) { return 0.0; }, q.breakpoints, -L, L, 0.0, oo, false, {},
                        [](double, double, double) {})
        .phi;
  };
  const double pi = std::numbers::pi;
  const double lo = -spec.e_max - opt.tol, hi = spec.e_max + opt.tol;
  const double plo = phase(lo), phi_hi = phase(hi);
  const int kmin = static_cast<int>(std::floor(plo / pi)) + 1;
  const int kmax = static_cast<int>(std::floor(phi_hi / pi));
  std::vector<std::pair<int, double>> found;

  // Shared bisection tree: split [a, b] until each bracket holds one target.
  struct Bracket {
    double a, b, pa, pb;
    int k0, k1;
  };
  std::vector<Bracket> stack;
  if (kmax >= kmin) stack.push_back({lo, hi, plo, phi_hi, std::max(kmin, 1), kmax});
  while (!stack.empty()) {
    const auto br = stack.back();
    stack.pop_back();
    if (br.k0 > br.k1) continue;
    if (br.k0 == br.k1) {
      found.emplace_back(br.k0, bisect_phase(phase, br.k0, br.a, br.b, opt));
      continue;
    }
    const double m = 0.5 * (br.a + br.b);
    const double pm = phase(m);
    const int ksplit = static_cast<int>(std::floor(pm / pi));  // targets k pi <= pm go left
    stack.push_back({m, br.b, pm, br.pb, std::max(br.k0, ksplit + 1), br.k1});
    stack.push_back({br.a, m, br.pa, pm, br.k0, std::min(br.k1, ksplit)});
  }
  std::sort(found.begin(), found.end());

  std::vector<EigenPair> out;
  for (const auto& [k, E] : found) {
    EigenPair p;
    if (with_functions) {
      p = build_eigenpair(spec, omega, L, k, E, opt);
    } else {
      p.index_k = k;
      p.energy = E;
    }
    p.boundary_ambiguous = std::abs(std::abs(E) - spec.e_max) <= opt.tol;
    out.push_back(std::move(p));
  }
  return out;
}

/// E_k for a given oscillation index k (no window restriction).
inline double eigenvalue_by_index(const ModelSpec& spec, const Couplings& omega, int L, int k,
                                  const SpectralOptions& opt = {}) {
  detail::check_box(omega, L);
  if (k < 1) throw PreconditionError("eigenvalue_by_index: k must be positive");
  auto phase = [&](double E) { return phase_at_right_end(spec, omega, L, E, opt.ode_tol); };
  double qmin = std::numeric_limits<double>::infinity(), qmax = -qmin;
  for (int i = 0; i <= 2000 * L; ++i) {
    const double x = -L + i / 1000.0;
    const double v = evaluate_full_potential(spec, omega, x);
    qmin = std::min(qmin, v);
    qmax = std::max(qmax, v);
  }
  double a = qmin - 1.0;
  double b = qmax + std::pow(k * std::numbers::pi / (2.0 * L), 2) + 1.0;
  while (phase(b) < k * std::numbers::pi) b += (b - a);
  return bisect_phase(phase, k, a, b, opt);
}

/// Phases at the interior integer sites for an eigenpair of this module.
inline PhaseProfile eigenfunction_phase_profile(const EigenPair& pair, const ModelSpec& spec, const Couplings& omega,
                                                int L, double ode_tol = 1e-10) {
  detail::check_box(omega, L);
  const auto q = full_potential(spec, omega);
  std::vector<double> sites;
  for (int i = -L; i <= L; ++i) sites.push_back(i);
  std::vector<double> phis;
  auto qeff = [&](double x) { return q(x) - pair.energy; };
  prufer_shoot(qeff, [](double) { return 0.0; }, q.breakpoints, -L, L, 0.0, ode_options(ode_tol), false, sites,
               [&](double, double p, double) { phis.push_back(p); });
  PhaseProfile prof;
  prof.first_site = -L + 1;
  prof.index_k = pair.index_k;
  prof.energy = pair.energy;
  const double period = spec.torus_length();
  for (int i = -L + 1; i <= L - 1; ++i) {
    const double p = phis[static_cast<std::size_t>(i + L)];
    prof.unwrapped.push_back(p);
    prof.theta_values.push_back(detail::wrap_phase(p, period));
  }
  prof.branch_index_j = pair.index_k % (2 * spec.phase_bound_N);
  return prof;
}

namespace detail {

/// Number of eigenvalues of the symmetric tridiagonal matrix (d, off) below x.
inline int sturm_count(const std::vector<double>& d, double off, double x) {
  int count = 0;
  double qv = 1.0;
  const double off2 = off * off;
  for (std::size_t i = 0; i < d.size(); ++i) {
    qv = (d[i] - x) - (i == 0 ? 0.0 : off2 / qv);
    if (qv == 0.0) qv = -1e-300;
    if (qv < 0.0) ++count;
  }
  return count;
}

inline std::vector<double> tridiagonal_eigenvalues_below(const std::vector<double>& d, double off, double upper) {
  double lo = *std::min_element(d.begin(), d.end()) - 2.0 * std::abs(off) - 1.0;
  const int count = sturm_count(d, off, upper);
  std::vector<double> ev;
  for (int k = 1; k <= count; ++k) {
    double a = lo, b = upper;
    for (int it = 0; it < 200; ++it) {
      const double m = 0.5 * (a + b);
      if (m <= a || m >= b) break;
      if (sturm_count(d, off, m) >= k) {
        b = m;
      } else {
        a = m;
      }
    }
    ev.push_back(0.5 * (a + b));
    lo = a;
  }
  return ev;
}

inline std::vector<double> difference_matrix_diagonal(const ModelSpec& spec, const Couplings& omega, int L,
                                                      double h) {
  const auto n = static_cast<std::size_t>(std::llround(2.0 * L / h));
  std::vector<double> d(n - 1);
  const double eps = 1e-11;
  for (std::size_t i = 1; i < n; ++i) {
    const double x = -L + h * static_cast<double>(i);
    // One-sided average at a node that carries a jump of the potential.
    const double ql = evaluate_full_potential(spec, omega, std::max(x - eps, -1.0 * L));
    const double qr = evaluate_full_potential(spec, omega, std::min(x + eps, 1.0 * L));
    d[i - 1] = 2.0 / (h * h) + 0.5 * (ql + qr);
  }
  return d;
}

}  // namespace detail

/// Eigenvalues below `upper` (default E_max + 1) of the central-difference
/// Dirichlet matrix for -u'' + (W0 + V_omega) u on [-L, L] with mesh h,
/// ascending. With `richardson`, meshes h and h/2 are combined as
/// (4 E_{h/2} - E_h) / 3, matched by index.
inline std::vector<double> dense_oracle_eigenvalues(const ModelSpec& spec, const Couplings& omega, int L,
                                                    double mesh_h, bool richardson = true,
                                                    std::optional<double> upper = {}) {
  detail::check_box(omega, L);
  const double top = upper.value_or(spec.e_max + 1.0);
  const double steps = 2.0 * L / mesh_h;
  if (!(mesh_h > 0.0) || steps > 1e5 || std::abs(steps - std::round(steps)) > 1e-9 || steps < 8) {
    throw PreconditionError("dense oracle: mesh must divide 2L into at most 1e5 steps");
  }
  const double qbound = spec.background.sup_norm + spec.coupling.support_bound() * spec.single_site.sup_norm;
  if (mesh_h * std::sqrt(std::abs(top) + qbound) > 0.2) {
    throw PreconditionError("dense oracle: mesh too coarse for the requested window");
  }
  const double h1 = mesh_h;
  const auto e1 = detail::tridiagonal_eigenvalues_below(detail::difference_matrix_diagonal(spec, omega, L, h1),
                                                        -1.0 / (h1 * h1), top + 1.0);
  if (!richardson) {
    std::vector<double> out;
    for (double e : e1) {
      if (e <= top) out.push_back(e);
    }
    return out;
  }
  const double h2 = 0.5 * mesh_h;
  const auto e2 = detail::tridiagonal_eigenvalues_below(detail::difference_matrix_diagonal(spec, omega, L, h2),
                                                        -1.0 / (h2 * h2), top + 1.0);
  std::vector<double> out;
  for (std::size_t k = 0; k < std::min(e1.size(), e2.size()); ++k) {
    const double e = (4.0 * e2[k] - e1[k]) / 3.0;
    if (e <= top) out.push_back(e);
  }
  return out;
}

/// Eigenpairs as CSV: one row per (k, x) sample.
inline void write_eigenpairs_csv(std::ostream& os, const std::vector<EigenPair>& pairs) {
  os << "# kslab eigenpairs v1\n";
  os << "k,energy,x,value\n";
  os.precision(17);
  for (const auto& p : pairs) {
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
      os << p.index_k << ',' << p.energy << ',' << p.grid[i] << ',' << p.values[i] << '\n';
    }
  }
}

}  // namespace kslab
