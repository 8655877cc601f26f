// Solutions of -u'' + q u = E u in Cartesian and Pruefer form, plus the
// derivative identities of the Pruefer phase with respect to the initial
// phase, a coupling constant and the energy.
//
// Pruefer variables: u = R sin(phi), u' = R cos(phi), so that
//   phi'   = 1 - (1 + q - E) sin^2(phi)
//   ln R'  = (1 + q - E) sin(phi) cos(phi).
// The phase is never wrapped and ln R is integrated instead of R.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kslab/core/errors.hpp"
#include "kslab/core/function.hpp"
#include "kslab/core/ode.hpp"
#include "kslab/core/quadrature.hpp"

namespace kslab {

enum class Direction { forward, backward };

/// Phase and log-amplitude sampled along an integration interval.
struct PruferTrajectory {
  std::vector<double> grid;
  std::vector<double> phase;
  std::vector<double> log_amplitude;
  double phi_end = 0.0;
  double lnR_end = 0.0;
  Direction direction = Direction::forward;
  double anchor = 0.0;
  double theta0 = 0.0;

  std::size_t size() const { return grid.size(); }
  double amplitude(std::size_t i) const { return std::exp(log_amplitude[i]); }
  double u(std::size_t i) const { return amplitude(i) * std::sin(phase[i]); }
  double du(std::size_t i) const { return amplitude(i) * std::cos(phase[i]); }
};

/// Endpoint data of one Pruefer shot from c to x: phase, ln R, and the
/// signed integrals int_c^x V u^2 and int_c^x u^2.
struct PruferEnd {
  double phi = 0.0;
  double lnR = 0.0;
  double weighted_mass = 0.0;
  double mass = 0.0;
};

inline OdeOptions ode_options(double tol) {
  OdeOptions o;
  o.rtol = tol;
  o.atol = tol;
  return o;
}

namespace detail {

inline std::vector<double> merge_breakpoints(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// Core shot. `qeff(x)` is the effective potential q(x) - E, `weight(x)` the
/// function V in int V u^2. When `with_masses` is false only (phi, ln R) are
/// integrated and the mass fields are left at zero. `sink(x, phi, lnR)` is
/// called at every output point.
template <class Q, class W, class Sink>
PruferEnd prufer_shoot(const Q& qeff, const W& weight, std::span<const double> breakpoints, double from,
                       double to, double theta0, const OdeOptions& opt, bool with_masses,
                       std::span<const double> outputs, Sink&& sink, double lnR0 = 0.0) {
  PruferEnd end;
  if (with_masses) {
    auto rhs = [&](double x, const State<4>& y, State<4>& d) {
      const double k = 1.0 + qeff(x);
      const double s = std::sin(y[0]), c = std::cos(y[0]);
      d[0] = 1.0 - k * s * s;
      d[1] = k * s * c;
      const double u2 = std::exp(2.0 * y[1]) * s * s;
      d[2] = weight(x) * u2;
      d[3] = u2;
    };
    const State<4> y = integrate_dopri5<4>(
        rhs, from, to, State<4>{theta0, lnR0, 0.0, 0.0}, breakpoints, outputs,
        [&](double x, const State<4>& s) { sink(x, s[0], s[1]); }, opt);
    end = {y[0], y[1], y[2], y[3]};
  } else {
    auto rhs = [&](double x, const State<2>& y, State<2>& d) {
      const double k = 1.0 + qeff(x);
      const double s = std::sin(y[0]), c = std::cos(y[0]);
      d[0] = 1.0 - k * s * s;
      d[1] = k * s * c;
    };
    const State<2> y = integrate_dopri5<2>(
        rhs, from, to, State<2>{theta0, lnR0}, breakpoints, outputs,
        [&](double x, const State<2>& s) { sink(x, s[0], s[1]); }, opt);
    end = {y[0], y[1], 0.0, 0.0};
  }
  return end;
}

/// Endpoint of the Pruefer system for q - E, with the masses against V.
/// The masses are absolute, so they overflow once ln R passes about 350.
inline PruferEnd prufer_endpoint(const PiecewiseFunction& q, double E, double from, double to, double theta0,
                                 const PiecewiseFunction* V = nullptr, double tol = 1e-10) {
  const auto bps = V ? detail::merge_breakpoints(q.breakpoints, V->breakpoints) : q.breakpoints;
  auto qeff = [&](double x) { return q(x) - E; };
  if (V) {
    return prufer_shoot(qeff, *V, bps, from, to, theta0, ode_options(tol), true, {},
                        [](double, double, double) {});
  }
  return prufer_shoot(qeff, [](double) { return 0.0; }, bps, from, to, theta0, ode_options(tol), true, {},
                      [](double, double, double) {});
}

/// Uniform sample grid from `from` to `to` with about `per_unit` points per
/// unit length (at least two points), ordered along the direction.
inline std::vector<double> uniform_grid(double from, double to, double per_unit) {
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(std::abs(to - from) * per_unit)));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = from + (to - from) * static_cast<double>(i) / static_cast<double>(n);
  g.back() = to;
  return g;
}

/// Integrates the Pruefer system from `from` (phase theta0, R = 1) to `to`,
/// sampling on `grid` (default: 64 points per unit). Backward integration
/// (to < from) is allowed.
inline PruferTrajectory integrate_prufer(const PiecewiseFunction& q, double E, double from, double to, double theta0,
                                         double tol = 1e-10, std::vector<double> grid = {}) {
  if (from == to) throw PreconditionError("integrate_prufer: empty interval");
  if (grid.empty()) grid = uniform_grid(from, to, 64.0);
  PruferTrajectory tr;
  tr.direction = to > from ? Direction::forward : Direction::backward;
  tr.anchor = from;
  tr.theta0 = theta0;
  tr.grid.reserve(grid.size());
  tr.phase.reserve(grid.size());
  tr.log_amplitude.reserve(grid.size());
  auto qeff = [&](double x) { return q(x) - E; };
  const auto end = prufer_shoot(
      qeff, [](double) { return 0.0; }, q.breakpoints, from, to, theta0, ode_options(tol), false, grid,
      [&](double x, double phi, double lnR) {
        tr.grid.push_back(x);
        tr.phase.push_back(phi);
        tr.log_amplitude.push_back(lnR);
      });
  tr.phi_end = end.phi;
  tr.lnR_end = end.lnR;
  return tr;
}

/// Cartesian samples (x, u, u').
struct CartesianTrajectory {
  std::vector<double> grid, u, du;
};

struct SolutionResult {
  double u_end = 0.0;
  double du_end = 0.0;
  CartesianTrajectory trajectory;
};

/// Integrates u'' = (q - E) u from (u0, du0) at `from` to `to`.
inline SolutionResult integrate_solution(const PiecewiseFunction& q, double E, double from, double to, double u0,
                                         double du0, double tol = 1e-10, std::vector<double> grid = {}) {
  if (grid.empty()) grid = uniform_grid(from, to, 64.0);
  SolutionResult res;
  auto rhs = [&](double x, const State<2>& y, State<2>& d) {
    d[0] = y[1];
    d[1] = (q(x) - E) * y[0];
  };
  const auto y = integrate_dopri5<2>(
      rhs, from, to, State<2>{u0, du0}, q.breakpoints, grid,
      [&](double x, const State<2>& s) {
        res.trajectory.grid.push_back(x);
        res.trajectory.u.push_back(s[0]);
        res.trajectory.du.push_back(s[1]);
      },
      ode_options(tol));
  res.u_end = y[0];
  res.du_end = y[1];
  return res;
}

namespace detail {

/// Fourth-order central difference with step h.
template <class Fn>
double five_point(const Fn& fn, double x, double h) {
  return (fn(x - 2.0 * h) - 8.0 * fn(x - h) + 8.0 * fn(x + h) - fn(x + 2.0 * h)) / (12.0 * h);
}

}  // namespace detail

/// A finite-difference value next to the closed form it should match.
struct DerivativeCheck {
  double numeric = 0.0;
  double analytic = 0.0;

  double abs_error() const { return std::abs(numeric - analytic); }
  double rel_error() const {
    const double s = std::max(std::abs(analytic), std::abs(numeric));
    return s == 0.0 ? 0.0 : abs_error() / s;
  }
};

/// Five-point d phi(to) / d theta0 versus 1 / R(to)^2.
inline DerivativeCheck phase_theta_derivative(const PiecewiseFunction& q, double E, double from, double to,
                                              double theta0, double h = 1e-4, double tol = 1e-10) {
  if (!(h > 0.0)) throw PreconditionError("phase_theta_derivative: h must be positive");
  const auto c = prufer_endpoint(q, E, from, to, theta0, nullptr, tol);
  const double d = detail::five_point([&](double t) { return prufer_endpoint(q, E, from, to, t, nullptr, tol).phi; },
                                      theta0, h);
  return {d, std::exp(-2.0 * c.lnR)};
}

/// Five-point d phi(to) / d lambda for the potential base_q + lambda V, versus
/// -R(to)^-2 int_from^to V u^2.
inline DerivativeCheck phase_lambda_derivative(const PiecewiseFunction& base_q, const PiecewiseFunction& V,
                                               double lambda, double E, double from, double to, double theta0,
                                               double h = 1e-4, double tol = 1e-10) {
  if (!(h > 0.0)) throw PreconditionError("phase_lambda_derivative: h must be positive");
  auto shot = [&](double lam) {
    return prufer_endpoint(linear_combination(1.0, base_q, lam, V), E, from, to, theta0, &V, tol);
  };
  const auto c = shot(lambda);
  const double d = detail::five_point([&](double l) { return shot(l).phi; }, lambda, h);
  return {d, -std::exp(-2.0 * c.lnR) * c.weighted_mass};
}

/// Five-point d phi(to) / dE versus R(to)^-2 int_from^to u^2.
inline DerivativeCheck phase_energy_derivative(const PiecewiseFunction& q, double E, double from, double to,
                                               double theta0, double h = 1e-4, double tol = 1e-10) {
  if (!(h > 0.0)) throw PreconditionError("phase_energy_derivative: h must be positive");
  const auto c = prufer_endpoint(q, E, from, to, theta0, nullptr, tol);
  const double d = detail::five_point([&](double e) { return prufer_endpoint(q, e, from, to, theta0, nullptr, tol).phi; },
                                      E, h);
  return {d, std::exp(-2.0 * c.lnR) * c.mass};
}

struct ComparisonReport {
  double min_gap = std::numeric_limits<double>::infinity();
  double argmin = 0.0;
  bool holds = true;
  std::vector<double> grid, phi1, phi2;
};

/// Sturm comparison on [from, to] (from < to): with q1 >= q2 and
/// theta2 >= theta1 the phases satisfy phi2 >= phi1 everywhere.
inline ComparisonReport sturm_compare(const PiecewiseFunction& q1, const PiecewiseFunction& q2, double E,
                                      double theta1, double theta2, double from, double to, double tol = 1e-10,
                                      std::size_t samples = 512, double slack = 1e-8) {
  if (!(to > from)) throw PreconditionError("sturm_compare: need from < to");
  if (theta2 < theta1) throw PreconditionError("sturm_compare: need theta2 >= theta1");
  const std::size_t probe = 10000;
  for (std::size_t k = 0; k < probe; ++k) {
    const double x = from + (to - from) * (static_cast<double>(k) + 0.5) / static_cast<double>(probe);
    if (q1(x) < q2(x)) {
      throw PreconditionError("sturm_compare: q1 < q2 at x = " + exact_repr(x));
    }
  }
  auto grid = uniform_grid(from, to, static_cast<double>(samples) / (to - from));
  const auto t1 = integrate_prufer(q1, E, from, to, theta1, tol, grid);
  const auto t2 = integrate_prufer(q2, E, from, to, theta2, tol, grid);
  ComparisonReport rep;
  rep.grid = t1.grid;
  rep.phi1 = t1.phase;
  rep.phi2 = t2.phase;
  for (std::size_t i = 0; i < rep.grid.size(); ++i) {
    const double gap = t2.phase[i] - t1.phase[i];
    if (gap < rep.min_gap) {
      rep.min_gap = gap;
      rep.argmin = rep.grid[i];
    }
  }
  rep.holds = rep.min_gap >= -slack;
  return rep;
}

/// int_a^b |w(t)| dt with the function's breakpoints respected.
template <class Fn>
double integrate_abs(const Fn& w, double a, double b, std::span<const double> cuts) {
  if (a > b) std::swap(a, b);
  return integrate_pieces([&](double t) { return std::abs(w(t)); }, a, b, cuts, 20, 8);
}

/// The three members of the Gronwall sandwich for a solution of -u'' + q u = 0
/// with initial data (u0, du0) at c, comparing the points x and y.
struct SandwichValues {
  double lower = 0.0, middle = 0.0, upper = 0.0;
};

inline SandwichValues gronwall_sandwich(const PiecewiseFunction& q, double c, double u0, double du0, double x,
                                        double y, double tol = 1e-10) {
  auto energy_at = [&](double p) {
    if (p == c) return u0 * u0 + du0 * du0;
    const auto s = integrate_solution(q, 0.0, c, p, u0, du0, tol, {c, p});
    return s.u_end * s.u_end + s.du_end * s.du_end;
  };
  const double ex = energy_at(x), ey = energy_at(y);
  const double I = integrate_abs([&](double t) { return 1.0 + q(t); }, x, y, q.breakpoints);
  return {ey * std::exp(-I), ex, ey * std::exp(I)};
}

/// Both sides of the continuous-dependence estimate for solutions u1, u2 of
/// -u'' + q_i u = 0 with data prescribed at y, evaluated at x.
struct DependenceValues {
  double lhs = 0.0, rhs = 0.0;
};

inline DependenceValues continuous_dependence(const PiecewiseFunction& q1, const PiecewiseFunction& q2, double y,
                                              double u1, double du1, double u2, double du2, double x,
                                              double tol = 1e-10) {
  const auto s1 = integrate_solution(q1, 0.0, y, x, u1, du1, tol, {y, x});
  const auto s2 = integrate_solution(q2, 0.0, y, x, u2, du2, tol, {y, x});
  const double lhs = std::hypot(s1.u_end - s2.u_end, s1.du_end - s2.du_end);
  const auto cuts = detail::merge_breakpoints(q1.breakpoints, q2.breakpoints);
  const double a2 = integrate_abs([&](double t) { return std::abs(q2(t)) + 1.0; }, x, y, cuts);
  const double a12 = integrate_abs([&](double t) { return std::abs(q1(t)) + std::abs(q2(t)) + 2.0; }, x, y, cuts);
  const double d = integrate_abs([&](double t) { return q1(t) - q2(t); }, x, y, cuts);
  const double rhs = std::hypot(u1 - u2, du1 - du2) * std::exp(a2) + (u1 * u1 + du1 * du1) * std::exp(a12) * d;
  return {lhs, rhs};
}

/// int_c^{c+ell} u^2 / (u(c)^2 + u'(c)^2) for the solution of -u'' + q u = 0
/// with data (u0, du0) at c.
inline double l2_lower_ratio(const PiecewiseFunction& q, double c, double ell, double u0, double du0,
                             double tol = 1e-10) {
  const double theta = std::atan2(u0, du0);
  const double lnR0 = 0.5 * std::log(u0 * u0 + du0 * du0);
  auto qeff = [&](double x) { return q(x); };
  const auto end = prufer_shoot(qeff, [](double) { return 0.0; }, q.breakpoints, c, c + ell, theta,
                                ode_options(tol), true, {}, [](double, double, double) {}, lnR0);
  return end.mass / (u0 * u0 + du0 * du0);
}

/// Writes a trajectory as CSV with columns x, phi, lnR, u, du.
inline void write_trajectory_csv(std::ostream& os, const PruferTrajectory& tr) {
  os << "# kslab trajectory v1\n";
  os << "x,phi,lnR,u,du\n";
  os.precision(17);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    os << tr.grid[i] << ',' << tr.phase[i] << ',' << tr.log_amplitude[i] << ',' << tr.u(i) << ',' << tr.du(i)
       << '\n';
  }
}

}  // namespace kslab
