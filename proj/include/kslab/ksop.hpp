// Single-cell operator layer: inversion of the coupling from a pair of
// phases, the kernels built from the cell solutions, their Nystrom
// discretization on the phase circle T_N = R / 2 pi N Z, operator norms, the
// decomposition of T1 into blocks on (0, pi), and the Jacobian of the change
// of variables omega -> (E, theta).
//
// Cell conventions: the cell is [-1, 0] with potential g + lambda f. u0 starts
// at y = 0 with phase alpha and R = 1 and is integrated down to y = -1, where
// its phase is beta. beta is strictly increasing in lambda with
// d beta / d lambda = R+(-1)^-2 int f u+^2, so lambda(beta, alpha) is found
// by a safeguarded Newton iteration on the unique admissible branch.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "kslab/core/errors.hpp"
#include "kslab/core/function.hpp"
#include "kslab/core/parallel.hpp"
#include "kslab/model.hpp"
#include "kslab/prufer.hpp"
#include "kslab/spectral.hpp"

namespace kslab {

/// A point of T_N, stored as its representative in [0, 2 pi N).
struct PhasePoint {
  double value = 0.0;
  double period = 2.0 * std::numbers::pi;

  static PhasePoint on_torus(double v, int N) {
    const double p = 2.0 * std::numbers::pi * N;
    return {detail::wrap_phase(v, p), p};
  }
  PhasePoint operator+(double d) const { return {detail::wrap_phase(value + d, period), period}; }
  /// Length of the shorter arc between the two points.
  double distance(const PhasePoint& o) const {
    const double d = detail::wrap_phase(value - o.value, period);
    return std::min(d, period - d);
  }
};

/// One cell problem: background g on [-1, 0], single site f, density r,
/// energy E, phase bound N and the coupling search window.
struct CellModel {
  PiecewiseFunction g;
  PiecewiseFunction f;
  CouplingDensity r;
  double E = 0.0;
  int N = 1;
  double search_bound = 2.0;
  double ode_tol = 1e-10;
  std::vector<double> breakpoints;

  double torus_length() const { return 2.0 * std::numbers::pi * N; }
  std::string descriptor() const {
    return "g=" + g.descriptor + "|f=" + f.descriptor + "|r=" + r.descriptor() + "|E=" + exact_repr(E) +
           "|N=" + std::to_string(N) + "|Ms=" + exact_repr(search_bound) + "|tol=" + exact_repr(ode_tol);
  }
};

/// Search window for lambda: M plus a pad of min(1, slack / (2 |f|)), where
/// slack = N pi - (2 + |W0| + M |f| + E_max). Keeping half the slack ensures
/// the reachable phase range of one cell stays shorter than 2 pi N.
inline double lambda_search_bound(const ModelSpec& spec) {
  const double M = spec.coupling.support_bound();
  const double sf = spec.single_site.sup_norm;
  const double slack = spec.phase_bound_N * std::numbers::pi -
                       (2.0 + spec.background.sup_norm + M * sf + spec.e_max);
  const double pad = sf > 0.0 ? std::min(1.0, 0.5 * slack / sf) : 1.0;
  return M + pad;
}

inline CellModel make_cell(const ModelSpec& spec, const PiecewiseFunction& g, double E, double ode_tol = 1e-10) {
  CellModel c;
  c.g = g;
  c.f = spec.single_site.fn;
  c.r = spec.coupling;
  c.E = E;
  c.N = spec.phase_bound_N;
  c.search_bound = lambda_search_bound(spec);
  c.ode_tol = ode_tol;
  for (double p : g.breakpoints_in(-1.0, 0.0)) c.breakpoints.push_back(p);
  for (double p : c.f.breakpoints_in(-1.0, 0.0)) c.breakpoints.push_back(p);
  std::sort(c.breakpoints.begin(), c.breakpoints.end());
  c.breakpoints.erase(std::unique(c.breakpoints.begin(), c.breakpoints.end()), c.breakpoints.end());
  return c;
}

/// Cell of site i: g(y) = W0(y + i).
inline CellModel make_site_cell(const ModelSpec& spec, int i, double E, double ode_tol = 1e-10) {
  return make_cell(spec, spec.background.cell(i), E, ode_tol);
}

/// Result of one shot through the cell.
struct CellShot {
  double phi = 0.0;   // phase at the far end (unwrapped)
  double lnR = 0.0;   // ln R at the far end
  double fmass = 0.0; // int_{-1}^{0} f u^2 (positive)
  double mass = 0.0;  // int_{-1}^{0} u^2 (positive)
};

/// u0(., alpha, lambda): from y = 0 (phase alpha, R = 1) down to y = -1.
inline CellShot shoot_down(const CellModel& c, double alpha, double lambda) {
  auto qeff = [&](double y) { return c.g(y) + lambda * c.f(y) - c.E; };
  const auto e = prufer_shoot(qeff, c.f, c.breakpoints, 0.0, -1.0, alpha, ode_options(c.ode_tol), true, {},
                              [](double, double, double) {});
  return {e.phi, e.lnR, -e.weighted_mass, -e.mass};
}

/// u_{-1}(., beta, lambda): from y = -1 (phase beta, R = 1) up to y = 0.
inline CellShot shoot_up(const CellModel& c, double beta, double lambda) {
  auto qeff = [&](double y) { return c.g(y) + lambda * c.f(y) - c.E; };
  const auto e = prufer_shoot(qeff, c.f, c.breakpoints, -1.0, 0.0, beta, ode_options(c.ode_tol), true, {},
                              [](double, double, double) {});
  return {e.phi, e.lnR, e.weighted_mass, e.mass};
}

struct LambdaSolution {
  double lambda = 0.0;
  double residual = 0.0;
  bool exists = false;
  int iterations = 0;
  // Data of u+ at the solution (valid when exists).
  double lnR_plus = 0.0;
  double fmass_plus = 0.0;
};

/// Reachable phases of one column alpha: beta(-Ms) and beta(+Ms), unwrapped
/// from the representative of alpha in [0, 2 pi N).
struct ColumnRange {
  double alpha = 0.0;
  CellShot lo, hi;
};

inline ColumnRange column_range(const CellModel& c, double alpha) {
  ColumnRange cr;
  cr.alpha = detail::wrap_phase(alpha, c.torus_length());
  cr.lo = shoot_down(c, cr.alpha, -c.search_bound);
  cr.hi = shoot_down(c, cr.alpha, c.search_bound);
  if (!(cr.hi.phi - cr.lo.phi < c.torus_length())) {
    throw InternalError("solve_lambda: reachable phase range of a cell covers the whole torus (branch ambiguity)");
  }
  return cr;
}

/// Solves phi0(-1, alpha, lambda) = beta (mod 2 pi N) for lambda in
/// [-Ms, Ms], given the column range of alpha and an optional starting guess.
inline LambdaSolution solve_lambda_in_column(const CellModel& c, const ColumnRange& cr, double beta,
                                             std::optional<double> guess = {}, double root_tol = 1e-13) {
  LambdaSolution sol;
  const double P = c.torus_length();
  const double target = cr.lo.phi + detail::wrap_phase(beta - cr.lo.phi, P);
  if (target > cr.hi.phi) {
    sol.residual = target - cr.hi.phi;
    return sol;
  }
  sol.exists = true;
  double a = -c.search_bound, b = c.search_bound;
  double fa = cr.lo.phi - target, fb = cr.hi.phi - target;
  if (fa == 0.0) {
    sol.lambda = a;
    sol.lnR_plus = cr.lo.lnR;
    sol.fmass_plus = cr.lo.fmass;
    return sol;
  }
  if (fb == 0.0) {
    sol.lambda = b;
    sol.lnR_plus = cr.hi.lnR;
    sol.fmass_plus = cr.hi.fmass;
    return sol;
  }
  double x = guess.value_or(a - fa * (b - a) / (fb - fa));
  if (!(x > a && x < b)) x = 0.5 * (a + b);
  double dx_old = b - a;
  for (int it = 0; it < 200; ++it) {
    const auto s = shoot_down(c, cr.alpha, x);
    ++sol.iterations;
    const double fx = s.phi - target;
    sol.lambda = x;
    sol.residual = fx;
    sol.lnR_plus = s.lnR;
    sol.fmass_plus = s.fmass;
    if (std::abs(fx) <= root_tol * (1.0 + std::abs(target))) break;
    if (fx < 0.0) {
      a = x;
    } else {
      b = x;
    }
    const double dfdx = s.fmass * std::exp(-2.0 * s.lnR);
    double xn = dfdx > 0.0 ? x - fx / dfdx : 0.5 * (a + b);
    if (!(xn > a && xn < b) || std::abs(xn - x) > 0.5 * dx_old) xn = 0.5 * (a + b);
    dx_old = std::abs(xn - x);
    x = xn;
    if (dx_old <= 1e-15 * (1.0 + std::abs(x)) || b - a <= 1e-15 * (1.0 + std::abs(x))) break;
  }
  return sol;
}

/// lambda(beta, alpha, g, E) on the unique admissible branch.
inline LambdaSolution solve_lambda(double beta, double alpha, const CellModel& c, double root_tol = 1e-13) {
  return solve_lambda_in_column(c, column_range(c, alpha), beta, {}, root_tol);
}

struct CellSolutionPair {
  PruferTrajectory u_plus;
  PruferTrajectory u_minus;
  double lambda = 0.0;
  double r_plus_end = 0.0;   // R+(-1)
  double r_minus_end = 0.0;  // R-(0)
  double f_weighted_mass_plus = 0.0;
  double f_weighted_mass_minus = 0.0;
};

/// u+ and u- at lambda(beta, alpha) sampled on a common grid of [-1, 0].
inline CellSolutionPair cell_solutions(double beta, double alpha, const CellModel& c, std::size_t samples = 257) {
  const auto sol = solve_lambda(beta, alpha, c);
  if (!sol.exists) throw NotFoundError("cell_solutions: no coupling connects the given phases");
  const double lam = sol.lambda;
  PiecewiseFunction q{[&c, lam](double y) { return c.g(y) + lam * c.f(y); }, c.breakpoints, "cell"};
  std::vector<double> down(samples), up(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    up[i] = -1.0 + static_cast<double>(i) / static_cast<double>(samples - 1);
    down[samples - 1 - i] = up[i];
  }
  CellSolutionPair p;
  p.lambda = lam;
  p.u_plus = integrate_prufer(q, c.E, 0.0, -1.0, detail::wrap_phase(alpha, c.torus_length()), c.ode_tol, down);
  const double beta_rep = p.u_plus.phi_end;
  p.u_minus = integrate_prufer(q, c.E, -1.0, 0.0, beta_rep, c.ode_tol, up);
  p.r_plus_end = std::exp(p.u_plus.lnR_end);
  p.r_minus_end = std::exp(p.u_minus.lnR_end);
  p.f_weighted_mass_plus = shoot_down(c, detail::wrap_phase(alpha, c.torus_length()), lam).fmass;
  p.f_weighted_mass_minus = shoot_up(c, beta_rep, lam).fmass;
  return p;
}

/// K1 = r / F and K2 = R+^2 r / F with F = int f u+^2; zero if lambda does
/// not exist.
struct KernelPair {
  double K1 = 0.0, K2 = 0.0;
};

inline KernelPair kernel_K1_K2(double beta, double alpha, const CellModel& c) {
  const auto s = solve_lambda(beta, alpha, c);
  if (!s.exists) return {};
  const double rv = c.r.pdf(s.lambda);
  if (rv == 0.0) return {};
  return {rv / s.fmass_plus, std::exp(2.0 * s.lnR_plus) * rv / s.fmass_plus};
}

/// T1(beta, alpha) = R+(-1) r(lambda) / int f u+^2, zero if lambda does not
/// exist.
inline double kernel_T1(double beta, double alpha, const CellModel& c) {
  const auto s = solve_lambda(beta, alpha, c);
  if (!s.exists) return 0.0;
  return std::exp(s.lnR_plus) * c.r.pdf(s.lambda) / s.fmass_plus;
}

/// Psi_j(theta) = K2(theta, j pi) and Phi(theta) = K1(0, theta).
struct BoundaryValues {
  double psi_j = 0.0, phi = 0.0;
};

inline BoundaryValues boundary_functions_Psi_Phi(double theta, int j, const CellModel& c) {
  return {kernel_K1_K2(theta, j * std::numbers::pi, c).K2, kernel_K1_K2(0.0, theta, c).K1};
}

enum class Domain { torus, segment };

/// Nystrom image of an integral operator: midpoint nodes, equal weights and
/// the kernel matrix with rows indexed by the output variable.
template <class Scalar = double>
struct DiscreteKernel {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<double> grid;
  std::vector<double> weights;
  Matrix matrix;
  Domain domain_tag = Domain::torus;
  double length = 0.0;

  std::size_t size() const { return grid.size(); }

  /// (K v)(x_i) = sum_j K(x_i, x_j) w_j v_j.
  Vector apply(const Vector& v) const {
    Vector wv(v.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) wv(j) = v(j) * weights[static_cast<std::size_t>(j)];
    return matrix * wv;
  }
};

inline std::pair<std::vector<double>, std::vector<double>> midpoint_nodes(double length, std::size_t m) {
  std::vector<double> x(m), w(m, length / static_cast<double>(m));
  for (std::size_t i = 0; i < m; ++i) x[i] = (static_cast<double>(i) + 0.5) * length / static_cast<double>(m);
  return {x, w};
}

/// Tabulates kernel(x_i, x_j) on m midpoint nodes of the domain; the torus
/// length is 2 pi N, the segment is (0, pi).
template <class Fn>
DiscreteKernel<double> discretize(const Fn& kernel, Domain domain, std::size_t m, int N = 1) {
  if (m < 16) throw PreconditionError("discretize: need m >= 16");
  DiscreteKernel<double> k;
  k.domain_tag = domain;
  k.length = domain == Domain::torus ? 2.0 * std::numbers::pi * N : std::numbers::pi;
  std::tie(k.grid, k.weights) = midpoint_nodes(k.length, m);
  k.matrix.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      k.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel(k.grid[i], k.grid[j]);
    }
  }
  return k;
}

/// sup over columns of the weighted absolute column sums: the L1 -> L1 norm.
template <class Scalar>
double norm_1_to_1(const DiscreteKernel<Scalar>& k) {
  double best = 0.0;
  for (Eigen::Index j = 0; j < k.matrix.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < k.matrix.rows(); ++i) s += k.weights[static_cast<std::size_t>(i)] * std::abs(k.matrix(i, j));
    best = std::max(best, s);
  }
  return best;
}

namespace detail {

template <class Scalar>
typename DiscreteKernel<Scalar>::Matrix symmetrized(const DiscreteKernel<Scalar>& k) {
  auto A = k.matrix;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      A(i, j) *= std::sqrt(k.weights[static_cast<std::size_t>(i)] * k.weights[static_cast<std::size_t>(j)]);
    }
  }
  return A;
}

}  // namespace detail

/// L2 -> L2 norm of the discretized operator: the largest singular value of
/// W^1/2 K W^1/2.
template <class Scalar>
double norm_2_to_2(const DiscreteKernel<Scalar>& k) {
  const auto A = detail::symmetrized(k);
  Eigen::BDCSVD<typename DiscreteKernel<Scalar>::Matrix> svd(A);
  return svd.singularValues().size() ? static_cast<double>(svd.singularValues()(0)) : 0.0;
}

struct PowerIterationResult {
  double norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Largest singular value of W^1/2 K W^1/2 by power iteration on A^* A.
template <class Scalar>
PowerIterationResult norm_2_to_2_power(const DiscreteKernel<Scalar>& k, double tol = 1e-13, int max_iter = 100000) {
  using Vec = typename DiscreteKernel<Scalar>::Vector;
  const auto A = detail::symmetrized(k);
  const auto B = (A.adjoint() * A).eval();
  Vec v = Vec::Ones(A.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Scalar(1.0 + 0.001 * static_cast<double>(i % 7));
  v /= v.norm();
  PowerIterationResult res;
  double lam_old = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vec w = B * v;
    const double lam = w.norm();
    res.iterations = it;
    if (lam == 0.0) {
      res.converged = true;
      res.norm = 0.0;
      return res;
    }
    v = w / lam;
    res.norm = std::sqrt(lam);
    if (std::abs(lam - lam_old) <= tol * lam) {
      res.converged = true;
      break;
    }
    lam_old = lam;
  }
  return res;
}

/// Blocks L_j(beta, alpha) = sum_n K(beta, alpha + n pi) e^{i pi j n / N},
/// j = 0 .. 2N-1, on the nodes in (0, pi).
inline std::vector<DiscreteKernel<std::complex<double>>> block_decompose(const DiscreteKernel<double>& k, int N) {
  const std::size_t m = k.size();
  const std::size_t parts = static_cast<std::size_t>(2 * N);
  if (k.domain_tag != Domain::torus || m % parts != 0 ||
      std::abs(k.length - 2.0 * std::numbers::pi * N) > 1e-12) {
    throw PreconditionError("block_decompose: grid on T_N must have m divisible by 2N");
  }
  const std::size_t s = m / parts;
  std::vector<DiscreteKernel<std::complex<double>>> out(parts);
  for (std::size_t j = 0; j < parts; ++j) {
    auto& L = out[j];
    L.domain_tag = Domain::segment;
    L.length = std::numbers::pi;
    L.grid.assign(k.grid.begin(), k.grid.begin() + static_cast<std::ptrdiff_t>(s));
    L.weights.assign(k.weights.begin(), k.weights.begin() + static_cast<std::ptrdiff_t>(s));
    L.matrix = DiscreteKernel<std::complex<double>>::Matrix::Zero(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
    for (std::size_t n = 0; n < parts; ++n) {
      const std::complex<double> ph = std::polar(1.0, std::numbers::pi * static_cast<double>(j * n) / N);
      for (std::size_t a = 0; a < s; ++a) {
        for (std::size_t b = 0; b < s; ++b) {
          L.matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
              ph * k.matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b + n * s));
        }
      }
    }
  }
  return out;
}

struct KernelOptions {
  std::size_t m = 400;
  std::size_t subdivisions = 4;  // sub-nodes per cell and direction
  bool cell_average = true;      // exact cell means of r under linearized lambda
  bool use_periodicity = true;   // fill columns alpha >= pi by the pi-shift
  double root_tol = 1e-13;
};

/// Kernel matrices of one (g, E) on the m midpoint nodes of T_N. Entry
/// (I, J) is the mean of the kernel over the q x q sub-nodes of the cell pair
/// (q = subdivisions); with q = 1 and no averaging this is plain Nystrom.
class KernelTable {
 public:
  KernelTable(const CellModel& cell, const KernelOptions& opt) : cell_(cell), opt_(opt) {
    const std::size_t m = opt.m;
    const std::size_t parts = static_cast<std::size_t>(2 * cell.N);
    if (m < 16 || m % parts != 0) throw PreconditionError("kernel table: m must be >= 16 and divisible by 2N");
    if (opt.subdivisions == 0) throw PreconditionError("kernel table: subdivisions must be positive");
    std::tie(grid_, weights_) = midpoint_nodes(cell.torus_length(), m);
    h_ = weights_[0];
    const auto M = static_cast<Eigen::Index>(m);
    t1_ = Eigen::MatrixXd::Zero(M, M);
    k1_ = Eigen::MatrixXd::Zero(M, M);
    k2_ = Eigen::MatrixXd::Zero(M, M);
    const std::size_t s = m / parts;
    const std::size_t ncols = opt.use_periodicity ? s : m;
    std::vector<std::pair<double, double>> bounds(ncols, {0.0, std::numeric_limits<double>::infinity()});
    parallel_for(ncols, [&](std::size_t j) { bounds[j] = fill_column(j); });
    for (const auto& [c1, c2] : bounds) {
      c1_ = std::max(c1_, c1);
      c2_ = std::min(c2_, c2);
    }
    if (opt.use_periodicity) {
      for (std::size_t j = s; j < m; ++j) {
        const std::size_t j0 = j % s, shift = j - j0;
        for (std::size_t i = 0; i < m; ++i) {
          const auto src = static_cast<Eigen::Index>((i + m - shift) % m);
          const auto I = static_cast<Eigen::Index>(i), J = static_cast<Eigen::Index>(j),
                     J0 = static_cast<Eigen::Index>(j0);
          t1_(I, J) = t1_(src, J0);
          k1_(I, J) = k1_(src, J0);
          k2_(I, J) = k2_(src, J0);
        }
      }
    }
  }

  std::size_t m() const { return opt_.m; }
  double step() const { return h_; }
  const std::vector<double>& grid() const { return grid_; }
  const CellModel& cell() const { return cell_; }
  const KernelOptions& options() const { return opt_; }

  /// Kernel matrices; rows index the output variable.
  DiscreteKernel<double> T1() const { return wrap(t1_); }
  DiscreteKernel<double> K1() const { return wrap(k1_); }
  DiscreteKernel<double> K2() const { return wrap(k2_); }
  /// T0 acts beta <- alpha with kernel K2.
  DiscreteKernel<double> T0() const { return wrap(k2_); }
  /// T0~ acts alpha <- beta with kernel K1 (transposed storage).
  DiscreteKernel<double> T0_tilde() const { return wrap(k1_.transpose()); }

  /// max R+^2(-1) and min int f u+^2 over sub-nodes with lambda in supp r.
  std::pair<double, double> apriori_bounds() const { return {c1_, c2_}; }

 private:
  std::pair<double, double> fill_column(std::size_t J) {
    const std::size_t m = opt_.m, q = opt_.subdivisions, mf = m * q;
    const double P = cell_.torus_length();
    const double hf = h_ / static_cast<double>(q);
    const double scale = 1.0 / static_cast<double>(q * q);
    double c1 = 0.0, c2 = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < q; ++b) {
      const double alpha = (static_cast<double>(J * q + b) + 0.5) * hf;
      const auto cr = column_range(cell_, alpha);
      // Visit reachable sub-nodes in increasing lifted phase, warm-starting Newton.
      std::vector<std::pair<double, std::size_t>> order;
      const double first = cr.lo.phi - P * std::floor(cr.lo.phi / P);
      const auto i0 = static_cast<std::size_t>(std::max(0.0, std::floor(first / hf - 0.5)));
      for (std::size_t k = 0; k <= mf; ++k) {
        const std::size_t i = (i0 + k) % mf;
        const double beta = (static_cast<double>(i) + 0.5) * hf;
        const double lifted = cr.lo.phi + detail::wrap_phase(beta - cr.lo.phi, P);
        if (lifted <= cr.hi.phi) order.emplace_back(lifted, i);
      }
      std::sort(order.begin(), order.end());
      order.erase(std::unique(order.begin(), order.end()), order.end());
      std::optional<double> guess;
      for (const auto& [lifted, i] : order) {
        const double beta = (static_cast<double>(i) + 0.5) * hf;
        const auto sol = solve_lambda_in_column(cell_, cr, beta, guess, opt_.root_tol);
        if (!sol.exists) continue;
        guess = sol.lambda;
        const double R2 = std::exp(2.0 * sol.lnR_plus);
        double rv;
        if (opt_.cell_average) {
          rv = cell_.r.average_2d(sol.lambda, hf * R2 / sol.fmass_plus, hf / sol.fmass_plus);
        } else {
          rv = cell_.r.pdf(sol.lambda);
        }
        if (cell_.r.pdf(sol.lambda) > 0.0) {
          c1 = std::max(c1, R2);
          c2 = std::min(c2, sol.fmass_plus);
        }
        if (rv == 0.0) continue;
        const auto I = static_cast<Eigen::Index>(i / q), JJ = static_cast<Eigen::Index>(J);
        t1_(I, JJ) += scale * std::exp(sol.lnR_plus) * rv / sol.fmass_plus;
        k1_(I, JJ) += scale * rv / sol.fmass_plus;
        k2_(I, JJ) += scale * R2 * rv / sol.fmass_plus;
      }
    }
    return {c1, c2};
  }

  DiscreteKernel<double> wrap(const Eigen::MatrixXd& mat) const {
    DiscreteKernel<double> k;
    k.domain_tag = Domain::torus;
    k.length = cell_.torus_length();
    k.grid = grid_;
    k.weights = weights_;
    k.matrix = mat;
    return k;
  }

  CellModel cell_;
  KernelOptions opt_;
  std::vector<double> grid_, weights_;
  double h_ = 0.0;
  Eigen::MatrixXd t1_, k1_, k2_;
  double c1_ = 0.0, c2_ = std::numeric_limits<double>::infinity();
};

/// Process-wide cache of kernel tables keyed by the cell descriptor and the
/// discretization options. Inserts are idempotent.
class KernelCache {
 public:
  std::shared_ptr<const KernelTable> get(const CellModel& cell, const KernelOptions& opt) {
    const std::string key = cell.descriptor() + "|m=" + std::to_string(opt.m) + "|avg=" +
                            std::to_string(opt.cell_average) + "|per=" + std::to_string(opt.use_periodicity) +
                            "|rt=" + exact_repr(opt.root_tol) + "|q=" + std::to_string(opt.subdivisions);
    {
      std::lock_guard lock(mutex_);
      auto it = map_.find(key);
      if (it != map_.end()) return it->second;
    }
    auto table = std::make_shared<const KernelTable>(cell, opt);
    std::lock_guard lock(mutex_);
    auto [it, inserted] = map_.emplace(key, table);
    return it->second;
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return map_.size();
  }
  void clear() {
    std::lock_guard lock(mutex_);
    map_.clear();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const KernelTable>> map_;
};

inline KernelCache& kernel_cache() {
  static KernelCache cache;
  return cache;
}

/// Boundary vectors on the table's nodes.
///   psi_j(theta_i) = K2(theta_i, j pi)       (density averaged along beta)
///   phi(theta_i)   = K1(0, theta_i)          (density averaged along alpha)
///   t1_j(theta_i)  = T1(theta_i, j pi)       (density averaged along beta)
struct BoundaryVectors {
  std::vector<Eigen::VectorXd> psi;
  std::vector<Eigen::VectorXd> t1_end;
  Eigen::VectorXd phi;
};

inline BoundaryVectors boundary_vectors(const CellModel& c, const KernelOptions& opt) {
  const std::size_t m = opt.m;
  const auto [grid, weights] = midpoint_nodes(c.torus_length(), m);
  const double h = weights[0];
  const int parts = 2 * c.N;
  BoundaryVectors bv;
  bv.psi.assign(static_cast<std::size_t>(parts), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)));
  bv.t1_end.assign(static_cast<std::size_t>(parts), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)));
  bv.phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  auto rfac = [&](double lam, double width) {
    return opt.cell_average ? c.r.average_1d(lam, width) : c.r.pdf(lam);
  };
  const std::size_t q = opt.subdivisions, mf = m * q;
  const double hf = h / static_cast<double>(q), scale = 1.0 / static_cast<double>(q);
  for (int j = 0; j < parts; ++j) {
    const auto cr = column_range(c, j * std::numbers::pi);
    auto& psi = bv.psi[static_cast<std::size_t>(j)];
    auto& t1 = bv.t1_end[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < mf; ++i) {
      const auto s = solve_lambda_in_column(c, cr, (static_cast<double>(i) + 0.5) * hf, {}, opt.root_tol);
      if (!s.exists) continue;
      const double R2 = std::exp(2.0 * s.lnR_plus);
      const double rv = rfac(s.lambda, hf * R2 / s.fmass_plus);
      psi(static_cast<Eigen::Index>(i / q)) += scale * R2 * rv / s.fmass_plus;
      t1(static_cast<Eigen::Index>(i / q)) += scale * std::exp(s.lnR_plus) * rv / s.fmass_plus;
    }
  }
  // Phi: beta = 0 fixed, alpha runs over the sub-nodes.
  parallel_for(m, [&](std::size_t I) {
    double acc = 0.0;
    for (std::size_t b = 0; b < q; ++b) {
      const auto cr = column_range(c, (static_cast<double>(I * q + b) + 0.5) * hf);
      const auto s = solve_lambda_in_column(c, cr, 0.0, {}, opt.root_tol);
      if (s.exists) acc += scale * rfac(s.lambda, hf / s.fmass_plus) / s.fmass_plus;
    }
    bv.phi(static_cast<Eigen::Index>(I)) = acc;
  });
  return bv;
}

/// Differences |‖T1(g + eps p)‖ - ‖T1(g)‖| over the given eps, and the
/// largest entrywise gap between T1(g, E) and T1(g - E, 0).
struct ContinuityProbe {
  double base_norm = 0.0;
  std::vector<std::pair<double, double>> differences;
  double absorption_max_diff = 0.0;
};

inline ContinuityProbe norm_continuity_probe(const ModelSpec& spec, const PiecewiseFunction& g,
                                             const PiecewiseFunction& perturbation, const std::vector<double>& epsilons,
                                             double E, const KernelOptions& opt = {}, double ode_tol = 1e-10) {
  ContinuityProbe probe;
  const auto base_cell = make_cell(spec, g, E, ode_tol);
  const KernelTable base(base_cell, opt);
  const auto T = base.T1();
  probe.base_norm = norm_2_to_2(T);
  for (double eps : epsilons) {
    if (eps == 0.0) {
      probe.differences.emplace_back(eps, 0.0);
      continue;
    }
    const KernelTable pert(make_cell(spec, linear_combination(1.0, g, eps, perturbation), E, ode_tol), opt);
    probe.differences.emplace_back(eps, std::abs(norm_2_to_2(pert.T1()) - probe.base_norm));
  }
  const KernelTable absorbed(make_cell(spec, linear_combination(1.0, g, 0.0, g, -E), 0.0, ode_tol), opt);
  probe.absorption_max_diff = (absorbed.T1().matrix - T.matrix).cwiseAbs().maxCoeff();
  return probe;
}

/// ln R_{-1}(0, beta, lambda) for each lambda: the log-amplitude at y = 0 of
/// the solution started at y = -1 with phase beta.
inline std::vector<double> large_coupling_amplitude(double beta, const CellModel& c,
                                                    const std::vector<double>& lambdas) {
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) {
      throw PreconditionError("large_coupling_amplitude: lambdas must be increasing");
    }
  }
  std::vector<double> out;
  out.reserve(lambdas.size());
  for (double lam : lambdas) {
    auto qeff = [&](double y) { return c.g(y) + lam * c.f(y) - c.E; };
    OdeOptions o = ode_options(c.ode_tol);
    o.h_max = 0.05;
    out.push_back(prufer_shoot(qeff, [](double) { return 0.0; }, c.breakpoints, -1.0, 0.0, beta, o, false, {},
                               [](double, double, double) {})
                      .lnR);
  }
  return out;
}

/// The structured determinant: first row all a1, row i has b_i left of the
/// diagonal and a_i from the diagonal on.
struct DeterminantCheck {
  double closed_form = 0.0;
  double dense = 0.0;
};

inline Eigen::MatrixXd structured_matrix(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      A(i, j) = (i == 0 || j >= i) ? a[static_cast<std::size_t>(i)] : b[static_cast<std::size_t>(i)];
    }
  }
  return A;
}

inline DeterminantCheck structured_determinant(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || a.size() != b.size()) throw PreconditionError("structured_determinant: a and b need equal length");
  double p = a[0];
  for (std::size_t i = 1; i < a.size(); ++i) p *= a[i] - b[i];
  return {p, structured_matrix(a, b).determinant()};
}

/// Couplings from a phase profile: cell i connects theta_{i-1} to theta_i
/// with theta_{-L} = 0 and theta_L = j pi.
inline Couplings reconstruct_couplings(const ModelSpec& spec, const std::vector<double>& theta, int j, double E, int L,
                                       double ode_tol = 1e-10) {
  if (theta.size() != static_cast<std::size_t>(2 * L - 1)) {
    throw PreconditionError("reconstruct_couplings: need 2L - 1 phases");
  }
  std::vector<double> full{0.0};
  full.insert(full.end(), theta.begin(), theta.end());
  full.push_back(j * std::numbers::pi);
  std::vector<double> omega;
  for (int i = -L + 1; i <= L; ++i) {
    const auto k = static_cast<std::size_t>(i + L);
    const auto cell = make_site_cell(spec, i, E, ode_tol);
    const auto s = solve_lambda(full[k - 1], full[k], cell);
    if (!s.exists) throw NotFoundError("reconstruct_couplings: no coupling reaches site " + std::to_string(i));
    omega.push_back(s.lambda);
  }
  return box_couplings(L, std::move(omega));
}

/// Cell-by-cell data of u_{-L} (forward from -L) or u_L (backward from L):
/// R at the integer sites and int f_i u^2, int u^2 per cell.
struct BoxSolution {
  std::vector<double> lnR_at_site;  // index i + L for sites -L .. L
  std::vector<double> phase_at_site;
  std::vector<double> fmass;        // index i + L - 1 for cells i = -L+1 .. L
  std::vector<double> mass;
  double total_mass = 0.0;
};

inline BoxSolution box_solution(const ModelSpec& spec, const Couplings& omega, int L, double E, bool from_left,
                                double ode_tol = 1e-12) {
  detail::check_box(omega, L);
  const auto q = full_potential(spec, omega);
  BoxSolution bs;
  bs.lnR_at_site.assign(static_cast<std::size_t>(2 * L + 1), 0.0);
  bs.phase_at_site.assign(static_cast<std::size_t>(2 * L + 1), 0.0);
  bs.fmass.assign(static_cast<std::size_t>(2 * L), 0.0);
  bs.mass.assign(static_cast<std::size_t>(2 * L), 0.0);
  double phi = 0.0, lnR = 0.0;
  const auto oo = ode_options(ode_tol);
  for (int step = 0; step < 2 * L; ++step) {
    const int i = from_left ? -L + 1 + step : L - step;  // cell [i-1, i]
    const double a = from_left ? i - 1.0 : i, b = from_left ? i : i - 1.0;
    auto qeff = [&](double x) { return q(x) - E; };
    auto fi = [&](double x) { return spec.single_site(x - i); };
    const auto cuts = q.breakpoints_in(i - 1.0, i);
    const auto e = prufer_shoot(qeff, fi, cuts, a, b, phi, oo, true, {}, [](double, double, double) {}, lnR);
    phi = e.phi;
    lnR = e.lnR;
    const auto ci = static_cast<std::size_t>(i + L - 1);
    bs.fmass[ci] = std::abs(e.weighted_mass);
    bs.mass[ci] = std::abs(e.mass);
    const auto si = static_cast<std::size_t>((from_left ? i : i - 1) + L);
    bs.lnR_at_site[si] = lnR;
    bs.phase_at_site[si] = phi;
  }
  for (double mm : bs.mass) bs.total_mass += mm;
  return bs;
}

struct JacobianCheck {
  double numeric_det = 0.0;
  double analytic_det = 0.0;
  double rel_error = 0.0;
  Eigen::MatrixXd numeric_jacobian;
  std::vector<double> fh_numeric;   // dE_k / d omega_n by differences
  std::vector<double> fh_analytic;  // int f_n v_k^2
  double energy = 0.0;
};

struct JacobianOptions {
  double ode_tol = 1e-12;
  double energy_tol = 1e-14;
};

/// Finite-difference Jacobian of omega -> (E_k, theta_{-L+1}, ..., theta_{L-1})
/// against the closed-form determinant built from u_{-L} and u_L.
inline JacobianCheck jacobian_check(const ModelSpec& spec, const Couplings& omega, int L, int k, double h,
                                    const JacobianOptions& jo = {}) {
  detail::check_box(omega, L);
  if (L > 3) throw PreconditionError("jacobian_check: L <= 3");
  SpectralOptions so;
  so.tol = jo.energy_tol;
  so.ode_tol = jo.ode_tol;
  auto image = [&](const Couplings& w) {
    const double E = eigenvalue_by_index(spec, w, L, k, so);
    const auto q = full_potential(spec, w);
    std::vector<double> sites;
    for (int i = -L; i <= L; ++i) sites.push_back(i);
    std::vector<double> ph;
    auto qeff = [&](double x) { return q(x) - E; };
    prufer_shoot(qeff, [](double) { return 0.0; }, q.breakpoints, -L, L, 0.0, ode_options(jo.ode_tol), false, sites,
                 [&](double, double p, double) { ph.push_back(p); });
    Eigen::VectorXd v(2 * L);
    v(0) = E;
    for (int i = -L + 1; i <= L - 1; ++i) v(i + L) = ph[static_cast<std::size_t>(i + L)];
    return v;
  };
  const int n = 2 * L;
  JacobianCheck jc;
  jc.numeric_jacobian.resize(n, n);
  for (int c = 0; c < n; ++c) {
    Couplings p = omega, m = omega;
    p.values[static_cast<std::size_t>(c)] += h;
    m.values[static_cast<std::size_t>(c)] -= h;
    jc.numeric_jacobian.col(c) = (image(p) - image(m)) / (2.0 * h);
  }
  jc.numeric_det = jc.numeric_jacobian.determinant();

  const double E = eigenvalue_by_index(spec, omega, L, k, so);
  jc.energy = E;
  const auto left = box_solution(spec, omega, L, E, true, jo.ode_tol);
  const auto right = box_solution(spec, omega, L, E, false, jo.ode_tol);
  double log_num = 0.0, log_den = 0.0;
  for (int i = -L + 1; i <= 0; ++i) {
    log_num += std::log(left.fmass[static_cast<std::size_t>(i + L - 1)]);
    log_den += 2.0 * left.lnR_at_site[static_cast<std::size_t>(i + L)];
  }
  for (int i = 1; i <= L; ++i) log_num += std::log(right.fmass[static_cast<std::size_t>(i + L - 1)]);
  for (int i = 1; i <= L - 1; ++i) log_den += 2.0 * right.lnR_at_site[static_cast<std::size_t>(i + L)];
  jc.analytic_det = std::exp(log_num - log_den) / right.total_mass;
  jc.rel_error = std::abs(std::abs(jc.numeric_det) - jc.analytic_det) / jc.analytic_det;
  for (int c = 0; c < n; ++c) {
    jc.fh_numeric.push_back(jc.numeric_jacobian(0, c));
    jc.fh_analytic.push_back(right.fmass[static_cast<std::size_t>(c)] / right.total_mass);
  }
  return jc;
}

}  // namespace kslab
