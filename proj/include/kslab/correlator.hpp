// Finite-volume correlators rho_L(1, n), estimated through the eigenfunction
// product bound sum_k |chi_x v_k| |chi_y v_k| over the window |E_k| <= E_max;
// exponential fits of the decay; the operator-side rate ln(1 / gamma); the
// time-evolved moment |chi_x e^{-itH} P chi_y|; and the fixed-energy bound
// comparing a direct quadrature with the operator product.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kslab/core/errors.hpp"
#include "kslab/core/parallel.hpp"
#include "kslab/core/quadrature.hpp"
#include "kslab/ksop.hpp"
#include "kslab/model.hpp"
#include "kslab/spectral.hpp"

namespace kslab {

struct CorrelatorSeries {
  std::vector<int> distances;
  std::vector<double> means;
  std::vector<double> std_errors;
  std::size_t sample_count = 0;
  int L = 0;
  double e_max = 0.0;
  std::uint64_t seed = 0;
  double mean_window_count = 0.0;  // average number of eigenvalues in the window
};

struct DecayFit {
  double C = 0.0;
  double eta = 0.0;
  double r_squared = 0.0;
  double eta_std_error = 0.0;
  std::vector<int> fit_window;
  std::vector<int> dropped;  // distances removed for non-positive means
};

struct OperatorBoundRate {
  double gamma = 0.0;
  double eta_op = 0.0;
  bool defined = false;  // gamma in (0, 1)
  std::string grid_descriptor;
  std::vector<int> cells;
  std::vector<double> energies;
  std::vector<double> norms;  // row-major over (cell, energy)
};

namespace detail {

/// Grid index range [lo, hi] of the cell [x - 1, x] on an eigenpair grid.
inline std::pair<std::size_t, std::size_t> cell_index_range(const EigenPair& p, int x, int L) {
  if (x < -L + 1 || x > L) throw PreconditionError("correlator: site " + std::to_string(x) + " outside the box");
  const std::size_t n = p.grid.size() - 1;
  const std::size_t per = n / static_cast<std::size_t>(2 * L);
  if (per * static_cast<std::size_t>(2 * L) != n || per % 2 != 0) {
    throw PreconditionError("correlator: eigenpair grid is not aligned with the unit cells");
  }
  const auto lo = static_cast<std::size_t>(x - 1 + L) * per;
  return {lo, lo + per};
}

inline double local_inner(const EigenPair& a, const EigenPair& b, int x, int L) {
  const auto [lo, hi] = cell_index_range(a, x, L);
  std::vector<double> v(hi - lo + 1);
  for (std::size_t i = lo; i <= hi; ++i) v[i - lo] = a.values[i] * b.values[i];
  return simpson(v, a.grid[1] - a.grid[0]);
}

}  // namespace detail

/// |chi_x v|_2 with chi_x the indicator of [x - 1, x].
inline double local_norm(const EigenPair& p, int x, int L) {
  return std::sqrt(std::max(0.0, detail::local_inner(p, p, x, L)));
}

/// sum_k |chi_x v_k| |chi_y v_k|.
inline double correlator_summand(const std::vector<EigenPair>& pairs, int x, int y, int L) {
  double s = 0.0;
  for (const auto& p : pairs) s += local_norm(p, x, L) * local_norm(p, y, L);
  return s;
}

/// |chi_x e^{-itH} P_window chi_y|: the largest singular value of
/// sum_k e^{-itE_k} |chi_x v_k><chi_y v_k|, from the Gram matrices of the
/// localized eigenfunctions.
inline double dynamical_moment(const std::vector<EigenPair>& pairs, int x, int y, double t, int L) {
  const auto K = static_cast<Eigen::Index>(pairs.size());
  if (K == 0) return 0.0;
  Eigen::MatrixXd gx(K, K), gy(K, K);
  for (Eigen::Index a = 0; a < K; ++a) {
    for (Eigen::Index b = a; b < K; ++b) {
      gx(a, b) = gx(b, a) = detail::local_inner(pairs[static_cast<std::size_t>(a)], pairs[static_cast<std::size_t>(b)], x, L);
      gy(a, b) = gy(b, a) = detail::local_inner(pairs[static_cast<std::size_t>(a)], pairs[static_cast<std::size_t>(b)], y, L);
    }
  }
  Eigen::VectorXcd d(K);
  for (Eigen::Index k = 0; k < K; ++k) d(k) = std::polar(1.0, -t * pairs[static_cast<std::size_t>(k)].energy);
  // Nonzero spectrum of A* A equals that of S (D* Gx D) S with S = Gy^1/2.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gy);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXcd S = (es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose()).cast<std::complex<double>>();
  const Eigen::MatrixXcd mid = d.conjugate().asDiagonal() * gx.cast<std::complex<double>>() * d.asDiagonal();
  const Eigen::MatrixXcd H = S * mid * S;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hs(0.5 * (H + H.adjoint()));
  return std::sqrt(std::max(0.0, hs.eigenvalues().maxCoeff()));
}

/// Mean and standard error by batch means over contiguous batches.
struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MeanEstimate batch_mean(std::span<const double> values, std::size_t batches = 20) {
  const std::size_t n = values.size();
  if (n < 2) throw PreconditionError("batch_mean: need at least two samples");
  batches = std::min(batches, n);
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * n / batches, hi = (b + 1) * n / batches;
    means[b] = pairwise_sum(values.subspan(lo, hi - lo)) / static_cast<double>(hi - lo);
  }
  MeanEstimate e;
  e.mean = pairwise_sum(values) / static_cast<double>(n);
  std::vector<double> dev(batches);
  const double bm = pairwise_sum(means) / static_cast<double>(batches);
  for (std::size_t b = 0; b < batches; ++b) dev[b] = (means[b] - bm) * (means[b] - bm);
  e.std_error = std::sqrt(pairwise_sum(dev) / static_cast<double>(batches - 1) / static_cast<double>(batches));
  return e;
}

struct CorrelatorOptions {
  SpectralOptions spectral;
  std::size_t batches = 20;
  unsigned workers = 0;
};

/// rho_L(1, n) for each n in `distances` from one set of disorder samples.
/// Sample s uses couplings drawn with derive_seed(seed, s).
inline CorrelatorSeries estimate_series(const ModelSpec& spec, int L, const std::vector<int>& distances,
                                        std::size_t samples, std::uint64_t seed, const CorrelatorOptions& opt = {}) {
  if (samples < 2) throw PreconditionError("estimate_series: need at least two samples");
  for (int n : distances) {
    if (n < 1 || n > L) throw PreconditionError("estimate_series: distances must lie in 1..L");
  }
  const std::size_t D = distances.size();
  std::vector<std::vector<double>> values(D, std::vector<double>(samples));
  std::vector<double> counts(samples);
  parallel_for(
      samples,
      [&](std::size_t s) {
        const auto omega = box_couplings(L, sample_couplings(spec.coupling, static_cast<std::size_t>(2 * L),
                                                             derive_seed(seed, s)));
        const auto pairs = find_eigenvalues_in_window(spec, omega, L, opt.spectral, true);
        counts[s] = static_cast<double>(pairs.size());
        for (std::size_t d = 0; d < D; ++d) values[d][s] = correlator_summand(pairs, 1, distances[d], L);
      },
      opt.workers);
  CorrelatorSeries out;
  out.distances = distances;
  out.sample_count = samples;
  out.L = L;
  out.e_max = spec.e_max;
  out.seed = seed;
  out.mean_window_count = pairwise_sum(counts) / static_cast<double>(samples);
  for (std::size_t d = 0; d < D; ++d) {
    const auto e = batch_mean(values[d], opt.batches);
    out.means.push_back(e.mean);
    out.std_errors.push_back(e.std_error);
  }
  return out;
}

/// rho_L(x, y) estimate with its standard error.
inline MeanEstimate estimate_rho(const ModelSpec& spec, int L, int x, int y, std::size_t samples, std::uint64_t seed,
                                 const CorrelatorOptions& opt = {}) {
  if (samples < 2) throw PreconditionError("estimate_rho: need at least two samples");
  std::vector<double> values(samples);
  parallel_for(
      samples,
      [&](std::size_t s) {
        const auto omega = box_couplings(L, sample_couplings(spec.coupling, static_cast<std::size_t>(2 * L),
                                                             derive_seed(seed, s)));
        values[s] = correlator_summand(find_eigenvalues_in_window(spec, omega, L, opt.spectral, true), x, y, L);
      },
      opt.workers);
  return batch_mean(values, opt.batches);
}

/// Tensor Gauss-Legendre quadrature of E[sum_k |chi_x v_k| |chi_y v_k|] over
/// the couplings, `nodes` per coupling on the positive range of r.
inline double tensor_quadrature_rho(const ModelSpec& spec, int L, int x, int y, std::size_t nodes,
                                    const SpectralOptions& sopt = {}) {
  const std::size_t dims = static_cast<std::size_t>(2 * L);
  if (dims > 6) throw PreconditionError("tensor_quadrature_rho: L <= 3");
  const auto [lo, hi] = spec.coupling.positive_range();
  const auto rule = gauss_legendre(nodes, lo, hi);
  std::size_t total = 1;
  for (std::size_t d = 0; d < dims; ++d) total *= nodes;
  std::vector<double> terms(total);
  parallel_for(total, [&](std::size_t idx) {
    std::vector<double> w(dims);
    double weight = 1.0;
    std::size_t rest = idx;
    for (std::size_t d = 0; d < dims; ++d) {
      const std::size_t k = rest % nodes;
      rest /= nodes;
      w[d] = rule.nodes[k];
      weight *= rule.weights[k] * spec.coupling.pdf(rule.nodes[k]);
    }
    if (weight == 0.0) return;
    const auto pairs = find_eigenvalues_in_window(spec, box_couplings(L, w), L, sopt, true);
    terms[idx] = weight * correlator_summand(pairs, x, y, L);
  });
  return pairwise_sum(terms);
}

/// Weighted least squares of ln(mean) against n for n >= min_distance, with
/// weights (mean / std_error)^2 (unit weights when all errors vanish).
inline DecayFit decay_fit(const CorrelatorSeries& s, int min_distance = 3) {
  std::vector<double> xs, ys, ws;
  DecayFit fit;
  bool have_errors = false;
  for (std::size_t i = 0; i < s.distances.size(); ++i) {
    if (s.distances[i] < min_distance) continue;
    if (!(s.means[i] > 0.0)) {
      fit.dropped.push_back(s.distances[i]);
      continue;
    }
    const double se = i < s.std_errors.size() ? s.std_errors[i] : 0.0;
    if (se > 0.0) have_errors = true;
    xs.push_back(s.distances[i]);
    ys.push_back(std::log(s.means[i]));
    ws.push_back(se > 0.0 ? (s.means[i] / se) * (s.means[i] / se) : 0.0);
    fit.fit_window.push_back(s.distances[i]);
  }
  if (xs.size() < 3) throw PreconditionError("decay_fit: need at least three positive means in the fit window");
  if (!have_errors) {
    std::fill(ws.begin(), ws.end(), 1.0);
  } else {
    for (auto& w : ws) {
      if (w == 0.0) w = *std::max_element(ws.begin(), ws.end());
    }
  }
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sw += ws[i];
    sx += ws[i] * xs[i];
    sy += ws[i] * ys[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += ws[i] * (xs[i] - mx) * (xs[i] - mx);
    sxy += ws[i] * (xs[i] - mx) * (ys[i] - my);
    syy += ws[i] * (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double chi2 = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - intercept - slope * xs[i];
    chi2 += ws[i] * r * r;
  }
  fit.eta = -slope;
  fit.C = std::exp(intercept);
  fit.r_squared = syy > 0.0 ? 1.0 - chi2 / syy : 1.0;
  const double red = chi2 / static_cast<double>(xs.size() - 2);
  fit.eta_std_error = std::sqrt((have_errors ? std::max(1.0, red) : red) / sxx);
  return fit;
}

/// gamma = max |T1(g_i - E, 0)| over the given cells and energies.
inline OperatorBoundRate operator_bound_rate(const ModelSpec& spec, const std::vector<int>& cells,
                                             const std::vector<double>& energies, const KernelOptions& kopt = {},
                                             double ode_tol = 1e-10) {
  if (cells.empty() || energies.empty()) throw PreconditionError("operator_bound_rate: empty grid");
  OperatorBoundRate out;
  out.cells = cells;
  out.energies = energies;
  for (int i : cells) {
    for (double E : energies) {
      if (std::abs(E) > spec.e_max) throw PreconditionError("operator_bound_rate: energy outside [-E_max, E_max]");
      const auto g = linear_combination(1.0, spec.background.cell(i), 0.0, spec.background.cell(i), -E);
      const auto table = kernel_cache().get(make_cell(spec, g, 0.0, ode_tol), kopt);
      out.norms.push_back(norm_2_to_2(table->T1()));
    }
  }
  out.gamma = *std::max_element(out.norms.begin(), out.norms.end());
  out.defined = out.gamma > 0.0 && out.gamma < 1.0;
  out.eta_op = out.defined ? std::log(1.0 / out.gamma) : std::numeric_limits<double>::quiet_NaN();
  out.grid_descriptor = "m=" + std::to_string(kopt.m) + ";q=" + std::to_string(kopt.subdivisions) +
                        ";cells=" + std::to_string(cells.size()) + ";energies=" + std::to_string(energies.size());
  return out;
}

struct BoundCheckOptions {
  KernelOptions kernel;
  std::size_t outer_nodes = 16;  // Gauss-Legendre nodes per outer coupling
  std::size_t inner_nodes = 16;  // per smooth piece of the inner coupling
  std::size_t inner_scan = 32;   // scan intervals locating the inner pieces
  double ode_tol = 1e-10;
};

struct BoundCheckResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double constant = 0.0;  // the a priori constant C in front of the inner products
  std::vector<double> lhs_per_j;
  std::vector<double> rhs_per_j;
};

/// exp-growth constant of the amplitude bound: int over a unit cell of u^2
/// <= C R^2 at either end, C = (e^Q - 1) / Q, Q = 1 + |W0| + M |f| + E_max.
inline double amplitude_constant(const ModelSpec& spec) {
  const double Q = 1.0 + spec.background.sup_norm + spec.coupling.support_bound() * spec.single_site.sup_norm +
                   spec.e_max;
  return std::expm1(Q) / Q;
}

/// Right side: C sum_j < T0~(g_0) ... T0~(g_{-L+2}) Phi(g_{-L+1}),
/// T1(g_1) ... T1(g_n) T0(g_{n+1}) ... T0(g_{L-1}) Psi_j(g_L) >, with the
/// last factor of T1 type when n = L.
inline BoundCheckResult bound_rhs(const ModelSpec& spec, int L, int n, double E, const BoundCheckOptions& opt) {
  auto table = [&](int i) { return kernel_cache().get(make_site_cell(spec, i, E, opt.ode_tol), opt.kernel); };
  const auto left_bv = boundary_vectors(make_site_cell(spec, -L + 1, E, opt.ode_tol), opt.kernel);
  Eigen::VectorXd a = left_bv.phi;
  for (int i = -L + 2; i <= 0; ++i) a = table(i)->T0_tilde().apply(a);
  const auto right_bv = boundary_vectors(make_site_cell(spec, L, E, opt.ode_tol), opt.kernel);
  BoundCheckResult res;
  res.constant = amplitude_constant(spec);
  const double h = spec.phase_bound_N * 2.0 * std::numbers::pi / static_cast<double>(opt.kernel.m);
  for (std::size_t j = 0; j < right_bv.psi.size(); ++j) {
    Eigen::VectorXd b = n == L ? right_bv.t1_end[j] : right_bv.psi[j];
    for (int i = L - 1; i >= 1; --i) b = (i <= n ? table(i)->T1() : table(i)->T0()).apply(b);
    const double v = res.constant * h * a.dot(b);
    res.rhs_per_j.push_back(v);
    res.rhs += v;
  }
  return res;
}

/// Left side: rho_L(1, n, E) by quadrature over the phase variables. The
/// phases theta_{-L+1..L-1} are parametrized by the couplings of cells
/// -L+1..L-1 (theta_i is the phase at site i of u_{-L}); the Jacobian of that
/// substitution cancels the ratios R^2 / int f u^2 cell by cell, leaving
///   sum_j int prod r(omega_i) r(omega_L) (int_{n-1}^n u^2)^1/2 (int_0^1 u^2)^1/2 / int f_L u^2
/// with omega_L = lambda(theta_{L-1}, j pi, g_L, E) and u the Dirichlet
/// solution of the reconstructed box at E.
inline std::vector<double> bound_lhs(const ModelSpec& spec, int L, int n, double E, const BoundCheckOptions& opt) {
  const int parts = 2 * spec.phase_bound_N;
  const auto [lo, hi] = spec.coupling.positive_range();
  const auto outer = gauss_legendre(opt.outer_nodes, lo, hi);
  const auto inner = gauss_legendre(opt.inner_nodes);
  std::vector<CellModel> cells;
  for (int i = -L + 1; i <= L; ++i) cells.push_back(make_site_cell(spec, i, E, opt.ode_tol));
  const CellModel& last = cells.back();
  const CellModel& penult = cells[cells.size() - 2];
  std::vector<ColumnRange> ranges;
  for (int j = 0; j < parts; ++j) ranges.push_back(column_range(last, j * std::numbers::pi));

  const std::size_t dims = static_cast<std::size_t>(2 * L - 2);
  std::size_t total = 1;
  for (std::size_t d = 0; d < dims; ++d) total *= opt.outer_nodes;
  std::vector<std::vector<double>> terms(static_cast<std::size_t>(parts), std::vector<double>(total, 0.0));

  parallel_for(total, [&](std::size_t idx) {
    std::vector<double> omega(static_cast<std::size_t>(2 * L), 0.0);
    double weight = 1.0;
    std::size_t rest = idx;
    double theta = 0.0;  // phase of u_{-L} at -L
    for (std::size_t d = 0; d < dims; ++d) {
      const std::size_t k = rest % opt.outer_nodes;
      rest /= opt.outer_nodes;
      omega[d] = outer.nodes[k];
      weight *= outer.weights[k] * spec.coupling.pdf(outer.nodes[k]);
    }
    if (weight == 0.0) return;
    for (std::size_t d = 0; d < dims; ++d) theta = shoot_up(cells[d], theta, omega[d]).phi;
    const double theta_prefix = theta;

    // omega_{L-1} -> omega_L on branch j, if it lands in the support of r.
    auto last_coupling = [&](double w, int j) -> std::optional<double> {
      const double th = shoot_up(penult, theta_prefix, w).phi;
      const auto s = solve_lambda_in_column(last, ranges[static_cast<std::size_t>(j)], th, {}, 1e-13);
      if (!s.exists || spec.coupling.pdf(s.lambda) <= 0.0) return std::nullopt;
      return s.lambda;
    };
    auto integrand = [&](double w, double wL) {
      auto full = omega;
      full[dims] = w;
      full[dims + 1] = wL;
      const auto bs = box_solution(spec, box_couplings(L, full), L, E, true, opt.ode_tol);
      const double mn = bs.mass[static_cast<std::size_t>(n + L - 1)];
      const double m1 = bs.mass[static_cast<std::size_t>(L)];
      const double fL = bs.fmass[static_cast<std::size_t>(2 * L - 1)];
      return spec.coupling.pdf(w) * spec.coupling.pdf(wL) * std::sqrt(mn * m1) / fL;
    };

    for (int j = 0; j < parts; ++j) {
      // Scan, then bisect the boundaries of the active set in omega_{L-1}.
      const std::size_t S = opt.inner_scan;
      std::vector<double> xs(S + 1);
      std::vector<bool> on(S + 1);
      for (std::size_t s = 0; s <= S; ++s) {
        xs[s] = lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(S);
        on[s] = last_coupling(xs[s], j).has_value();
      }
      std::vector<std::pair<double, double>> pieces;
      double start = on[0] ? xs[0] : std::numeric_limits<double>::quiet_NaN();
      for (std::size_t s = 0; s < S; ++s) {
        if (on[s] == on[s + 1]) continue;
        double a = xs[s], b = xs[s + 1];
        for (int it = 0; it < 60 && b - a > 1e-13; ++it) {
          const double c = 0.5 * (a + b);
          if (last_coupling(c, j).has_value() == on[s]) {
            a = c;
          } else {
            b = c;
          }
        }
        if (on[s]) {
          pieces.emplace_back(start, a);
        } else {
          start = b;
        }
      }
      if (on[S]) pieces.emplace_back(start, xs[S]);
      double acc = 0.0;
      for (const auto& [pa, pb] : pieces) {
        const double half = 0.5 * (pb - pa), mid = 0.5 * (pa + pb);
        for (std::size_t k = 0; k < inner.nodes.size(); ++k) {
          const double w = mid + half * inner.nodes[k];
          const auto wL = last_coupling(w, j);
          if (wL) acc += half * inner.weights[k] * integrand(w, *wL);
        }
      }
      terms[static_cast<std::size_t>(j)][idx] = weight * acc;
    }
  });
  std::vector<double> out;
  for (const auto& t : terms) out.push_back(pairwise_sum(t));
  return out;
}

/// Fixed-energy bound rho_L(1, n, E) <= rhs, both sides evaluated.
inline BoundCheckResult kunz_souillard_bound_check(const ModelSpec& spec, int L, int n, double E,
                                                   const BoundCheckOptions& opt = {}) {
  if (L < 1 || L > 3) throw PreconditionError("kunz_souillard_bound_check: quadrature budget allows L <= 3");
  if (n < 1 || n > L) throw PreconditionError("kunz_souillard_bound_check: need 1 <= n <= L");
  if (std::abs(E) > spec.e_max) throw PreconditionError("kunz_souillard_bound_check: |E| > E_max");
  auto res = bound_rhs(spec, L, n, E, opt);
  res.lhs_per_j = bound_lhs(spec, L, n, E, opt);
  for (double v : res.lhs_per_j) res.lhs += v;
  return res;
}

}  // namespace kslab
