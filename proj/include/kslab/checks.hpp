// Randomized and deterministic check suites. Each suite returns a pass/fail
// verdict, a one-line summary and its metrics as JSON; the acceptance binary
// and the command-line runner share them.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "kslab/core/instances.hpp"
#include "kslab/correlator.hpp"
#include "kslab/ksop.hpp"
#include "kslab/prufer.hpp"
#include "kslab/spectral.hpp"

namespace kslab {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string summary;
  nlohmann::json metrics = nlohmann::json::object();
  double seconds = 0.0;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

inline std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

}  // namespace detail

/// Finite-difference derivatives of the Pruefer phase in theta, lambda and E
/// against their closed forms on random step potentials, both directions.
inline SuiteResult identity_suite(std::size_t instances = 100, std::uint64_t seed = 1, double h = 1e-4,
                                  double tol = 1e-10, double threshold = 1e-6) {
  using instances::random_step_potential;
  using instances::uniform;
  detail::Stopwatch sw;
  std::mt19937_64 rng(seed);
  double worst[3] = {0, 0, 0};
  for (std::size_t k = 0; k < instances; ++k) {
    const double a = uniform(rng, -2.0, 2.0), len = uniform(rng, 0.5, 3.0);
    const bool back = uniform01(rng) < 0.5;
    const double from = back ? a + len : a, to = back ? a : a + len;
    const auto q = random_step_potential(rng, a, a + len, 4, -3.0, 3.0);
    const auto V = random_step_potential(rng, a, a + len, 3, 0.0, 2.0);
    const double E = uniform(rng, -3.0, 3.0), th = uniform(rng, 0.0, 2 * std::numbers::pi),
                 lam = uniform(rng, -2.0, 2.0);
    worst[0] = std::max(worst[0], phase_theta_derivative(q, E, from, to, th, h, tol).rel_error());
    worst[1] = std::max(worst[1], phase_lambda_derivative(q, V, lam, E, from, to, th, h, tol).rel_error());
    worst[2] = std::max(worst[2], phase_energy_derivative(q, E, from, to, th, h, tol).rel_error());
  }
  SuiteResult r;
  r.name = "phase derivative identities";
  r.passed = worst[0] < threshold && worst[1] < threshold && worst[2] < threshold;
  r.summary = std::to_string(instances) + " instances, worst rel err theta " + detail::sci(worst[0]) + " lambda " +
              detail::sci(worst[1]) + " E " + detail::sci(worst[2]);
  r.metrics = {{"instances", instances}, {"worst_theta", worst[0]}, {"worst_lambda", worst[1]}, {"worst_energy", worst[2]}};
  r.seconds = sw.seconds();
  return r;
}

/// Gronwall sandwich, continuous dependence, L2 positivity and Sturm
/// ordering on random instances; counts violations beyond `slack`.
inline SuiteResult solution_estimate_suite(std::size_t instances = 50, std::uint64_t seed = 2, double tol = 1e-10,
                                           double slack = 1e-8) {
  using instances::random_step_potential;
  using instances::uniform;
  detail::Stopwatch sw;
  std::mt19937_64 rng(seed);
  int violations[4] = {0, 0, 0, 0};
  double min_l2 = std::numeric_limits<double>::infinity(), min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < instances; ++k) {
    const auto q = random_step_potential(rng, -2.0, 2.0, 5, -4.0, 4.0);
    const double x = uniform(rng, -2.0, 2.0), y = uniform(rng, -2.0, 2.0);
    const auto s = gronwall_sandwich(q, 0.0, uniform(rng, -1, 1), uniform(rng, -1, 1), x, y, tol);
    if (s.lower > s.middle * (1 + slack) || s.middle > s.upper * (1 + slack)) ++violations[0];

    const auto q2 = linear_combination(1.0, q, uniform(rng, 1e-3, 0.3),
                                       random_step_potential(rng, -2.0, 2.0, 3, -1.0, 1.0));
    const auto d = continuous_dependence(q, q2, y, uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1),
                                         uniform(rng, -1, 1), x, tol);
    if (d.lhs > d.rhs + slack) ++violations[1];

    const double l2 = l2_lower_ratio(q, uniform(rng, -2.0, 1.0), uniform(rng, 0.2, 1.0), uniform(rng, -1, 1),
                                     uniform(rng, -1, 1), tol);
    min_l2 = std::min(min_l2, l2);
    if (!(l2 > 0.0)) ++violations[2];

    const auto lower = random_step_potential(rng, -2.0, 2.0, 4, -3.0, 3.0);
    const auto upper = linear_combination(1.0, lower, 1.0, random_step_potential(rng, -2.0, 2.0, 3, 0.0, 2.0));
    const double th = uniform(rng, 0.0, std::numbers::pi);
    const auto c = sturm_compare(upper, lower, uniform(rng, -2.0, 4.0), th, th + uniform(rng, 0.0, 1.0), -2.0, 2.0,
                                 tol, 256, slack);
    min_gap = std::min(min_gap, c.min_gap);
    if (!c.holds) ++violations[3];
  }
  SuiteResult r;
  r.name = "Gronwall / continuity / L2 / Sturm";
  r.passed = violations[0] + violations[1] + violations[2] + violations[3] == 0;
  r.summary = std::to_string(instances) + " instances each, violations " + std::to_string(violations[0]) + "/" +
              std::to_string(violations[1]) + "/" + std::to_string(violations[2]) + "/" +
              std::to_string(violations[3]) + ", min L2 ratio " + detail::sci(min_l2) + ", min Sturm gap " +
              detail::sci(min_gap);
  r.metrics = {{"instances", instances},        {"sandwich_violations", violations[0]},
               {"dependence_violations", violations[1]}, {"l2_violations", violations[2]},
               {"sturm_violations", violations[3]},      {"min_l2_ratio", min_l2},
               {"min_sturm_gap", min_gap}};
  r.seconds = sw.seconds();
  return r;
}

/// Shooting eigenvalues against the extrapolated difference oracle, plus the
/// free values (k pi / 2L)^2.
inline SuiteResult eigensolver_suite(std::size_t instances = 20, std::uint64_t seed = 3, double threshold = 1e-6,
                                     double free_threshold = 1e-8) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(seed);
  const std::vector<ModelSpec> models{reference_model(10.0),
                                      make_model(cosine_background(0.5, 1.0, 0.3), bump_site(), uniform_density(), 8.0)};
  double worst = 0.0;
  std::size_t compared = 0;
  bool counts_match = true;
  for (std::size_t t = 0; t < instances; ++t) {
    const auto& spec = models[t % models.size()];
    const int L = 1 + static_cast<int>(t % 3);
    const auto w = box_couplings(L, sample_couplings(spec.coupling, static_cast<std::size_t>(2 * L), rng()));
    const auto pairs = find_eigenvalues_in_window(spec, w, L, {}, false);
    const auto dense = dense_oracle_eigenvalues(spec, w, L, 1e-3);
    for (const auto& p : pairs) {
      if (static_cast<std::size_t>(p.index_k) > dense.size()) {
        counts_match = false;
        continue;
      }
      worst = std::max(worst, std::abs(p.energy - dense[static_cast<std::size_t>(p.index_k - 1)]));
      ++compared;
    }
  }
  double worst_free = 0.0;
  const auto free = make_model(zero_background(), indicator_site(), uniform_density(), 10.0);
  for (int L = 1; L <= 3; ++L) {
    for (const auto& p : find_eigenvalues_in_window(free, box_couplings(L, std::vector<double>(2 * L, 0.0)), L, {}, false)) {
      worst_free = std::max(worst_free, std::abs(p.energy - std::pow(p.index_k * std::numbers::pi / (2.0 * L), 2)));
    }
  }
  SuiteResult r;
  r.name = "eigensolver cross-oracle";
  r.passed = counts_match && compared > 0 && worst < threshold && worst_free < free_threshold;
  r.summary = std::to_string(instances) + " instances, " + std::to_string(compared) + " eigenvalues, worst |dE| " +
              detail::sci(worst) + ", free case " + detail::sci(worst_free);
  r.metrics = {{"instances", instances}, {"compared", compared}, {"worst_abs", worst}, {"worst_free", worst_free}};
  r.seconds = sw.seconds();
  return r;
}

/// Couplings reconstructed from eigenfunction phase profiles.
inline SuiteResult roundtrip_suite(const ModelSpec& spec, std::size_t instances = 20, std::uint64_t seed = 4,
                                   double threshold = 1e-6) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::size_t profiles = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    const int L = 1 + static_cast<int>(t % 3);
    const auto omega = box_couplings(L, sample_couplings(spec.coupling, static_cast<std::size_t>(2 * L), rng()));
    for (const auto& p : find_eigenvalues_in_window(spec, omega, L, SpectralOptions{})) {
      const auto prof = eigenfunction_phase_profile(p, spec, omega, L);
      const auto back = reconstruct_couplings(spec, prof.theta_values, prof.branch_index_j, prof.energy, L);
      for (std::size_t n = 0; n < omega.values.size(); ++n) {
        worst = std::max(worst, std::abs(back.values[n] - omega.values[n]));
      }
      ++profiles;
    }
  }
  SuiteResult r;
  r.name = "change-of-variables round trip";
  r.passed = profiles > 0 && worst < threshold;
  r.summary = std::to_string(instances) + " instances, " + std::to_string(profiles) + " profiles, worst |d omega| " +
              detail::sci(worst);
  r.metrics = {{"instances", instances}, {"profiles", profiles}, {"worst_abs", worst}};
  r.seconds = sw.seconds();
  return r;
}

/// Finite-difference Jacobian determinant of omega -> (theta, E) against the
/// closed form for L = 1, 2, and the structured determinant against LU.
inline SuiteResult jacobian_suite(const ModelSpec& spec, std::size_t per_L = 10, std::uint64_t seed = 5,
                                  double threshold = 1e-4, double det_threshold = 1e-12) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int L = 1; L <= 2; ++L) {
    for (std::size_t t = 0; t < per_L; ++t) {
      const auto w = box_couplings(L, sample_couplings(spec.coupling, static_cast<std::size_t>(2 * L), rng()));
      const int k = 1 + static_cast<int>(t % static_cast<std::size_t>(L));
      worst = std::max(worst, jacobian_check(spec, w, L, k, 1e-4).rel_error);
      ++checked;
    }
  }
  double worst_det = 0.0;
  for (int n = 1; n <= 8; ++n) {
    for (int t = 0; t < 5; ++t) {
      std::vector<double> a, b;
      for (int i = 0; i < n; ++i) {
        a.push_back(instances::uniform(rng, -2.0, 2.0));
        b.push_back(instances::uniform(rng, -2.0, 2.0));
      }
      const auto d = structured_determinant(a, b);
      worst_det = std::max(worst_det, std::abs(d.closed_form - d.dense) / std::max(1.0, std::abs(d.closed_form)));
    }
  }
  SuiteResult r;
  r.name = "Jacobian formula";
  r.passed = checked > 0 && worst < threshold && worst_det < det_threshold;
  r.summary = std::to_string(checked) + " configurations, worst rel err " + detail::sci(worst) +
              ", structured det worst " + detail::sci(worst_det);
  r.metrics = {{"configurations", checked}, {"worst_rel", worst}, {"structured_det_worst", worst_det}};
  r.seconds = sw.seconds();
  return r;
}

/// Norms of the discretized operators for the cell g at energy E, at grid m
/// and 2m.
struct NormReport {
  double E = 0.0;
  std::size_t m = 0;
  double T0_11 = 0.0, T0_tilde_11 = 0.0, T1 = 0.0, T1_fine = 0.0, margin = 0.0, margin_fine = 0.0;
  double L0 = 0.0, max_Lj = 0.0;
  bool passed = false;

  nlohmann::json to_json() const {
    return {{"E", E},          {"m", m},           {"T0_11", T0_11},
            {"T0_tilde_11", T0_tilde_11}, {"T1_22", T1},       {"T1_22_fine", T1_fine},
            {"margin", margin}, {"margin_fine", margin_fine}, {"L0", L0},
            {"max_Lj", max_Lj}, {"passed", passed}};
  }
};

inline NormReport operator_norm_report(const CellModel& cell, const KernelOptions& opt) {
  NormReport rep;
  rep.E = cell.E;
  rep.m = opt.m;
  const auto coarse = kernel_cache().get(cell, opt);
  KernelOptions fine_opt = opt;
  fine_opt.m = 2 * opt.m;
  const auto fine = kernel_cache().get(cell, fine_opt);
  rep.T0_11 = norm_1_to_1(coarse->T0());
  rep.T0_tilde_11 = norm_1_to_1(coarse->T0_tilde());
  const auto T1 = coarse->T1();
  rep.T1 = norm_2_to_2(T1);
  rep.T1_fine = norm_2_to_2(fine->T1());
  rep.margin = 1.0 - rep.T1;
  rep.margin_fine = 1.0 - rep.T1_fine;
  const auto blocks = block_decompose(T1, cell.N);
  rep.L0 = norm_2_to_2(blocks[0]);
  for (std::size_t j = 1; j < blocks.size(); ++j) rep.max_Lj = std::max(rep.max_Lj, norm_2_to_2(blocks[j]));
  rep.passed = std::abs(rep.T0_11 - 1.0) <= 1e-3 && std::abs(rep.T0_tilde_11 - 1.0) <= 1e-3 &&
               rep.T1 <= 1.0 + 5e-3 && rep.T1 < 1.0 && rep.margin > 0.0 && rep.margin_fine > 0.0 &&
               std::abs(rep.margin - rep.margin_fine) <= 1e-3 && std::abs(rep.L0 - rep.T1) <= 1e-6 &&
               rep.max_Lj <= rep.L0 + 1e-12;
  return rep;
}

/// Operator-norm checks on the cell of site `site` at each energy.
inline SuiteResult operator_norm_suite(const ModelSpec& spec, int site, const std::vector<double>& energies,
                                       const KernelOptions& opt = {}, double ode_tol = 1e-10) {
  detail::Stopwatch sw;
  SuiteResult r;
  r.name = "operator norms";
  r.passed = !energies.empty();
  r.metrics["reports"] = nlohmann::json::array();
  std::string worst;
  double min_margin = std::numeric_limits<double>::infinity();
  for (double E : energies) {
    const auto rep = operator_norm_report(make_site_cell(spec, site, E, ode_tol), opt);
    r.passed = r.passed && rep.passed;
    r.metrics["reports"].push_back(rep.to_json());
    if (rep.margin < min_margin) {
      min_margin = rep.margin;
      worst = "E=" + detail::fixed(E, 2) + ": |T0|11 " + detail::fixed(rep.T0_11) + " |T0~|11 " +
              detail::fixed(rep.T0_tilde_11) + " |T1| " + detail::fixed(rep.T1) + " (2m " + detail::fixed(rep.T1_fine) +
              ") margin " + detail::sci(rep.margin) + " |L0|-|T1| " + detail::sci(std::abs(rep.L0 - rep.T1));
    }
  }
  r.summary = std::to_string(energies.size()) + " energies, m=" + std::to_string(opt.m) + ", smallest margin at " + worst;
  r.metrics["min_margin"] = min_margin;
  r.seconds = sw.seconds();
  return r;
}

/// Energy absorption and continuity of |T1(g)| in g.
inline SuiteResult continuity_suite(const ModelSpec& spec, const PiecewiseFunction& g,
                                    const PiecewiseFunction& perturbation, double E,
                                    const std::vector<double>& epsilons = {0.1, 0.01, 0.001},
                                    const KernelOptions& opt = {}, double ode_tol = 1e-10) {
  detail::Stopwatch sw;
  const auto probe = norm_continuity_probe(spec, g, perturbation, epsilons, E, opt, ode_tol);
  bool monotone = true;
  for (std::size_t i = 1; i < probe.differences.size(); ++i) {
    monotone = monotone && probe.differences[i].second < probe.differences[i - 1].second;
  }
  const double last = probe.differences.empty() ? 0.0 : probe.differences.back().second;
  SuiteResult r;
  r.name = "continuity and absorption";
  r.passed = probe.absorption_max_diff <= 1e-9 && monotone && last < 1e-3;
  std::string diffs;
  nlohmann::json jd = nlohmann::json::array();
  for (const auto& [eps, d] : probe.differences) {
    diffs += (diffs.empty() ? "" : ", ") + detail::sci(d);
    jd.push_back({{"epsilon", eps}, {"difference", d}});
  }
  r.summary = "absorption max diff " + detail::sci(probe.absorption_max_diff) + ", norm differences " + diffs;
  r.metrics = {{"base_norm", probe.base_norm}, {"absorption_max_diff", probe.absorption_max_diff},
               {"differences", jd},            {"monotone", monotone}};
  r.seconds = sw.seconds();
  return r;
}

/// ln R at y = 0 strictly increasing along the lambda sweep for random beta.
inline SuiteResult large_coupling_suite(const CellModel& cell, const std::vector<double>& lambdas,
                                        std::size_t betas = 10, std::uint64_t seed = 8) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(seed);
  bool increasing = true;
  double min_step = std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < betas; ++t) {
    const double beta = instances::uniform(rng, 0.0, cell.torus_length());
    const auto v = large_coupling_amplitude(beta, cell, lambdas);
    for (std::size_t i = 1; i < v.size(); ++i) {
      min_step = std::min(min_step, v[i] - v[i - 1]);
      increasing = increasing && v[i] > v[i - 1];
    }
    rows.push_back({{"beta", beta}, {"lnR", v}});
  }
  SuiteResult r;
  r.name = "large-coupling probe";
  r.passed = increasing && betas > 0 && lambdas.size() > 1;
  r.summary = std::to_string(betas) + " beta, smallest ln R increment " + detail::sci(min_step);
  r.metrics = {{"lambdas", lambdas}, {"samples", rows}, {"min_increment", min_step}};
  r.seconds = sw.seconds();
  return r;
}

inline nlohmann::json series_to_json(const CorrelatorSeries& s) {
  return {{"L", s.L},
          {"e_max", s.e_max},
          {"samples", s.sample_count},
          {"seed", s.seed},
          {"distances", s.distances},
          {"means", s.means},
          {"std_errors", s.std_errors},
          {"mean_window_count", s.mean_window_count}};
}

inline nlohmann::json fit_to_json(const DecayFit& f) {
  return {{"C", f.C},
          {"eta", f.eta},
          {"r_squared", f.r_squared},
          {"eta_std_error", f.eta_std_error},
          {"fit_window", f.fit_window},
          {"dropped", f.dropped}};
}

inline nlohmann::json rate_to_json(const OperatorBoundRate& b) {
  return {{"gamma", b.gamma},
          {"eta_op", b.defined ? nlohmann::json(b.eta_op) : nlohmann::json(nullptr)},
          {"defined", b.defined},
          {"grid", b.grid_descriptor},
          {"cells", b.cells},
          {"energies", b.energies},
          {"norms", b.norms}};
}

struct DecayOutcome {
  CorrelatorSeries series;
  DecayFit fit;
  OperatorBoundRate rate;
  SuiteResult result;
};

/// Monte Carlo correlator series, log-linear fit and comparison with the
/// operator-bound rate.
inline DecayOutcome correlator_decay_suite(const ModelSpec& spec, int L, const std::vector<int>& distances,
                                           std::size_t samples, std::uint64_t seed, const OperatorBoundRate& rate,
                                           int min_distance = 3, const CorrelatorOptions& copt = {}) {
  detail::Stopwatch sw;
  DecayOutcome out;
  out.series = estimate_series(spec, L, distances, samples, seed, copt);
  out.fit = decay_fit(out.series, min_distance);
  out.rate = rate;
  auto& r = out.result;
  r.name = "correlator decay";
  const bool rate_ok = !rate.defined || out.fit.eta >= rate.eta_op - 3.0 * out.fit.eta_std_error;
  r.passed = out.fit.r_squared > 0.9 && out.fit.eta > 0.0 && rate.defined && rate_ok;
  r.summary = "L=" + std::to_string(L) + ", " + std::to_string(samples) + " samples: eta " + detail::fixed(out.fit.eta, 4) +
              " +- " + detail::fixed(out.fit.eta_std_error, 4) + ", R^2 " + detail::fixed(out.fit.r_squared, 4) +
              ", eta_op " + (rate.defined ? detail::sci(rate.eta_op) : std::string("undefined")) + " (gamma " +
              detail::fixed(rate.gamma, 6) + ")";
  r.metrics = {{"series", series_to_json(out.series)}, {"fit", fit_to_json(out.fit)}, {"rate", rate_to_json(rate)}};
  r.seconds = sw.seconds();
  return out;
}

/// rho_L(x, y) by Monte Carlo against tensor Gauss-Legendre quadrature.
inline SuiteResult mc_vs_quadrature_suite(const ModelSpec& spec, int L, int x, int y, std::size_t samples,
                                          std::uint64_t seed, std::size_t nodes, std::size_t check_nodes) {
  detail::Stopwatch sw;
  const double oracle = tensor_quadrature_rho(spec, L, x, y, nodes);
  const double oracle_check = tensor_quadrature_rho(spec, L, x, y, check_nodes);
  const auto mc = estimate_rho(spec, L, x, y, samples, seed);
  const double z = mc.std_error > 0.0 ? std::abs(mc.mean - oracle) / mc.std_error
                                      : (mc.mean == oracle ? 0.0 : std::numeric_limits<double>::infinity());
  SuiteResult r;
  r.name = "Monte Carlo vs quadrature";
  r.passed = z <= 3.0;
  r.summary = "rho_" + std::to_string(L) + "(" + std::to_string(x) + "," + std::to_string(y) + "): MC " +
              detail::fixed(mc.mean, 6) + " +- " + detail::sci(mc.std_error) + ", GL(" + std::to_string(nodes) + ") " +
              detail::fixed(oracle, 6) + ", GL(" + std::to_string(check_nodes) + ") " + detail::fixed(oracle_check, 6) +
              ", " + detail::fixed(z, 2) + " s.e.";
  r.metrics = {{"mc_mean", mc.mean},   {"mc_std_error", mc.std_error}, {"oracle", oracle},
               {"oracle_check", oracle_check}, {"nodes", nodes}, {"check_nodes", check_nodes},
               {"samples", samples},   {"z", z}};
  r.seconds = sw.seconds();
  return r;
}

/// Fixed-energy bound for n = 1..ns.size(): lhs <= (1 + slack) rhs at n = 1
/// and rhs decreasing along ns.
inline SuiteResult bound_suite(const ModelSpec& spec, int L, const std::vector<int>& ns, double E,
                               const BoundCheckOptions& opt = {}, double slack = 0.05) {
  detail::Stopwatch sw;
  SuiteResult r;
  r.name = "fixed-energy bound";
  r.metrics["rows"] = nlohmann::json::array();
  bool ok = !ns.empty(), decreasing = true;
  double prev_rhs = std::numeric_limits<double>::infinity();
  std::string text;
  for (int n : ns) {
    const auto b = kunz_souillard_bound_check(spec, L, n, E, opt);
    ok = ok && b.lhs <= (1.0 + slack) * b.rhs;
    decreasing = decreasing && b.rhs < prev_rhs;
    prev_rhs = b.rhs;
    text += (text.empty() ? "" : "; ") + std::string("n=") + std::to_string(n) + " lhs " + detail::fixed(b.lhs, 5) +
            " rhs " + detail::fixed(b.rhs, 5);
    r.metrics["rows"].push_back({{"n", n}, {"lhs", b.lhs}, {"rhs", b.rhs}, {"constant", b.constant}});
  }
  r.passed = ok && decreasing;
  r.summary = "L=" + std::to_string(L) + ", E=" + detail::fixed(E, 2) + ": " + text +
              (decreasing ? "" : " (rhs not decreasing)");
  r.seconds = sw.seconds();
  return r;
}

}  // namespace kslab
