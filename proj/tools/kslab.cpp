// kslab <scenario> --config <file> [--samples N] [--seed S] [--out DIR] [--grid M] [--tol T]
//
// Flags override values from the config file, which override the defaults.
// Exit status: 0 when every built-in check passes, 1 when a check fails,
// 2 on configuration or runtime errors.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kslab/checks.hpp"
#include "kslab/config/io.hpp"

using namespace kslab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Report {
  std::vector<SuiteResult> checks;
  json summary = json::object();
};

KernelOptions kernel_options(const RunParameters& run) {
  KernelOptions o;
  o.m = run.grid;
  o.subdivisions = run.subdivisions;
  return o;
}

std::vector<double> window_energies(const ScenarioConfig& cfg) {
  std::vector<double> out;
  for (double E : cfg.run.energies) {
    if (std::abs(E) <= cfg.model.e_max) out.push_back(E);
  }
  if (out.empty()) throw ConfigError("key 'run.energies' has no energy inside [-e_max, e_max]");
  return out;
}

json suite_json(const SuiteResult& r) {
  return {{"name", r.name}, {"passed", r.passed}, {"summary", r.summary}, {"metrics", r.metrics}};
}

void write_summary(const ScenarioConfig& cfg, const std::string& scenario, const Report& rep) {
  json checks = json::array();
  bool ok = true;
  for (const auto& c : rep.checks) {
    checks.push_back(suite_json(c));
    ok = ok && c.passed;
  }
  write_json(fs::path(cfg.run.out) / "summary.json", {{"schema", kSchemaVersion},
                                                       {"scenario", scenario},
                                                       {"config_hash", cfg.hash},
                                                       {"model", cfg.model_json},
                                                       {"run", detail::run_to_json(cfg.run)},
                                                       {"passed", ok},
                                                       {"checks", checks},
                                                       {"results", rep.summary}});
}

Report run_identities(const ScenarioConfig& cfg) {
  const auto& run = cfg.run;
  Report rep;
  rep.checks.push_back(identity_suite(run.identity_instances, derive_seed(run.seed, 1), run.fd_step, run.tol));
  rep.checks.push_back(solution_estimate_suite(std::max<std::size_t>(1, run.identity_instances / 2),
                                               derive_seed(run.seed, 2), run.tol));
  rep.checks.push_back(roundtrip_suite(cfg.model, 20, derive_seed(run.seed, 4)));
  rep.checks.push_back(jacobian_suite(cfg.model, 10, derive_seed(run.seed, 5)));
  return rep;
}

Report run_spectrum(const ScenarioConfig& cfg) {
  const auto& run = cfg.run;
  const auto n = static_cast<std::size_t>(2 * run.L);
  std::vector<double> values = run.couplings;
  if (values.empty()) values = sample_couplings(cfg.model.coupling, n, run.seed);
  if (values.size() != n) throw ConfigError("key 'run.couplings' needs 2L entries");
  const auto omega = box_couplings(run.L, values);
  SpectralOptions so;
  so.ode_tol = run.tol;
  const auto pairs = find_eigenvalues_in_window(cfg.model, omega, run.L, so, true);

  auto os = open_output(fs::path(run.out) / "eigenpairs.csv");
  write_csv_header(os, "eigenpairs", cfg.hash, {"k", "energy", "x", "value"});
  for (const auto& p : pairs) {
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
      os << p.index_k << ',' << exact_repr(p.energy) << ',' << exact_repr(p.grid[i]) << ',' << exact_repr(p.values[i])
         << '\n';
    }
  }
  auto ps = open_output(fs::path(run.out) / "phase_profiles.csv");
  write_csv_header(ps, "phase-profiles", cfg.hash, {"k", "j", "site", "theta"});
  for (const auto& p : pairs) {
    const auto prof = eigenfunction_phase_profile(p, cfg.model, omega, run.L);
    for (std::size_t i = 0; i < prof.theta_values.size(); ++i) {
      ps << prof.index_k << ',' << prof.branch_index_j << ',' << prof.first_site + static_cast<int>(i) << ','
         << exact_repr(prof.theta_values[i]) << '\n';
    }
  }

  Report rep;
  SuiteResult check;
  check.name = "dense oracle agreement";
  double worst = 0.0;
  bool counts = true;
  const auto dense = dense_oracle_eigenvalues(cfg.model, omega, run.L, 1e-3);
  for (const auto& p : pairs) {
    if (static_cast<std::size_t>(p.index_k) > dense.size()) {
      counts = false;
      continue;
    }
    worst = std::max(worst, std::abs(p.energy - dense[static_cast<std::size_t>(p.index_k - 1)]));
  }
  check.passed = counts && worst < 1e-6;
  check.summary = std::to_string(pairs.size()) + " eigenvalues in the window, worst |dE| vs oracle " + detail::sci(worst);
  check.metrics = {{"worst_abs", worst}};
  rep.checks.push_back(check);
  json energies = json::array();
  for (const auto& p : pairs) energies.push_back({{"k", p.index_k}, {"energy", p.energy}});
  rep.summary = {{"couplings", values}, {"eigenvalues", energies}};
  return rep;
}

void write_series(const ScenarioConfig& cfg, const CorrelatorSeries& s, const std::string& file) {
  auto os = open_output(fs::path(cfg.run.out) / file);
  write_csv_header(os, "correlator-series", cfg.hash, {"L", "n", "mean", "std_error", "samples", "log_mean", "log_error"});
  for (std::size_t i = 0; i < s.distances.size(); ++i) {
    const double m = s.means[i], e = s.std_errors[i];
    os << s.L << ',' << s.distances[i] << ',' << exact_repr(m) << ',' << exact_repr(e) << ',' << s.sample_count << ','
       << (m > 0.0 ? exact_repr(std::log(m)) : std::string("nan")) << ','
       << (m > 0.0 ? exact_repr(e / m) : std::string("nan")) << '\n';
  }
}

Report run_correlator_decay(const ScenarioConfig& cfg) {
  const auto& run = cfg.run;
  const auto rate = operator_bound_rate(cfg.model, run.cells, window_energies(cfg), kernel_options(run), run.tol);
  CorrelatorOptions copt;
  copt.spectral.ode_tol = run.tol;
  const auto out = correlator_decay_suite(cfg.model, run.L, run.distances, run.samples, run.seed, rate, run.min_distance, copt);
  write_series(cfg, out.series, "series.csv");
  write_json(fs::path(run.out) / "fit.json", {{"schema", kSchemaVersion},
                                              {"config_hash", cfg.hash},
                                              {"fit", fit_to_json(out.fit)},
                                              {"operator_bound_rate", rate_to_json(rate)}});
  Report rep;
  rep.checks.push_back(out.result);
  return rep;
}

Report run_operator_norm(const ScenarioConfig& cfg) {
  const auto& run = cfg.run;
  const auto opt = kernel_options(run);
  auto os = open_output(fs::path(run.out) / "norms.csv");
  write_csv_header(os, "operator-norms", cfg.hash,
                   {"cell", "E", "m", "T0_11", "T0_tilde_11", "T1_22", "T1_22_2m", "margin", "margin_2m", "L0",
                    "max_Lj"});
  Report rep;
  SuiteResult all;
  all.name = "operator norms";
  all.passed = true;
  double gamma = 0.0;
  bool exported = false;
  for (int cell : run.cells) {
    for (double E : window_energies(cfg)) {
      const auto c = make_site_cell(cfg.model, cell, E, run.tol);
      const auto r = operator_norm_report(c, opt);
      all.passed = all.passed && r.passed;
      gamma = std::max(gamma, r.T1);
      os << cell << ',' << exact_repr(E) << ',' << r.m << ',' << exact_repr(r.T0_11) << ',' << exact_repr(r.T0_tilde_11)
         << ',' << exact_repr(r.T1) << ',' << exact_repr(r.T1_fine) << ',' << exact_repr(r.margin) << ','
         << exact_repr(r.margin_fine) << ',' << exact_repr(r.L0) << ',' << exact_repr(r.max_Lj) << '\n';
      if (!exported) {
        const auto table = kernel_cache().get(c, opt);
        write_kernel_binary(fs::path(run.out) / "T1.bin", table->T1());
        auto manifest = kernel_manifest(c, opt);
        manifest["config_hash"] = cfg.hash;
        manifest["cell"] = cell;
        manifest["kernel"] = "T1";
        manifest["layout"] = "magic KSLABK1, uint64 rows, uint64 cols, row-major float64";
        write_json(fs::path(run.out) / "T1.manifest.json", manifest);
        exported = true;
      }
    }
  }
  all.summary = std::to_string(run.cells.size()) + " cells, m=" + std::to_string(opt.m) + ", gamma " + detail::fixed(gamma) +
                (gamma < 1.0 ? ", eta_op " + detail::sci(std::log(1.0 / gamma)) : std::string(", eta_op undefined"));
  all.metrics = {{"gamma", gamma}};
  rep.checks.push_back(all);
  return rep;
}

Report run_bound_check(const ScenarioConfig& cfg) {
  const auto& run = cfg.run;
  BoundCheckOptions opt;
  opt.kernel = kernel_options(run);
  opt.ode_tol = run.tol;
  Report rep;
  rep.checks.push_back(bound_suite(cfg.model, run.bound_L, run.bound_n, run.energy, opt));
  auto os = open_output(fs::path(run.out) / "bound.csv");
  write_csv_header(os, "bound-check", cfg.hash, {"L", "n", "E", "lhs", "rhs", "constant"});
  for (const auto& row : rep.checks.back().metrics["rows"]) {
    os << run.bound_L << ',' << row["n"].get<int>() << ',' << exact_repr(run.energy) << ','
       << exact_repr(row["lhs"].get<double>()) << ',' << exact_repr(row["rhs"].get<double>()) << ','
       << exact_repr(row["constant"].get<double>()) << '\n';
  }
  return rep;
}

Report run_large_coupling(const ScenarioConfig& cfg) {
  const auto& run = cfg.run;
  const auto cell = make_site_cell(cfg.model, run.cells.front(), run.energy, run.tol);
  Report rep;
  rep.checks.push_back(large_coupling_suite(cell, run.lambdas, run.beta_count, run.seed));
  auto os = open_output(fs::path(run.out) / "large_coupling.csv");
  write_csv_header(os, "large-coupling", cfg.hash, {"beta", "lambda", "lnR"});
  for (const auto& s : rep.checks.back().metrics["samples"]) {
    const auto lnR = s["lnR"].get<std::vector<double>>();
    for (std::size_t i = 0; i < lnR.size(); ++i) {
      os << exact_repr(s["beta"].get<double>()) << ',' << exact_repr(run.lambdas[i]) << ',' << exact_repr(lnR[i]) << '\n';
    }
  }
  return rep;
}

// Smooth background, small smooth bump, couplings from the config: model
// validation and the contraction gamma < 1 are the checks; eigenfunction
// profiles and the Monte Carlo decay fit are reported alongside. At small C1
// norm the localization length can exceed the box, so the fit is not a check.
Report run_colding_deift(const ScenarioConfig& cfg) {
  const auto& run = cfg.run;
  const auto spec = make_model(cosine_background(run.demo_background), bump_site(run.demo_site), cfg.model.coupling,
                               cfg.model.e_max);
  const double c1_norm = run.demo_site * (1.0 + std::numbers::pi);
  Report rep;

  const auto validation = validate_model(spec);
  SuiteResult valid;
  valid.name = "demo model validation";
  valid.passed = validation.all_passed();
  valid.summary = "C1 norm of f " + detail::fixed(c1_norm, 4) + ", " + std::to_string(validation.checks.size()) +
                  " model checks" + (valid.passed ? "" : " with failures");
  valid.metrics = {{"c1_norm", c1_norm}};
  rep.checks.push_back(valid);

  const auto rate = operator_bound_rate(spec, run.cells, window_energies(cfg), kernel_options(run), run.tol);
  SuiteResult contraction;
  contraction.name = "contraction";
  contraction.passed = rate.defined;
  contraction.summary = "gamma " + detail::fixed(rate.gamma, 6) +
                        (rate.defined ? ", eta_op " + detail::sci(rate.eta_op) : std::string(", eta_op undefined"));
  contraction.metrics = rate_to_json(rate);
  rep.checks.push_back(contraction);

  const auto omega = box_couplings(run.L, sample_couplings(spec.coupling, static_cast<std::size_t>(2 * run.L), run.seed));
  SpectralOptions so;
  so.ode_tol = run.tol;
  const auto pairs = find_eigenvalues_in_window(spec, omega, run.L, so, true);
  auto os = open_output(fs::path(run.out) / "profiles.csv");
  write_csv_header(os, "localization-profiles", cfg.hash, {"k", "energy", "cell", "local_norm", "log_local_norm"});
  for (const auto& p : pairs) {
    for (int x = -run.L + 1; x <= run.L; ++x) {
      const double v = local_norm(p, x, run.L);
      os << p.index_k << ',' << exact_repr(p.energy) << ',' << x << ',' << exact_repr(v) << ','
         << (v > 0.0 ? exact_repr(std::log(v)) : std::string("nan")) << '\n';
    }
  }

  CorrelatorOptions copt;
  copt.spectral.ode_tol = run.tol;
  const auto series = estimate_series(spec, run.L, run.distances, run.samples, run.seed, copt);
  write_series(cfg, series, "series.csv");
  json fit_json;
  try {
    const auto fit = decay_fit(series, run.min_distance);
    fit_json = fit_to_json(fit);
    std::printf("info  Monte Carlo fit: eta %s +- %s, R^2 %s\n", detail::fixed(fit.eta, 4).c_str(),
                detail::fixed(fit.eta_std_error, 4).c_str(), detail::fixed(fit.r_squared, 4).c_str());
  } catch (const PreconditionError& e) {
    fit_json = {{"error", e.what()}};
    std::printf("info  Monte Carlo fit impossible: %s\n", e.what());
  }
  rep.summary = {{"background_amplitude", run.demo_background},
                 {"site_amplitude", run.demo_site},
                 {"c1_norm", c1_norm},
                 {"eigenvalues_in_window", pairs.size()},
                 {"series", series_to_json(series)},
                 {"fit", fit_json}};
  return rep;
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, Report (*)(const ScenarioConfig&)> scenarios{
      {"identities", run_identities},        {"spectrum", run_spectrum},
      {"correlator-decay", run_correlator_decay}, {"operator-norm", run_operator_norm},
      {"bound-check", run_bound_check},      {"large-coupling", run_large_coupling},
      {"colding-deift-demo", run_colding_deift}};

  CLI::App app{"Kunz-Souillard numerical laboratory"};
  std::string scenario, config;
  RunOverrides ov;
  std::size_t samples = 0, grid = 0;
  std::uint64_t seed = 0;
  std::string out;
  double tol = 0.0;
  std::vector<std::string> names;
  for (const auto& [k, v] : scenarios) names.push_back(k);
  app.add_option("scenario", scenario, "scenario to run")->required()->check(CLI::IsMember(names));
  app.add_option("--config", config, "JSON config file")->required();
  auto* o_samples = app.add_option("--samples", samples, "disorder samples");
  auto* o_seed = app.add_option("--seed", seed, "master seed");
  auto* o_out = app.add_option("--out", out, "output directory");
  auto* o_grid = app.add_option("--grid", grid, "Nystrom nodes on the phase torus");
  auto* o_tol = app.add_option("--tol", tol, "integrator tolerance");
  CLI11_PARSE(app, argc, argv);
  if (*o_samples) ov.samples = samples;
  if (*o_seed) ov.seed = seed;
  if (*o_out) ov.out = out;
  if (*o_grid) ov.grid = grid;
  if (*o_tol) ov.tol = tol;

  try {
    const auto cfg = load_config(config, ov);
    const detail::Stopwatch sw;
    const auto rep = scenarios.at(scenario)(cfg);
    write_summary(cfg, scenario, rep);
    bool ok = true;
    for (const auto& c : rep.checks) {
      std::printf("%s  %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.summary.c_str());
      ok = ok && c.passed;
    }
    std::printf("config %s, outputs in %s, %.1f s\n", cfg.hash.c_str(), cfg.run.out.c_str(), sw.seconds());
    return ok ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error in scenario '%s': %s\n", scenario.c_str(), e.what());
    return 2;
  }
}
