// Run configuration (JSON), config hashing and the CSV / JSON / binary
// writers shared by the command-line runner and the samples.
//
// Config layout:
//   {
//     "schema": 1,
//     "model": {
//       "e_max": 3.0,
//       "background":  {"type": "zero" | "constant" | "cosine" | "piecewise_linear", ...},
//       "single_site": {"type": "indicator" | "bump" | "piecewise_linear", ...},
//       "coupling":    {"type": "uniform" | "raised_cosine" | "piecewise_linear", ...}
//     },
//     "run": { ... }   // optional, see RunParameters
//   }
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "kslab/core/errors.hpp"
#include "kslab/core/function.hpp"
#include "kslab/ksop.hpp"
#include "kslab/model.hpp"

namespace kslab {

inline constexpr int kSchemaVersion = 1;

/// Parameters of the scenarios. Every field may be given under "run" in the
/// config file; command-line flags override the file.
struct RunParameters {
  std::uint64_t seed = 20240601;
  std::size_t samples = 2000;
  int L = 8;
  std::vector<int> distances{1, 2, 3, 4, 5, 6};
  int min_distance = 3;
  std::size_t grid = 400;          // Nystrom nodes on T_N
  std::size_t subdivisions = 4;    // sub-nodes per cell and direction
  double tol = 1e-10;              // integrator tolerance
  std::vector<double> energies{-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0};
  std::vector<int> cells{0};
  std::vector<double> lambdas{10.0, 100.0, 1000.0, 10000.0};
  std::size_t beta_count = 10;
  std::vector<double> epsilons{0.1, 0.01, 0.001};
  double energy = 1.0;             // fixed energy of the bound check
  int bound_L = 2;
  std::vector<int> bound_n{1, 2};
  std::size_t identity_instances = 100;
  double fd_step = 1e-4;
  std::vector<double> couplings;   // spectrum scenario: explicit omega (else sampled)
  double demo_background = 0.3;    // colding-deift-demo: cosine background amplitude
  double demo_site = 0.25;         // colding-deift-demo: bump amplitude
  std::string out = "out";
};

struct ScenarioConfig {
  ModelSpec model;
  RunParameters run;
  nlohmann::json model_json;
  std::string hash;  // 16 hex digits over model and run parameters
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing key '" + path + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const nlohmann::json& j, const std::string& name) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("key '" + name + "' has the wrong type");
  }
}

template <class T>
T number(const nlohmann::json& j, const std::string& key, const std::string& path) {
  return get_as<T>(require(j, key, path), path + key);
}

template <class T>
T number_or(const nlohmann::json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  return get_as<T>(j.at(key), path + key);
}

inline BackgroundPotential parse_background(const nlohmann::json& j) {
  const std::string p = "model.background.";
  const auto type = number<std::string>(j, "type", p);
  if (type == "zero") return zero_background();
  if (type == "constant") return constant_background(number<double>(j, "value", p));
  if (type == "cosine") {
    return cosine_background(number<double>(j, "amplitude", p), number_or<double>(j, "period", p, 1.0),
                             number_or<double>(j, "phase", p, 0.0));
  }
  if (type == "piecewise_linear") {
    return piecewise_linear_background(number<std::vector<double>>(j, "x", p), number<std::vector<double>>(j, "y", p));
  }
  throw ConfigError("unknown value '" + type + "' for key 'model.background.type'");
}

inline SingleSite parse_single_site(const nlohmann::json& j) {
  const std::string p = "model.single_site.";
  const auto type = number<std::string>(j, "type", p);
  if (type == "indicator") return indicator_site(number_or<double>(j, "height", p, 1.0));
  if (type == "bump") return bump_site(number_or<double>(j, "amplitude", p, 1.0));
  if (type == "piecewise_linear") {
    return piecewise_linear_site(number<std::vector<double>>(j, "x", p), number<std::vector<double>>(j, "y", p),
                                 number<double>(j, "lower_c", p), number<double>(j, "lower_lo", p),
                                 number<double>(j, "lower_hi", p), number<double>(j, "upper_c", p),
                                 number<double>(j, "pos_a", p), number<double>(j, "pos_b", p));
  }
  throw ConfigError("unknown value '" + type + "' for key 'model.single_site.type'");
}

inline CouplingDensity parse_coupling(const nlohmann::json& j) {
  const std::string p = "model.coupling.";
  const auto type = number<std::string>(j, "type", p);
  std::optional<double> M;
  if (j.contains("M")) M = get_as<double>(j.at("M"), p + "M");
  if (type == "uniform") return uniform_density(number_or<double>(j, "lo", p, 0.0), number_or<double>(j, "hi", p, 1.0), M);
  if (type == "raised_cosine") {
    return raised_cosine_density(number_or<double>(j, "center", p, 0.0), number_or<double>(j, "half_width", p, 1.0), M);
  }
  if (type == "piecewise_linear") {
    return piecewise_linear_density(number<std::vector<double>>(j, "x", p), number<std::vector<double>>(j, "y", p), M);
  }
  throw ConfigError("unknown value '" + type + "' for key 'model.coupling.type'");
}

inline nlohmann::json run_to_json(const RunParameters& r) {
  return {{"seed", r.seed},
          {"samples", r.samples},
          {"L", r.L},
          {"distances", r.distances},
          {"min_distance", r.min_distance},
          {"grid", r.grid},
          {"subdivisions", r.subdivisions},
          {"tol", r.tol},
          {"energies", r.energies},
          {"cells", r.cells},
          {"lambdas", r.lambdas},
          {"beta_count", r.beta_count},
          {"epsilons", r.epsilons},
          {"energy", r.energy},
          {"bound_L", r.bound_L},
          {"bound_n", r.bound_n},
          {"identity_instances", r.identity_instances},
          {"fd_step", r.fd_step},
          {"couplings", r.couplings},
          {"demo_background", r.demo_background},
          {"demo_site", r.demo_site}};
}

inline void apply_run(const nlohmann::json& j, RunParameters& r) {
  const std::string p = "run.";
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "seed") r.seed = get_as<std::uint64_t>(v, p + k);
    else if (k == "samples") r.samples = get_as<std::size_t>(v, p + k);
    else if (k == "L") r.L = get_as<int>(v, p + k);
    else if (k == "distances") r.distances = get_as<std::vector<int>>(v, p + k);
    else if (k == "min_distance") r.min_distance = get_as<int>(v, p + k);
    else if (k == "grid") r.grid = get_as<std::size_t>(v, p + k);
    else if (k == "subdivisions") r.subdivisions = get_as<std::size_t>(v, p + k);
    else if (k == "tol") r.tol = get_as<double>(v, p + k);
    else if (k == "energies") r.energies = get_as<std::vector<double>>(v, p + k);
    else if (k == "cells") r.cells = get_as<std::vector<int>>(v, p + k);
    else if (k == "lambdas") r.lambdas = get_as<std::vector<double>>(v, p + k);
    else if (k == "beta_count") r.beta_count = get_as<std::size_t>(v, p + k);
    else if (k == "epsilons") r.epsilons = get_as<std::vector<double>>(v, p + k);
    else if (k == "energy") r.energy = get_as<double>(v, p + k);
    else if (k == "bound_L") r.bound_L = get_as<int>(v, p + k);
    else if (k == "bound_n") r.bound_n = get_as<std::vector<int>>(v, p + k);
    else if (k == "identity_instances") r.identity_instances = get_as<std::size_t>(v, p + k);
    else if (k == "fd_step") r.fd_step = get_as<double>(v, p + k);
    else if (k == "couplings") r.couplings = get_as<std::vector<double>>(v, p + k);
    else if (k == "demo_background") r.demo_background = get_as<double>(v, p + k);
    else if (k == "demo_site") r.demo_site = get_as<double>(v, p + k);
    else if (k == "out") r.out = get_as<std::string>(v, p + k);
    else throw ConfigError("unknown key '" + p + k + "'");
  }
}

}  // namespace detail

/// Command-line overrides; unset fields keep the file or default value.
struct RunOverrides {
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> grid;
  std::optional<double> tol;
};

inline std::string config_hash(const nlohmann::json& model_json, const RunParameters& run) {
  const nlohmann::json all{{"schema", kSchemaVersion}, {"model", model_json}, {"run", detail::run_to_json(run)}};
  return hex16(fnv1a64(all.dump()));
}

/// Builds the scenario config: defaults, then the file, then the overrides.
inline ScenarioConfig parse_config(const nlohmann::json& j, const RunOverrides& ov = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("schema") && detail::get_as<int>(j.at("schema"), "schema") != kSchemaVersion) {
    throw ConfigError("unsupported value for key 'schema'");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "schema" && it.key() != "model" && it.key() != "run") {
      throw ConfigError("unknown key '" + it.key() + "'");
    }
  }
  const auto& m = detail::require(j, "model", "");
  const double e_max = detail::number<double>(m, "e_max", "model.");
  auto W0 = detail::parse_background(detail::require(m, "background", "model."));
  auto f = detail::parse_single_site(detail::require(m, "single_site", "model."));
  auto r = detail::parse_coupling(detail::require(m, "coupling", "model."));
  ScenarioConfig cfg{make_model(std::move(W0), std::move(f), std::move(r), e_max), {}, m, {}};
  if (j.contains("run")) detail::apply_run(j.at("run"), cfg.run);
  if (ov.samples) cfg.run.samples = *ov.samples;
  if (ov.seed) cfg.run.seed = *ov.seed;
  if (ov.out) cfg.run.out = *ov.out;
  if (ov.grid) cfg.run.grid = *ov.grid;
  if (ov.tol) cfg.run.tol = *ov.tol;
  if (cfg.run.L < 1) throw ConfigError("key 'run.L' must be positive");
  if (cfg.run.samples < 2) throw ConfigError("key 'run.samples' must be at least 2");
  if (!(cfg.run.tol > 0.0)) throw ConfigError("key 'run.tol' must be positive");
  cfg.hash = config_hash(cfg.model_json, cfg.run);
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path, const RunOverrides& ov = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, ov);
}

/// CSV header: schema and config hash comment, then the column names.
inline void write_csv_header(std::ostream& os, const std::string& kind, const std::string& hash,
                             const std::vector<std::string>& columns) {
  os << "# kslab " << kind << " schema " << kSchemaVersion << " config " << hash << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << '\n';
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os.precision(17);
  return os;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto os = open_output(path);
  os << j.dump(2) << '\n';
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

/// Binary kernel file: "KSLABK1\0", rows and cols as uint64, then row-major
/// doubles (host byte order).
inline void write_kernel_binary(const std::filesystem::path& path, const DiscreteKernel<double>& k) {
  auto os = open_output(path);
  const char magic[8] = {'K', 'S', 'L', 'A', 'B', 'K', '1', '\0'};
  os.write(magic, 8);
  const std::uint64_t rows = static_cast<std::uint64_t>(k.matrix.rows()), cols = static_cast<std::uint64_t>(k.matrix.cols());
  os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  for (Eigen::Index i = 0; i < k.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.matrix.cols(); ++j) {
      const double v = k.matrix(i, j);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

inline DiscreteKernel<double> read_kernel_binary(const std::filesystem::path& path, double length) {
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || std::string(magic, 7) != "KSLABK1" || rows != cols) throw Error("not a kernel file: '" + path.string() + "'");
  DiscreteKernel<double> k;
  std::tie(k.grid, k.weights) = midpoint_nodes(length, rows);
  k.length = length;
  k.matrix.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < k.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.matrix.cols(); ++j) in.read(reinterpret_cast<char*>(&k.matrix(i, j)), sizeof(double));
  }
  if (!in) throw Error("truncated kernel file: '" + path.string() + "'");
  return k;
}

inline void write_kernel_csv(std::ostream& os, const DiscreteKernel<double>& k, const std::string& hash) {
  write_csv_header(os, "kernel", hash, {"beta", "alpha", "value"});
  for (Eigen::Index i = 0; i < k.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.matrix.cols(); ++j) {
      os << exact_repr(k.grid[static_cast<std::size_t>(i)]) << ',' << exact_repr(k.grid[static_cast<std::size_t>(j)])
         << ',' << exact_repr(k.matrix(i, j)) << '\n';
    }
  }
}

inline nlohmann::json kernel_manifest(const CellModel& cell, const KernelOptions& opt) {
  return {{"schema", kSchemaVersion},
          {"g", cell.g.descriptor},
          {"f", cell.f.descriptor},
          {"r", cell.r.descriptor()},
          {"E", cell.E},
          {"N", cell.N},
          {"m", opt.m},
          {"subdivisions", opt.subdivisions},
          {"cell_average", opt.cell_average},
          {"search_bound", cell.search_bound},
          {"integrator_tol", cell.ode_tol}};
}

}  // namespace kslab
