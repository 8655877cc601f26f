// Problem instances: background potential, single-site bump, coupling
// density, energy window and the phase-winding bound N.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kslab/core/errors.hpp"
#include "kslab/core/function.hpp"
#include "kslab/core/quadrature.hpp"

namespace kslab {

/// Deterministic double in [0, 1) from a 64-bit engine (53 random bits).
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// The deterministic background W0 on the real line.
struct BackgroundPotential {
  PiecewiseFunction fn;
  double sup_norm = 0.0;

  double operator()(double x) const { return fn(x); }

  /// Unit-cell function of site i: y -> W0(y + i) for y in [-1, 0], i.e. the
  /// background seen on the cell [i-1, i].
  PiecewiseFunction cell(int i) const { return translate(fn, static_cast<double>(i)); }
};

inline BackgroundPotential zero_background() { return {zero_function(), 0.0}; }

inline BackgroundPotential constant_background(double c) { return {constant_function(c), std::abs(c)}; }

/// a * cos(2 pi x / period + phase).
inline BackgroundPotential cosine_background(double amplitude, double period = 1.0, double phase = 0.0) {
  if (!(period > 0.0)) throw PreconditionError("cosine background: period must be positive");
  const double k = 2.0 * std::numbers::pi / period;
  PiecewiseFunction fn{[=](double x) { return amplitude * std::cos(k * x + phase); },
                       {},
                       "cos(" + exact_repr(amplitude) + "," + exact_repr(period) + "," + exact_repr(phase) + ")"};
  return {std::move(fn), std::abs(amplitude)};
}

/// Piecewise-linear tabulation, zero outside the tabulated range.
inline BackgroundPotential piecewise_linear_background(std::vector<double> xs, std::vector<double> ys) {
  double sup = 0.0;
  for (double y : ys) sup = std::max(sup, std::abs(y));
  return {piecewise_linear(std::move(xs), std::move(ys)), sup};
}

/// The single-site potential f, supported in [-1, 0], with the constants of
/// the lower/upper bars c*chi_I <= f <= C*chi_[-1,0] and the positivity
/// interval [a, b].
struct SingleSite {
  PiecewiseFunction fn;
  double lower_c = 0.0;
  double lower_lo = -1.0, lower_hi = 0.0;  // I
  double upper_c = 0.0;                    // C
  double pos_a = -1.0, pos_b = 0.0;        // [a, b]
  double sup_norm = 0.0;

  double operator()(double x) const { return fn(x); }
};

inline SingleSite indicator_site(double height = 1.0) {
  SingleSite s;
  s.fn = indicator_function(-1.0, 0.0, height);
  s.lower_c = s.upper_c = s.sup_norm = height;
  return s;
}

/// amplitude * sin^2(pi x) on [-1, 0]; smooth, vanishing at the cell ends.
inline SingleSite bump_site(double amplitude = 1.0) {
  SingleSite s;
  s.fn = {[amplitude](double x) {
            if (x < -1.0 || x > 0.0) return 0.0;
            const double v = std::sin(std::numbers::pi * x);
            return amplitude * v * v;
          },
          {-1.0, 0.0},
          "bump(" + exact_repr(amplitude) + ")"};
  s.lower_c = 0.5 * amplitude;
  s.lower_lo = -0.75;
  s.lower_hi = -0.25;
  s.upper_c = amplitude;
  s.sup_norm = amplitude;
  return s;
}

/// Piecewise-linear f on [-1, 0] with declared bar constants.
inline SingleSite piecewise_linear_site(std::vector<double> xs, std::vector<double> ys, double c, double i_lo,
                                        double i_hi, double C, double a, double b) {
  SingleSite s;
  double sup = 0.0;
  for (double y : ys) sup = std::max(sup, std::abs(y));
  s.fn = piecewise_linear(std::move(xs), std::move(ys));
  s.lower_c = c;
  s.lower_lo = i_lo;
  s.lower_hi = i_hi;
  s.upper_c = C;
  s.pos_a = a;
  s.pos_b = b;
  s.sup_norm = sup;
  return s;
}

/// Probability density r of the couplings, supported in [-M, M].
///
/// Besides point values it carries tables of the distribution function and
/// of its antiderivative on 2^14 + 1 uniform nodes, used for inverse-CDF
/// sampling and for exact cell averages of r along linear paths.
class CouplingDensity {
 public:
  static constexpr std::size_t kTableIntervals = 1u << 14;

  CouplingDensity() = default;

  CouplingDensity(PiecewiseFunction density, double M, std::string name, bool normalize = false)
      : raw_(std::move(density)), M_(M), name_(std::move(name)) {
    if (!(M > 0.0) || !std::isfinite(M)) throw PreconditionError("coupling density: M must be positive and finite");
    auto cuts = raw_.breakpoints_in(-M, M);
    scale_ = 1.0;
    if (normalize) {
      const double z = integrate_pieces(raw_.eval, -M, M, cuts, 20, 16);
      if (!(z > 0.0)) throw PreconditionError("coupling density: integral must be positive");
      scale_ = 1.0 / z;
    }
    build_tables();
  }

  const std::string& name() const { return name_; }
  std::string descriptor() const { return name_ + "|" + raw_.descriptor + "|M=" + exact_repr(M_); }
  double support_bound() const { return M_; }
  const std::vector<double>& breakpoints() const { return raw_.breakpoints; }

  double pdf(double x) const {
    if (x < -M_ || x > M_) return 0.0;
    return scale_ * raw_(x);
  }

  /// Piecewise-linear interpolant of the node table.
  double table_pdf(double x) const {
    if (x <= tables_->x0 || x >= table_end()) return 0.0;
    const auto [k, t] = locate(x);
    return t->v[k] + (x - t->x0 - t->dx * static_cast<double>(k)) / t->dx * (t->v[k + 1] - t->v[k]);
  }

  double cdf(double x) const {
    if (x <= tables_->x0) return 0.0;
    if (x >= table_end()) return 1.0;
    const auto [k, t] = locate(x);
    const double s = x - t->x0 - t->dx * static_cast<double>(k);
    return t->c[k] + t->v[k] * s + (t->v[k + 1] - t->v[k]) * s * s / (2.0 * t->dx);
  }

  /// S(x) = integral of the distribution function from the table start to x.
  double second_antiderivative(double x) const {
    if (x <= tables_->x0) return 0.0;
    if (x >= table_end()) return tables_->s.back() + (x - table_end());
    const auto [k, t] = locate(x);
    const double s = x - t->x0 - t->dx * static_cast<double>(k);
    return t->s[k] + t->c[k] * s + t->v[k] * s * s / 2.0 + (t->v[k + 1] - t->v[k]) * s * s * s / (6.0 * t->dx);
  }

  /// Mean of r over [center - w/2, center + w/2].
  double average_1d(double center, double w) const {
    w = std::abs(w);
    if (w < 1e-9) return table_pdf(center);
    return (cdf(center + 0.5 * w) - cdf(center - 0.5 * w)) / w;
  }

  /// Mean of r(center + s*w1 + t*w2) over the unit square s, t in [-1/2, 1/2].
  double average_2d(double center, double w1, double w2) const {
    w1 = std::abs(w1);
    w2 = std::abs(w2);
    const double lo = std::min(w1, w2), hi = std::max(w1, w2);
    if (lo < 1e-6 * std::max(1.0, M_)) return average_1d(center, hi);
    const double a = 0.5 * w1, b = 0.5 * w2;
    const double num = second_antiderivative(center + a + b) - second_antiderivative(center + a - b) -
                       second_antiderivative(center - a + b) + second_antiderivative(center - a - b);
    return num / (w1 * w2);
  }

  /// Inverse-CDF draw with linear interpolation of the tabulated CDF.
  double sample(std::mt19937_64& rng) const {
    const double u = uniform01(rng);
    const auto& c = tables_->c;
    auto it = std::upper_bound(c.begin(), c.end(), u);
    std::size_t k = static_cast<std::size_t>(it - c.begin());
    if (k == 0) return -M_;
    if (k >= c.size()) return M_;
    --k;
    const double dc = c[k + 1] - c[k];
    const double frac = dc > 0.0 ? (u - c[k]) / dc : 0.0;
    return std::clamp(tables_->x0 + tables_->dx * (static_cast<double>(k) + frac), -M_, M_);
  }

  /// Integral of r over [-M, M] by quadrature of the point values.
  double normalization() const { return integrate_pieces([this](double x) { return pdf(x); }, -M_, M_, cuts(), 20, 16); }

  double mean() const {
    return integrate_pieces([this](double x) { return x * pdf(x); }, -M_, M_, cuts(), 20, 16);
  }

  /// Smallest interval containing every table node with positive density.
  std::pair<double, double> positive_range() const { return {tables_->pos_lo, tables_->pos_hi}; }

 private:
  struct Tables {
    double x0 = 0.0, dx = 0.0;
    std::vector<double> v, c, s;
    double pos_lo = 0.0, pos_hi = 0.0;
  };

  std::vector<double> cuts() const { return raw_.breakpoints_in(-M_, M_); }
  double table_end() const { return tables_->x0 + tables_->dx * static_cast<double>(kTableIntervals); }

  std::pair<std::size_t, const Tables*> locate(double x) const {
    const Tables* t = tables_.get();
    const double pos = (x - t->x0) / t->dx;
    std::size_t k = static_cast<std::size_t>(std::max(0.0, std::floor(pos)));
    k = std::min(k, kTableIntervals - 1);
    return {k, t};
  }

  void build_tables() {
    auto t = std::make_shared<Tables>();
    const std::size_t n = kTableIntervals;
    // One spare interval beyond each end of [-M, M], so that a jump of r at
    // +-M keeps its full mass in the averaged node values.
    t->dx = 2.0 * M_ / static_cast<double>(n - 2);
    t->x0 = -M_ - t->dx;
    t->v.resize(n + 1);
    // Node value = mean of r over the node's dual cell; a jump on a node
    // gets the average of its one-sided limits.
    const auto bps = raw_.breakpoints;
    for (std::size_t k = 0; k <= n; ++k) {
      const double x = t->x0 + t->dx * static_cast<double>(k);
      const double a = x - 0.5 * t->dx, b = x + 0.5 * t->dx;
      t->v[k] = integrate_pieces([this](double y) { return pdf(y); }, a, b, bps, 3, 1) / t->dx;
    }
    t->c.assign(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) t->c[k + 1] = t->c[k] + 0.5 * t->dx * (t->v[k] + t->v[k + 1]);
    const double z = t->c[n];
    if (!(z > 0.0)) throw PreconditionError("coupling density: tabulated mass is zero");
    for (auto& v : t->v) v /= z;
    for (auto& c : t->c) c /= z;
    t->c[n] = 1.0;
    t->s.assign(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      t->s[k + 1] = t->s[k] + t->c[k] * t->dx + t->v[k] * t->dx * t->dx / 2.0 +
                    (t->v[k + 1] - t->v[k]) * t->dx * t->dx / 6.0;
    }
    std::size_t first = n + 1, last = 0;
    for (std::size_t k = 0; k <= n; ++k) {
      if (t->v[k] > 0.0) {
        first = std::min(first, k);
        last = k;
      }
    }
    t->pos_lo = t->x0 + t->dx * static_cast<double>(first == n + 1 ? 0 : first);
    t->pos_hi = t->x0 + t->dx * static_cast<double>(last);
    tables_ = std::move(t);
  }

  PiecewiseFunction raw_;
  double M_ = 1.0;
  double scale_ = 1.0;
  std::string name_;
  std::shared_ptr<const Tables> tables_;
};

/// Uniform density on [lo, hi]; M defaults to max(|lo|, |hi|).
inline CouplingDensity uniform_density(double lo = 0.0, double hi = 1.0, std::optional<double> M = {}) {
  if (!(hi > lo)) throw PreconditionError("uniform density: need lo < hi");
  const double h = 1.0 / (hi - lo);
  PiecewiseFunction fn{[=](double x) { return (x >= lo && x <= hi) ? h : 0.0; },
                       {lo, hi},
                       "uniform(" + exact_repr(lo) + "," + exact_repr(hi) + ")"};
  return CouplingDensity(std::move(fn), M.value_or(std::max(std::abs(lo), std::abs(hi))), "uniform");
}

/// (1 + cos(pi (x - c) / w)) / (2 w) on [c - w, c + w].
inline CouplingDensity raised_cosine_density(double center = 0.0, double half_width = 1.0,
                                             std::optional<double> M = {}) {
  if (!(half_width > 0.0)) throw PreconditionError("raised cosine density: half width must be positive");
  const double c = center, w = half_width;
  PiecewiseFunction fn{[=](double x) {
                         const double t = (x - c) / w;
                         if (t < -1.0 || t > 1.0) return 0.0;
                         return (1.0 + std::cos(std::numbers::pi * t)) / (2.0 * w);
                       },
                       {c - w, c + w},
                       "raised_cosine(" + exact_repr(c) + "," + exact_repr(w) + ")"};
  return CouplingDensity(std::move(fn), M.value_or(std::max(std::abs(c - w), std::abs(c + w))), "raised_cosine");
}

/// Piecewise-linear tabulation, normalized to unit mass.
inline CouplingDensity piecewise_linear_density(std::vector<double> xs, std::vector<double> ys,
                                                std::optional<double> M = {}) {
  for (double y : ys) {
    if (y < 0.0) throw PreconditionError("piecewise-linear density: values must be nonnegative");
  }
  const double m = M.value_or(std::max(std::abs(xs.front()), std::abs(xs.back())));
  return CouplingDensity(piecewise_linear(std::move(xs), std::move(ys)), m, "piecewise_linear", true);
}

/// Minimal N >= 1 with 2 + sup_W0 + M sup_f + e_max < N pi.
inline int compute_phase_bound(double sup_W0, double M, double sup_f, double e_max) {
  for (double v : {sup_W0, M, sup_f, e_max}) {
    if (!std::isfinite(v)) throw PreconditionError("compute_phase_bound: non-finite input");
    if (v < 0.0) throw PreconditionError("compute_phase_bound: negative input");
  }
  const double s = 2.0 + sup_W0 + M * sup_f + e_max;
  int n = static_cast<int>(std::floor(s / std::numbers::pi)) + 1;
  while (n > 1 && s < (n - 1) * std::numbers::pi) --n;
  while (!(s < n * std::numbers::pi)) ++n;
  return n;
}

/// A full problem instance.
struct ModelSpec {
  BackgroundPotential background;
  SingleSite single_site;
  CouplingDensity coupling;
  double e_max = 1.0;
  int phase_bound_N = 1;

  double torus_length() const { return 2.0 * std::numbers::pi * phase_bound_N; }
};

inline ModelSpec make_model(BackgroundPotential W0, SingleSite f, CouplingDensity r, double e_max) {
  if (!(e_max > 0.0) || !std::isfinite(e_max)) throw PreconditionError("make_model: e_max must be positive");
  ModelSpec spec{std::move(W0), std::move(f), std::move(r), e_max, 1};
  spec.phase_bound_N = compute_phase_bound(spec.background.sup_norm, spec.coupling.support_bound(),
                                           spec.single_site.sup_norm, e_max);
  return spec;
}

/// W0 = 0, f = indicator of [-1, 0], r uniform on [0, 1].
inline ModelSpec reference_model(double e_max = 3.0) {
  return make_model(zero_background(), indicator_site(), uniform_density(0.0, 1.0), e_max);
}

struct ValidationCheck {
  std::string name;
  bool passed = true;
  std::optional<double> witness;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

struct ValidationOptions {
  std::size_t samples = 10000;
  double background_range = 10.0;  // sup-norm spot check on [-range, range]
  double slack = 1e-12;
};

/// Checks the declared model invariants on sample grids. Failures are
/// reported with the first offending sample point; nothing is thrown.
inline ValidationReport validate_model(const ModelSpec& spec, const ValidationOptions& opt = {}) {
  ValidationReport rep;
  const std::size_t n = std::max<std::size_t>(opt.samples, 2);
  auto grid = [n](double a, double b, std::size_t k) {
    return a + (b - a) * (static_cast<double>(k) + 0.5) / static_cast<double>(n);
  };
  auto add = [&rep](std::string name, std::optional<double> witness, std::string detail) {
    rep.checks.push_back({std::move(name), !witness.has_value(), witness, std::move(detail)});
  };

  {
    std::optional<double> w;
    const double R = opt.background_range;
    for (std::size_t k = 0; k < n && !w; ++k) {
      const double x = grid(-R, R, k);
      if (std::abs(spec.background(x)) > spec.background.sup_norm + opt.slack) w = x;
    }
    add("background_sup_norm", w, "|W0(x)| <= declared sup norm");
  }

  const auto& f = spec.single_site;
  {
    std::optional<double> w;
    for (std::size_t k = 0; k < n && !w; ++k) {
      const double x = grid(-3.0, 2.0, k);
      const bool in_cell = x >= -1.0 && x <= 0.0;
      const bool in_ab = x >= f.pos_a && x <= f.pos_b;
      if ((!in_cell || !in_ab) && f(x) != 0.0) w = x;
    }
    add("single_site_support", w, "f = 0 outside [-1, 0] and outside [a, b]");
  }
  {
    std::optional<double> w;
    for (std::size_t k = 0; k < n && !w; ++k) {
      const double x = grid(-1.0, 0.0, k);
      const double v = f(x);
      const double lower = (x >= f.lower_lo && x <= f.lower_hi) ? f.lower_c : 0.0;
      if (v < lower - opt.slack || v > f.upper_c + opt.slack) w = x;
    }
    add("single_site_bars", w, "c chi_I <= f <= C chi_[-1,0]");
  }
  {
    std::optional<double> w;
    for (std::size_t k = 0; k < n && !w; ++k) {
      const double x = grid(f.pos_a, f.pos_b, k);
      if (!(f(x) > 0.0)) w = x;
    }
    add("single_site_positivity", w, "f > 0 on [a, b]");
  }
  {
    std::optional<double> w;
    for (std::size_t k = 0; k < n && !w; ++k) {
      const double x = grid(-1.0, 0.0, k);
      if (std::abs(f(x)) > f.sup_norm + opt.slack) w = x;
    }
    add("single_site_sup_norm", w, "|f| <= declared sup norm");
  }

  const auto& r = spec.coupling;
  const double M = r.support_bound();
  {
    const double z = r.normalization();
    std::ostringstream d;
    d.precision(17);
    d << "integral of r = " << z;
    add("density_normalization", std::abs(z - 1.0) <= 1e-8 ? std::nullopt : std::optional<double>(z), d.str());
  }
  {
    std::optional<double> w;
    for (std::size_t k = 0; k < n && !w; ++k) {
      const double x = grid(-3.0 * M, 3.0 * M, k);
      if (std::abs(x) > M && r.pdf(x) != 0.0) w = x;
      if (r.pdf(x) < 0.0) w = x;
    }
    add("density_support", w, "r >= 0 and r = 0 outside [-M, M]");
  }
  {
    const int N = compute_phase_bound(spec.background.sup_norm, M, f.sup_norm, spec.e_max);
    const double s = 2.0 + spec.background.sup_norm + M * f.sup_norm + spec.e_max;
    const bool ok = s < spec.phase_bound_N * std::numbers::pi && spec.phase_bound_N == N;
    add("phase_bound", ok ? std::nullopt : std::optional<double>(spec.phase_bound_N),
        "N minimal with 2 + |W0| + M |f| + E_max < N pi (minimal N = " + std::to_string(N) + ")");
  }
  return rep;
}

/// Couplings omega_n for n = first_index, ..., first_index + size - 1; the
/// site n carries the bump on the cell [n - 1, n].
struct Couplings {
  int first_index = 0;
  std::vector<double> values;

  int last_index() const { return first_index + static_cast<int>(values.size()) - 1; }
  double at(int n) const {
    if (n < first_index || n > last_index()) throw PreconditionError("coupling index out of range");
    return values[static_cast<std::size_t>(n - first_index)];
  }
  double left_end() const { return first_index - 1.0; }
  double right_end() const { return static_cast<double>(last_index()); }
};

/// Couplings of the box [-L, L]: sites -L+1, ..., L.
inline Couplings box_couplings(int L, std::vector<double> values) {
  if (L < 1 || values.size() != static_cast<std::size_t>(2 * L)) {
    throw PreconditionError("box couplings: need exactly 2L values for L >= 1");
  }
  return {-L + 1, std::move(values)};
}

/// count i.i.d. draws from r, deterministic in the seed.
inline std::vector<double> sample_couplings(const CouplingDensity& coupling, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw PreconditionError("sample_couplings: count must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<double> out(count);
  for (auto& v : out) v = coupling.sample(rng);
  return out;
}

/// Site whose cell (n-1, n] contains x, clamped into the covered range.
inline int site_of(const Couplings& omega, double x) {
  if (!(x >= omega.left_end() && x <= omega.right_end())) {
    std::ostringstream msg;
    msg << "x = " << x << " lies outside the cells covered by the couplings [" << omega.left_end() << ", "
        << omega.right_end() << "]";
    throw PreconditionError(msg.str());
  }
  return std::max(omega.first_index, static_cast<int>(std::ceil(x)));
}

/// W0(x) + sum_n omega_n f(x - n).
inline double evaluate_full_potential(const ModelSpec& spec, const Couplings& omega, double x) {
  const int n = site_of(omega, x);
  return spec.background(x) + omega.at(n) * spec.single_site(x - n);
}

/// The full potential as a piecewise function on the covered range, with
/// breakpoints at every cell boundary and at the translated breakpoints of
/// W0 and f.
inline PiecewiseFunction full_potential(const ModelSpec& spec, const Couplings& omega) {
  const double a = omega.left_end(), b = omega.right_end();
  std::vector<double> bps;
  for (int n = omega.first_index - 1; n <= omega.last_index(); ++n) bps.push_back(n);
  for (double p : spec.background.fn.breakpoints) {
    if (p > a && p < b) bps.push_back(p);
  }
  for (int n = omega.first_index; n <= omega.last_index(); ++n) {
    for (double p : spec.single_site.fn.breakpoints) {
      const double q = p + n;
      if (q > a && q < b) bps.push_back(q);
    }
  }
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  auto W0 = spec.background.fn.eval;
  auto f = spec.single_site.fn.eval;
  const int first = omega.first_index, last = omega.last_index();
  auto vals = std::make_shared<const std::vector<double>>(omega.values);
  std::string desc = "full(" + spec.background.fn.descriptor + "," + spec.single_site.fn.descriptor;
  for (double v : omega.values) desc += "," + exact_repr(v);
  desc += ")";
  return {[=](double x) {
            const int n = std::clamp(static_cast<int>(std::ceil(x)), first, last);
            return W0(x) + (*vals)[static_cast<std::size_t>(n - first)] * f(x - n);
          },
          std::move(bps), std::move(desc)};
}

}  // namespace kslab
