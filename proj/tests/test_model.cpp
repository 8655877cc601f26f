#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "kslab/model.hpp"

using namespace kslab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("indicator model passes validation") {
  const auto spec = reference_model(3.0);
  const auto rep = validate_model(spec);
  for (const auto& c : rep.checks) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.passed);
  }
  CHECK(rep.all_passed());
  CHECK(spec.phase_bound_N == 2);
}

TEST_CASE("sign violation of f is reported with a witness") {
  auto spec = reference_model(1.0);
  spec.single_site.fn =
      linear_combination(1.0, indicator_function(-1.0, 0.0), -2.0, indicator_function(-0.5, -0.4));
  const auto rep = validate_model(spec);
  const auto* pos = rep.find("single_site_positivity");
  REQUIRE(pos != nullptr);
  CHECK_FALSE(pos->passed);
  REQUIRE(pos->witness.has_value());
  CHECK(*pos->witness >= -0.5);
  CHECK(*pos->witness <= -0.4);
  CHECK_FALSE(rep.all_passed());
}

TEST_CASE("uniform density integrates to one") {
  const auto r = uniform_density(0.0, 1.0);
  CHECK(r.support_bound() == 1.0);
  CHECK_THAT(r.normalization(), WithinAbs(1.0, 1e-12));
  const auto spec = reference_model();
  CHECK(validate_model(spec).find("density_normalization")->passed);
  CHECK_THAT(raised_cosine_density().normalization(), WithinAbs(1.0, 1e-10));
}

TEST_CASE("validation is pure") {
  const auto spec = reference_model();
  const auto a = validate_model(spec), b = validate_model(spec);
  REQUIRE(a.checks.size() == b.checks.size());
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    CHECK(a.checks[i].passed == b.checks[i].passed);
    CHECK(a.checks[i].detail == b.checks[i].detail);
  }
}

TEST_CASE("phase bound examples") {
  CHECK(compute_phase_bound(0, 1, 1, 1) == 2);
  CHECK(compute_phase_bound(0, 0, 0, 0) == 1);
  CHECK(compute_phase_bound(3, 2, 1.5, 2) == 4);
  // 2 + x = 2 pi exactly needs N = 3 by strictness.
  CHECK(compute_phase_bound(2 * std::numbers::pi - 2, 0, 0, 0) == 3);
  CHECK_THROWS_AS(compute_phase_bound(std::nan(""), 1, 1, 1), PreconditionError);
  CHECK_THROWS_AS(compute_phase_bound(std::numeric_limits<double>::infinity(), 1, 1, 1), PreconditionError);
}

TEST_CASE("phase bound is monotone in each argument") {
  const double base[4] = {0.3, 1.2, 0.7, 2.1};
  for (int arg = 0; arg < 4; ++arg) {
    int prev = 0;
    for (int k = 0; k < 60; ++k) {
      double a[4] = {base[0], base[1], base[2], base[3]};
      a[arg] += 0.25 * k;
      const int n = compute_phase_bound(a[0], a[1], a[2], a[3]);
      CHECK(n >= prev);
      prev = n;
    }
  }
}

TEST_CASE("sampling is deterministic and supported") {
  const auto r = uniform_density(0.0, 1.0);
  const auto a = sample_couplings(r, 4, 7), b = sample_couplings(r, 4, 7);
  REQUIRE(a.size() == 4);
  CHECK(a == b);
  for (double v : a) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(sample_couplings(r, 4, 8) != a);
  CHECK_THROWS_AS(sample_couplings(r, 0, 7), PreconditionError);
}

TEST_CASE("empirical mean matches the quadrature moment") {
  for (const auto& r : {uniform_density(0.0, 1.0), raised_cosine_density(0.2, 0.7),
                        piecewise_linear_density({-1.0, 0.0, 2.0}, {0.0, 1.0, 0.0})}) {
    const std::size_t n = 100000;
    const auto xs = sample_couplings(r, n, 12345);
    double m = 0.0, m2 = 0.0;
    for (double x : xs) {
      m += x;
      m2 += x * x;
    }
    m /= n;
    const double sd = std::sqrt(m2 / n - m * m);
    INFO(r.descriptor());
    CHECK(std::abs(m - r.mean()) < 5.0 * sd / std::sqrt(double(n)));
    for (double x : xs) CHECK(std::abs(x) <= r.support_bound());
  }
}

TEST_CASE("distribution tables are consistent") {
  const auto r = raised_cosine_density();
  CHECK_THAT(r.cdf(0.0), WithinAbs(0.5, 1e-9));
  CHECK_THAT(r.cdf(1.0), WithinAbs(1.0, 1e-12));
  // S(M) = int_{-M}^{M} C = M - mean for a distribution on [-M, M].
  CHECK_THAT(r.second_antiderivative(1.0), WithinAbs(1.0 - r.mean(), 1e-9));
  // Cell averages converge to the point value.
  CHECK_THAT(r.average_2d(0.3, 1e-3, 2e-3), WithinRel(r.pdf(0.3), 1e-5));
  CHECK_THAT(r.average_1d(0.3, 1e-3), WithinRel(r.pdf(0.3), 1e-5));
  // A cell straddling the edge of the uniform law sees half the mass.
  const auto u = uniform_density(0.0, 1.0);
  CHECK_THAT(u.average_1d(0.0, 0.1), WithinAbs(0.5, 1e-9));
  CHECK_THAT(u.average_2d(1.0, 0.1, 0.05), WithinAbs(0.5, 1e-9));
}

TEST_CASE("full potential evaluation") {
  auto spec = reference_model(1.0);
  const Couplings one{0, {2.0}};
  CHECK(evaluate_full_potential(spec, one, -0.5) == 2.0);
  spec.background = constant_background(1.0);
  CHECK(evaluate_full_potential(spec, one, -0.5) == 3.0);
  CHECK_THROWS_AS(evaluate_full_potential(spec, one, -1.5), PreconditionError);
  const auto q = full_potential(spec, one);
  CHECK(q(-0.5) == 3.0);
}

TEST_CASE("at most one bump is active inside each cell") {
  const auto spec = make_model(zero_background(), bump_site(1.0), uniform_density(), 1.0);
  const Couplings w{-2, {0.3, 0.7, 0.1, 0.9}};
  for (int k = 0; k < 400; ++k) {
    const double x = -3.0 + 4.0 * (k + 0.5) / 400.0;
    int active = 0;
    for (int n = w.first_index; n <= w.last_index(); ++n) active += spec.single_site(x - n) != 0.0;
    CHECK(active <= 1);
  }
}

TEST_CASE("unit-cell extraction is a pure reindexing") {
  const auto W0 = cosine_background(0.7, 2.5, 0.3);
  for (int i : {-3, 0, 2, 5}) {
    const auto g = W0.cell(i);
    for (double y : {-1.0, -0.7, -0.25, 0.0}) CHECK(g(y) == W0(y + i));
  }
}
