#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "kslab/core/ode.hpp"
#include "kslab/core/quadrature.hpp"

using namespace kslab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("exponential decay reaches tolerance") {
  auto rhs = [](double, const State<1>& y, State<1>& d) { d[0] = -y[0]; };
  const auto y = integrate_dopri5<1>(rhs, 0.0, 5.0, State<1>{1.0}, {});
  CHECK_THAT(y[0], WithinAbs(std::exp(-5.0), 1e-9));
}

TEST_CASE("dense output follows the oscillator between steps") {
  auto rhs = [](double, const State<2>& y, State<2>& d) {
    d[0] = y[1];
    d[1] = -y[0];
  };
  std::vector<double> xs;
  for (int i = 0; i <= 200; ++i) xs.push_back(0.05 * i);
  double worst = 0.0;
  integrate_dopri5<2>(rhs, 0.0, 10.0, State<2>{0.0, 1.0}, {}, xs, [&](double x, const State<2>& y) {
    worst = std::max(worst, std::abs(y[0] - std::sin(x)));
  });
  CHECK(worst < 1e-8);
}

TEST_CASE("breakpoints separate the one-sided values of a jump") {
  int wrong_side = 0;
  auto rhs = [&](double x, const State<1>&, State<1>& d) {
    if (x == 1.0) ++wrong_side;
    d[0] = x < 1.0 ? 1.0 : -1.0;
  };
  const std::vector<double> bp{1.0};
  const auto y = integrate_dopri5<1>(rhs, 0.0, 2.0, State<1>{0.0}, bp);
  CHECK_THAT(y[0], WithinAbs(0.0, 1e-12));
  CHECK(wrong_side == 0);
}

TEST_CASE("backward integration") {
  auto rhs = [](double, const State<1>& y, State<1>& d) { d[0] = y[0]; };
  std::vector<double> outs{0.0, -0.5, -1.0};
  std::vector<double> seen;
  const auto y = integrate_dopri5<1>(rhs, 0.0, -1.0, State<1>{1.0}, {}, outs,
                                     [&](double, const State<1>& s) { seen.push_back(s[0]); });
  CHECK_THAT(y[0], WithinRel(std::exp(-1.0), 1e-9));
  REQUIRE(seen.size() == 3);
  CHECK_THAT(seen[1], WithinRel(std::exp(-0.5), 1e-9));
}

TEST_CASE("blow-up is reported with its location") {
  auto rhs = [](double, const State<1>& y, State<1>& d) { d[0] = y[0] * y[0]; };
  try {
    integrate_dopri5<1>(rhs, 0.0, 2.0, State<1>{1.0}, {});
    FAIL("expected an integration error");
  } catch (const IntegrationError& e) {
    CHECK(e.location() > 0.9);
    CHECK(e.location() < 1.0 + 1e-6);
  }
}

TEST_CASE("Gauss-Legendre integrates polynomials exactly") {
  const auto r = gauss_legendre(15, 0.0, 2.0);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], 20);
  CHECK_THAT(s, WithinRel(std::pow(2.0, 21) / 21.0, 1e-13));
}

TEST_CASE("Simpson and pairwise summation") {
  std::vector<double> y;
  for (int i = 0; i <= 100; ++i) y.push_back(std::pow(0.01 * i, 3));
  CHECK_THAT(simpson(y, 0.01), WithinAbs(0.25, 1e-14));
  std::vector<double> ones(1000, 0.1);
  CHECK_THAT(pairwise_sum(ones), WithinAbs(100.0, 1e-12));
}
