#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "kslab/prufer.hpp"
#include "random_instances.hpp"

using namespace kslab;
using namespace kslab::testing;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const double pi = std::numbers::pi;
}

TEST_CASE("free rotation at E = 1") {
  const auto tr = integrate_prufer(zero_function(), 1.0, 0.0, 1.0, 0.0);
  CHECK_THAT(tr.phi_end, WithinAbs(1.0, 1e-10));
  CHECK_THAT(tr.lnR_end, WithinAbs(0.0, 1e-10));
}

TEST_CASE("linear solution at E = 0") {
  const auto tr = integrate_prufer(zero_function(), 0.0, 0.0, 1.0, 0.0);
  CHECK_THAT(tr.phi_end, WithinAbs(pi / 4, 1e-10));
  CHECK_THAT(std::exp(tr.lnR_end), WithinAbs(std::sqrt(2.0), 1e-10));
  for (double x : {0.5, 2.0, 10.0}) {
    const auto t = integrate_prufer(zero_function(), 0.0, 0.0, x, 0.0);
    CHECK_THAT(std::tan(t.phi_end), WithinRel(x, 1e-9));
  }
}

TEST_CASE("trajectory reconstructs a solution and tracks the branch") {
  std::mt19937_64 rng(3);
  const auto q = random_step_potential(rng, 0.0, 4.0, 6, -5.0, 5.0);
  const double E = 2.0;
  const auto tr = integrate_prufer(q, E, 0.0, 4.0, 0.4, 1e-10, uniform_grid(0.0, 4.0, 256));
  const auto cart = integrate_solution(q, E, 0.0, 4.0, std::sin(0.4), std::cos(0.4), 1e-10, tr.grid);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    CHECK_THAT(tr.u(i), WithinAbs(cart.trajectory.u[i], 1e-8));
    CHECK_THAT(tr.du(i), WithinAbs(cart.trajectory.du[i], 1e-8));
    const double R2 = cart.trajectory.u[i] * cart.trajectory.u[i] + cart.trajectory.du[i] * cart.trajectory.du[i];
    CHECK_THAT(std::exp(2 * tr.log_amplitude[i]), WithinRel(R2, 1e-8));
    if (i > 0) CHECK(std::abs(tr.phase[i] - tr.phase[i - 1]) < pi / 2);
  }
}

TEST_CASE("Cartesian solutions") {
  const auto a = integrate_solution(zero_function(), 0.0, -1.0, 1.0, 0.0, 1.0);
  CHECK_THAT(a.u_end, WithinAbs(2.0, 1e-10));
  CHECK_THAT(a.du_end, WithinAbs(1.0, 1e-10));
  const auto b = integrate_solution(zero_function(), pi * pi, 0.0, 1.0, 0.0, pi);
  CHECK_THAT(b.u_end, WithinAbs(0.0, 1e-9));
}

TEST_CASE("halving the tolerance leaves random endpoints in place") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    const auto q = random_step_potential(rng, 0.0, 2.0, 5, -4.0, 4.0);
    const auto a = integrate_solution(q, 0.5, 0.0, 2.0, 0.3, 1.0, 1e-10);
    const auto b = integrate_solution(q, 0.5, 0.0, 2.0, 0.3, 1.0, 0.5e-10);
    CHECK(std::abs(a.u_end - b.u_end) < 1e-9);
    CHECK(std::abs(a.du_end - b.du_end) < 1e-9);
  }
}

TEST_CASE("derivative identities: closed-form cases") {
  const auto free1 = phase_theta_derivative(zero_function(), 1.0, 0.0, 1.0, 0.7);
  CHECK(free1.analytic == Catch::Approx(1.0).epsilon(1e-12));
  CHECK_THAT(free1.numeric, WithinAbs(1.0, 1e-8));
  const auto lin = phase_theta_derivative(zero_function(), 0.0, 0.0, 1.0, 0.0);
  CHECK_THAT(lin.analytic, WithinAbs(0.5, 1e-10));

  const auto zeroV = phase_lambda_derivative(zero_function(), zero_function(), 0.3, 1.0, 0.0, 1.0, 0.2);
  CHECK(zeroV.analytic == 0.0);
  CHECK_THAT(zeroV.numeric, WithinAbs(0.0, 1e-12));
  const auto chi = indicator_function(-1.0, 0.0);
  for (double lam : {-2.0, 0.0, 3.0}) {
    const auto s = phase_lambda_derivative(zero_function(), chi, lam, 0.5, 0.0, -1.0, 1.1);
    CHECK(s.analytic > 0.0);
  }

  const auto e = phase_energy_derivative(zero_function(), 1.0, 0.0, 1.0, 0.0);
  CHECK_THAT(e.analytic, WithinAbs((1.0 - std::sin(2.0) / 2.0) / 2.0, 1e-10));
  CHECK_THAT(e.numeric, WithinAbs(0.27267564329357957, 1e-8));
}

TEST_CASE("derivative identities on random instances") {
  std::mt19937_64 rng(2024);
  double worst[3] = {0, 0, 0};
  for (int k = 0; k < 30; ++k) {
    const double a = uniform(rng, -2.0, 2.0), len = uniform(rng, 0.5, 3.0);
    const bool back = uniform01(rng) < 0.5;
    const double from = back ? a + len : a, to = back ? a : a + len;
    const auto q = random_step_potential(rng, a, a + len, 4, -3.0, 3.0);
    const auto V = random_step_potential(rng, a, a + len, 3, 0.0, 2.0);
    const double E = uniform(rng, -3.0, 3.0), th = uniform(rng, 0.0, 2 * pi), lam = uniform(rng, -2.0, 2.0);
    const auto t = phase_theta_derivative(q, E, from, to, th);
    const auto l = phase_lambda_derivative(q, V, lam, E, from, to, th);
    const auto e = phase_energy_derivative(q, E, from, to, th);
    worst[0] = std::max(worst[0], t.rel_error());
    worst[1] = std::max(worst[1], l.rel_error());
    worst[2] = std::max(worst[2], e.rel_error());
    if (!back) CHECK(e.analytic > 0.0);
  }
  INFO("worst relative errors " << worst[0] << " " << worst[1] << " " << worst[2]);
  CHECK(worst[0] < 1e-6);
  CHECK(worst[1] < 1e-6);
  CHECK(worst[2] < 1e-6);
}

TEST_CASE("Sturm comparison examples") {
  const auto z = zero_function();
  const auto same = sturm_compare(z, z, 0.5, 0.2, 0.2, 0.0, 1.0);
  CHECK_THAT(same.min_gap, WithinAbs(0.0, 1e-14));
  const auto one = constant_function(1.0);
  const auto r = sturm_compare(one, z, 0.0, 0.0, 0.0, 0.0, 1.0);
  CHECK(r.holds);
  CHECK(r.phi2.back() > r.phi1.back());
  const auto s = sturm_compare(z, z, 0.0, 0.0, 0.3, 0.0, 1.0);
  CHECK(s.min_gap > 0.0);
  CHECK_THROWS_AS(sturm_compare(z, one, 0.0, 0.0, 0.0, 0.0, 1.0), PreconditionError);
}

TEST_CASE("Gronwall sandwich, continuous dependence and L2 lower bound") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const auto q = random_step_potential(rng, -2.0, 2.0, 5, -4.0, 4.0);
    const double x = uniform(rng, -2.0, 2.0), y = uniform(rng, -2.0, 2.0);
    const auto s = gronwall_sandwich(q, 0.0, uniform(rng, -1, 1), uniform(rng, -1, 1), x, y);
    CHECK(s.lower <= s.middle * (1 + 1e-8));
    CHECK(s.middle <= s.upper * (1 + 1e-8));

    const auto q2 = linear_combination(1.0, q, 1e-2, random_step_potential(rng, -2.0, 2.0, 3, -1.0, 1.0));
    const auto d = continuous_dependence(q, q2, y, 0.3, 0.9, 0.31, 0.88, x);
    CHECK(d.lhs <= d.rhs + 1e-8);

    CHECK(l2_lower_ratio(q, -1.0, 1.0, uniform(rng, -1, 1), 1.0) > 0.0);
  }
}

TEST_CASE("phase never drops by more than pi") {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 10; ++k) {
    const auto q = random_step_potential(rng, 0.0, 3.0, 6, -2.0, 12.0);
    const auto tr = integrate_prufer(q, 0.0, 0.0, 3.0, uniform(rng, 0.0, 2 * pi), 1e-10,
                                     uniform_grid(0.0, 3.0, 128));
    for (std::size_t i = 0; i < tr.size(); ++i) {
      for (std::size_t j = i; j < tr.size(); ++j) CHECK(tr.phase[j] - tr.phase[i] > -pi);
    }
  }
}

TEST_CASE("trajectory CSV columns") {
  const auto tr = integrate_prufer(zero_function(), 1.0, 0.0, 1.0, 0.0, 1e-10, {0.0, 0.5, 1.0});
  std::ostringstream os;
  write_trajectory_csv(os, tr);
  const auto s = os.str();
  CHECK(s.find("x,phi,lnR,u,du\n") != std::string::npos);
  CHECK(std::count(s.begin(), s.end(), '\n') == 5);
}
