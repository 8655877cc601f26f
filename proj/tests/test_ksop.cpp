#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "kslab/ksop.hpp"
#include "random_instances.hpp"

using namespace kslab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double pi = std::numbers::pi;

const KernelTable& reference_table() {
  static const auto table = [] {
    const auto spec = reference_model(3.0);
    return kernel_cache().get(make_site_cell(spec, 0, 0.0), KernelOptions{});
  }();
  return *table;
}

}  // namespace

TEST_CASE("solve_lambda recovers the free flow", "[ksop][lambda]") {
  const auto spec = reference_model(3.0);
  const auto cell = make_site_cell(spec, 0, 0.0);
  const auto s = solve_lambda(0.0, pi / 4, cell);
  REQUIRE(s.exists);
  CHECK_THAT(s.lambda, WithinAbs(0.0, 1e-8));
}

TEST_CASE("solve_lambda reports phases outside the reachable window", "[ksop][lambda]") {
  const auto spec = reference_model(3.0);
  const auto cell = make_site_cell(spec, 0, 0.0);
  const auto cr = column_range(cell, pi / 4);
  const double outside = 0.5 * (cr.hi.phi + cr.lo.phi + cell.torus_length());
  const auto s = solve_lambda(outside, pi / 4, cell);
  CHECK_FALSE(s.exists);
  CHECK(s.residual > 0.0);
}

TEST_CASE("solve_lambda inverts forward integration", "[ksop][lambda]") {
  const auto spec = reference_model(3.0);
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    const double E = testing::uniform(rng, -3.0, 3.0);
    const double alpha = testing::uniform(rng, 0.0, 4 * pi);
    const double lam = testing::uniform(rng, -1.0, 1.0);
    const auto cell = make_site_cell(spec, 0, E);
    const double beta = shoot_down(cell, alpha, lam).phi;
    const auto s = solve_lambda(beta, alpha, cell);
    REQUIRE(s.exists);
    CHECK_THAT(s.lambda, WithinAbs(lam, 1e-8));
  }
}

TEST_CASE("beta is increasing in lambda", "[ksop][lambda]") {
  const auto spec = make_model(cosine_background(1.0, 1.0, 0.3), bump_site(1.0), uniform_density(), 2.0);
  const auto cell = make_site_cell(spec, 0, 0.7);
  for (double alpha : {0.1, 1.3, 2.9, 5.0}) {
    double prev = -1e300;
    for (int k = 0; k <= 40; ++k) {
      const double b = shoot_down(cell, alpha, -cell.search_bound + k * 2 * cell.search_bound / 40).phi;
      CHECK(b > prev);
      prev = b;
    }
  }
}

TEST_CASE("cell solutions obey the reciprocal scaling", "[ksop][cell]") {
  const auto spec = reference_model(3.0);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 5; ++t) {
    const double E = testing::uniform(rng, -3.0, 3.0);
    const double alpha = testing::uniform(rng, 0.0, 2 * pi);
    const auto cell = make_site_cell(spec, 0, E);
    const double beta = shoot_down(cell, alpha, testing::uniform(rng, 0.0, 1.0)).phi;
    const auto p = cell_solutions(beta, alpha, cell);
    CHECK_THAT(p.r_plus_end * p.r_minus_end, WithinAbs(1.0, 1e-8));
    const std::size_t n = p.u_minus.grid.size();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double up = p.u_plus.u(n - 1 - i), um = p.u_minus.u(i);
      worst = std::max(worst, std::abs(up * up - p.r_plus_end * p.r_plus_end * um * um));
    }
    CHECK(worst < 1e-8);
    CHECK_THAT(p.f_weighted_mass_plus, WithinRel(p.r_plus_end * p.r_plus_end * p.f_weighted_mass_minus, 1e-8));
  }
}

TEST_CASE("u+ is the free solution when g = 0, E = 0, lambda = 0", "[ksop][cell]") {
  const auto spec = reference_model(3.0);
  const auto cell = make_site_cell(spec, 0, 0.0);
  const auto p = cell_solutions(0.0, pi / 4, cell);
  for (std::size_t i = 0; i < p.u_plus.grid.size(); ++i) {
    const double y = p.u_plus.grid[i];
    CHECK_THAT(p.u_plus.u(i), WithinAbs(std::sin(pi / 4) + std::cos(pi / 4) * y, 1e-8));
  }
}

TEST_CASE("weighted mass of u+ matches refined quadrature", "[ksop][cell]") {
  const auto spec = make_model(zero_background(), bump_site(1.0), uniform_density(), 3.0);
  const auto cell = make_site_cell(spec, 0, 1.2);
  const double alpha = 0.8;
  const double beta = shoot_down(cell, alpha, 0.4).phi;
  const auto p = cell_solutions(beta, alpha, cell);
  // Independent: Cartesian integration at lambda, then Gauss-Legendre on f u^2.
  const double lam = p.lambda;
  PiecewiseFunction q{[&](double y) { return lam * spec.single_site(y); }, {}, "q"};
  const auto grid = uniform_grid(0.0, -1.0, 4096);
  const auto sol = integrate_solution(q, 1.2, 0.0, -1.0, std::sin(alpha), std::cos(alpha), 1e-13, grid);
  std::vector<double> vals;
  for (std::size_t i = 0; i < sol.trajectory.grid.size(); ++i) {
    const double u = sol.trajectory.u[i];
    vals.push_back(spec.single_site(sol.trajectory.grid[i]) * u * u);
  }
  std::reverse(vals.begin(), vals.end());
  const double h = 1.0 / static_cast<double>(vals.size() - 1);
  CHECK_THAT(simpson(vals, h), WithinAbs(p.f_weighted_mass_plus, 1e-8));
}

TEST_CASE("kernel values", "[ksop][kernel]") {
  const auto spec = reference_model(3.0);
  const auto cell = make_site_cell(spec, 0, 0.5);
  const double alpha = 1.1;
  const auto cr = column_range(cell, alpha);

  SECTION("nonexistent lambda gives zero") {
    const double outside = 0.5 * (cr.hi.phi + cr.lo.phi + cell.torus_length());
    CHECK(kernel_T1(outside, alpha, cell) == 0.0);
    const auto k = kernel_K1_K2(outside, alpha, cell);
    CHECK(k.K1 == 0.0);
    CHECK(k.K2 == 0.0);
  }
  SECTION("lambda outside supp r gives zero") {
    const double beta = shoot_down(cell, alpha, -0.5).phi;
    CHECK(kernel_T1(beta, alpha, cell) == 0.0);
    CHECK(boundary_functions_Psi_Phi(shoot_down(cell, 0.0, -0.5).phi, 0, cell).psi_j == 0.0);
  }
  SECTION("Schur factorization and K2 / K1 = R+^2") {
    const double beta = shoot_down(cell, alpha, 0.6).phi;
    const double t = kernel_T1(beta, alpha, cell);
    const auto k = kernel_K1_K2(beta, alpha, cell);
    REQUIRE(t > 0.0);
    CHECK_THAT(t * t, WithinRel(k.K1 * k.K2, 1e-10));
    const auto s = solve_lambda(beta, alpha, cell);
    CHECK_THAT(k.K2 / k.K1, WithinRel(std::exp(2.0 * s.lnR_plus), 1e-12));
  }
  SECTION("value agrees with a tighter independent pipeline") {
    const double beta = shoot_down(cell, alpha, 0.3).phi;
    auto tight = make_site_cell(spec, 0, 0.5, 1e-13);
    CHECK_THAT(kernel_T1(beta, alpha, cell), WithinRel(kernel_T1(beta, alpha, tight), 1e-7));
  }
  SECTION("Phi and Psi match the kernel definitions") {
    const double theta = shoot_down(cell, 0.0, 0.5).phi;
    const auto b = boundary_functions_Psi_Phi(theta, 0, cell);
    CHECK(b.psi_j == kernel_K1_K2(theta, 0.0, cell).K2);
    CHECK(b.psi_j > 0.0);
    CHECK(b.phi >= 0.0);
  }
}

TEST_CASE("boundary vectors are finite and have bounded L1 norm", "[ksop][kernel]") {
  const auto spec = reference_model(3.0);
  KernelOptions o;
  o.m = 200;
  o.subdivisions = 2;
  const auto bv = boundary_vectors(make_site_cell(spec, 0, 1.0), o);
  const double h = 4 * pi / 200;
  for (const auto& psi : bv.psi) {
    CHECK(psi.minCoeff() >= 0.0);
    CHECK(std::isfinite(psi.sum()));
    // int Psi_j = int r dlambda = 1.
    CHECK_THAT(h * psi.sum(), WithinAbs(1.0, 5e-3));
  }
  CHECK(bv.phi.minCoeff() >= 0.0);
  CHECK(bv.phi.sum() > 0.0);
}

TEST_CASE("discretize and the elementary norms", "[ksop][norm]") {
  const auto k = discretize([](double, double) { return 1.0; }, Domain::segment, 64);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(64);
  const Eigen::VectorXd row = k.apply(ones);
  for (Eigen::Index i = 0; i < row.size(); ++i) CHECK_THAT(row(i), WithinAbs(pi, 1e-12));
  CHECK_THAT(norm_2_to_2(k), WithinRel(pi, 1e-12));
  CHECK_THAT(norm_2_to_2_power(k).norm, WithinRel(pi, 1e-12));

  const auto c = discretize([](double, double) { return 2.5; }, Domain::segment, 32);
  CHECK_THAT(norm_1_to_1(c), WithinRel(2.5 * pi, 1e-12));

  const auto r1 = discretize([](double b, double a) { return std::sin(b) * (1.0 + a); }, Domain::segment, 400);
  const double exact = std::sqrt(pi / 2) * std::sqrt(pi + pi * pi + pi * pi * pi / 3);
  CHECK_THAT(norm_2_to_2(r1), WithinRel(exact, 1e-4));

  CHECK_THROWS_AS(discretize([](double, double) { return 1.0; }, Domain::segment, 8), PreconditionError);
}

TEST_CASE("block decomposition of a constant kernel", "[ksop][blocks]") {
  const int N = 2;
  const auto k = discretize([](double, double) { return 0.7; }, Domain::torus, 64, N);
  const auto blocks = block_decompose(k, N);
  REQUIRE(blocks.size() == 4);
  CHECK_THAT(std::abs(blocks[0].matrix(3, 5)), WithinRel(2 * N * 0.7, 1e-12));
  for (std::size_t j = 1; j < blocks.size(); ++j) CHECK(blocks[j].matrix.cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(block_decompose(discretize([](double, double) { return 1.0; }, Domain::torus, 66, N), N),
                  PreconditionError);
}

TEST_CASE("Kunz-Souillard operator norms at the reference cell", "[ksop][norm][slow]") {
  const auto& t = reference_table();
  const auto T1 = t.T1();
  CHECK(T1.matrix.minCoeff() >= 0.0);
  CHECK(T1.matrix.allFinite());
  CHECK_THAT(norm_1_to_1(t.T0()), WithinAbs(1.0, 1e-3));
  CHECK_THAT(norm_1_to_1(t.T0_tilde()), WithinAbs(1.0, 1e-3));
  const double n2 = norm_2_to_2(T1);
  CHECK(n2 <= 1.0 + 5e-3);
  CHECK(n2 > 0.0);
  CHECK_THAT(norm_2_to_2_power(T1).norm, WithinAbs(n2, 1e-10));
  const auto blocks = block_decompose(T1, t.cell().N);
  const double l0 = norm_2_to_2(blocks[0]);
  CHECK_THAT(l0, WithinAbs(n2, 1e-6));
  for (const auto& b : blocks) CHECK(norm_2_to_2(b) <= l0 + 1e-12);
  const auto [c1, c2] = t.apriori_bounds();
  CHECK(std::isfinite(c1));
  CHECK(c2 > 0.0);
}

TEST_CASE("T1 kernel is invariant under the joint pi-shift", "[ksop][kernel]") {
  const auto spec = make_model(cosine_background(0.5, 1.0, 0.2), indicator_site(), uniform_density(), 2.0);
  KernelOptions o;
  o.m = 80;
  o.subdivisions = 1;
  o.use_periodicity = false;
  const KernelTable t(make_site_cell(spec, 0, 0.3), o);
  const auto T = t.T1();
  const Eigen::Index m = 80, s = m / (2 * t.cell().N);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      worst = std::max(worst, std::abs(T.matrix((i + s) % m, (j + s) % m) - T.matrix(i, j)));
    }
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("energy absorption and continuity in g", "[ksop][continuity]") {
  const auto spec = reference_model(3.0);
  KernelOptions o;
  o.m = 80;
  o.subdivisions = 1;
  const auto probe =
      norm_continuity_probe(spec, zero_function(), constant_function(1.0), {0.0, 0.1}, 1.0, o);
  CHECK(probe.absorption_max_diff < 1e-9);
  CHECK(probe.differences[0].second == 0.0);
  CHECK(probe.differences[1].second > 0.0);
}

TEST_CASE("large-coupling amplitude", "[ksop][large]") {
  const auto spec = reference_model(3.0);
  const auto cell = make_site_cell(spec, 0, 0.0);
  CHECK_THAT(large_coupling_amplitude(0.0, cell, {0.0})[0], WithinAbs(0.5 * std::log(2.0), 1e-9));
  std::mt19937_64 rng(3);
  for (int t = 0; t < 3; ++t) {
    const auto v = large_coupling_amplitude(testing::uniform(rng, 0.0, 4 * pi), cell, {10.0, 1e2, 1e3, 1e4});
    CHECK(v[2] > v[1]);
    CHECK(v[3] > v[2]);
  }
  CHECK_THROWS_AS(large_coupling_amplitude(0.0, cell, {2.0, 1.0}), PreconditionError);
}

TEST_CASE("structured determinant", "[ksop][det]") {
  const auto d = structured_determinant({1, 2, 3}, {0, 1, 1});
  CHECK(d.closed_form == 2.0);
  CHECK_THAT(d.dense, WithinAbs(2.0, 1e-12));
  CHECK(structured_determinant({2, 3, 4}, {0, 0, 0}).closed_form == 24.0);
  CHECK(structured_determinant({2, 3, 4}, {0, 3, 1}).closed_form == 0.0);
  std::mt19937_64 rng(9);
  for (int n = 1; n <= 8; ++n) {
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(testing::uniform(rng, -1.0, 1.0));
      b.push_back(testing::uniform(rng, -1.0, 1.0));
    }
    const auto r = structured_determinant(a, b);
    CHECK_THAT(r.dense, WithinAbs(r.closed_form, 1e-12));
  }
}

TEST_CASE("Jacobian of the change of variables", "[ksop][jacobian]") {
  const auto spec = reference_model(3.0);
  SECTION("free box, L = 1") {
    const auto jc = jacobian_check(spec, box_couplings(1, {0.0, 0.0}), 1, 1, 1e-4);
    CHECK(jc.rel_error < 1e-4);
    for (std::size_t n = 0; n < jc.fh_numeric.size(); ++n) {
      CHECK_THAT(jc.fh_numeric[n], WithinAbs(jc.fh_analytic[n], 1e-6));
    }
    CHECK_THAT(jc.fh_numeric[0], WithinAbs(jc.fh_numeric[1], 1e-6));
  }
  SECTION("random couplings, L = 2") {
    const auto w = sample_couplings(spec.coupling, 4, 77);
    const auto jc = jacobian_check(spec, box_couplings(2, w), 2, 1, 1e-4);
    CHECK(jc.rel_error < 1e-4);
    for (std::size_t n = 0; n < jc.fh_numeric.size(); ++n) {
      CHECK_THAT(jc.fh_numeric[n], WithinAbs(jc.fh_analytic[n], 1e-6));
    }
  }
}

TEST_CASE("couplings are recovered from the phase profile", "[ksop][roundtrip]") {
  const auto spec = reference_model(10.0);
  for (int L = 1; L <= 3; ++L) {
    const auto omega = box_couplings(L, sample_couplings(spec.coupling, static_cast<std::size_t>(2 * L), 100 + L));
    const auto pairs = find_eigenvalues_in_window(spec, omega, L, SpectralOptions{});
    REQUIRE_FALSE(pairs.empty());
    for (const auto& p : pairs) {
      const auto prof = eigenfunction_phase_profile(p, spec, omega, L);
      const auto back = reconstruct_couplings(spec, prof.theta_values, prof.branch_index_j, prof.energy, L);
      for (std::size_t n = 0; n < omega.values.size(); ++n) {
        CHECK_THAT(back.values[n], WithinAbs(omega.values[n], 1e-6));
      }
    }
  }
}
