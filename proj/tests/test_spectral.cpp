#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "kslab/spectral.hpp"
#include "random_instances.hpp"

using namespace kslab;
using namespace kslab::testing;
using Catch::Matchers::WithinAbs;

namespace {
const double pi = std::numbers::pi;

ModelSpec free_model(double e_max) { return make_model(zero_background(), indicator_site(), uniform_density(), e_max); }

Couplings zeros(int L) { return box_couplings(L, std::vector<double>(2 * L, 0.0)); }

Couplings random_box(std::mt19937_64& rng, const ModelSpec& spec, int L) {
  return box_couplings(L, sample_couplings(spec.coupling, 2 * L, rng()));
}
}  // namespace

TEST_CASE("right-end phase of the free box") {
  const auto spec = free_model(3.0);
  CHECK_THAT(phase_at_right_end(spec, zeros(1), 1, 0.0), WithinAbs(std::atan(2.0), 1e-10));
  CHECK_THAT(phase_at_right_end(spec, zeros(1), 1, pi * pi / 4), WithinAbs(pi, 1e-9));
}

TEST_CASE("right-end phase increases with energy") {
  std::mt19937_64 rng(4);
  const auto spec = reference_model(3.0);
  const auto w = random_box(rng, spec, 2);
  double prev = -1.0;
  for (int i = 0; i <= 60; ++i) {
    const double p = phase_at_right_end(spec, w, 2, -3.0 + 0.1 * i);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("eigenvalue counts") {
  const auto spec = free_model(3.0);
  CHECK(count_eigenvalues_below(spec, zeros(1), 1, 1.0) == 0);
  CHECK(count_eigenvalues_below(spec, zeros(1), 1, 3.0) == 1);
  std::mt19937_64 rng(9);
  const auto ref = reference_model(10.0);
  for (int t = 0; t < 20; ++t) {
    const int L = 1 + t % 3;
    const auto w = random_box(rng, ref, L);
    const double E = uniform(rng, -2.0, 10.0);
    const auto dense = dense_oracle_eigenvalues(ref, w, L, 1e-3, false, 12.0);
    const int dense_count = static_cast<int>(std::count_if(dense.begin(), dense.end(), [E](double e) { return e < E; }));
    CHECK(count_eigenvalues_below(ref, w, L, E) == dense_count);
  }
}

TEST_CASE("window examples") {
  const auto a = find_eigenvalues_in_window(free_model(3.0), zeros(1), 1);
  REQUIRE(a.size() == 1);
  CHECK(a[0].index_k == 1);
  CHECK_THAT(a[0].energy, WithinAbs(pi * pi / 4, 1e-9));
  CHECK(find_eigenvalues_in_window(free_model(1.0), zeros(1), 1).empty());
}

TEST_CASE("exact free eigenvalues (k pi / 2L)^2") {
  for (int L = 1; L <= 3; ++L) {
    const auto pairs = find_eigenvalues_in_window(free_model(10.0), zeros(L), L);
    for (const auto& p : pairs) {
      CHECK_THAT(p.energy, WithinAbs(std::pow(p.index_k * pi / (2.0 * L), 2), 1e-8));
    }
  }
}

TEST_CASE("eigenpair invariants") {
  std::mt19937_64 rng(21);
  const auto spec = reference_model(6.0);
  for (int t = 0; t < 5; ++t) {
    const int L = 1 + t % 3;
    const auto w = random_box(rng, spec, L);
    const auto pairs = find_eigenvalues_in_window(spec, w, L);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      CHECK_THAT(p.l2_norm_check, WithinAbs(1.0, 1e-8));
      CHECK_THAT(p.values.front(), WithinAbs(0.0, 1e-8));
      CHECK_THAT(p.values.back(), WithinAbs(0.0, 1e-8));
      CHECK_THAT(p.right_end_phase, WithinAbs(p.index_k * pi, 1e-8));
      if (i > 0) {
        CHECK(p.index_k == pairs[i - 1].index_k + 1);
        CHECK(p.energy > pairs[i - 1].energy);
      }
    }
  }
}

TEST_CASE("shooting matches the extrapolated dense oracle") {
  std::mt19937_64 rng(77);
  const auto spec = reference_model(10.0);
  for (int t = 0; t < 6; ++t) {
    const int L = 1 + t % 3;
    const auto w = random_box(rng, spec, L);
    const auto pairs = find_eigenvalues_in_window(spec, w, L, {}, false);
    const auto dense = dense_oracle_eigenvalues(spec, w, L, 1e-3);
    for (const auto& p : pairs) {
      REQUIRE(static_cast<std::size_t>(p.index_k) <= dense.size());
      CHECK_THAT(p.energy, WithinAbs(dense[p.index_k - 1], 1e-6));
    }
  }
}

TEST_CASE("dense oracle examples") {
  const auto spec = free_model(3.0);
  const auto coarse = dense_oracle_eigenvalues(spec, zeros(1), 1, 1e-2, false);
  const auto fine = dense_oracle_eigenvalues(spec, zeros(1), 1, 1e-3, false);
  CHECK(std::abs(fine[0] - pi * pi / 4) < std::abs(coarse[0] - pi * pi / 4));
  CHECK_THAT(dense_oracle_eigenvalues(spec, zeros(1), 1, 1e-3)[0], WithinAbs(pi * pi / 4, 1e-9));
  auto shifted = make_model(constant_background(5.0), indicator_site(), uniform_density(), 3.0);
  const auto s = dense_oracle_eigenvalues(shifted, zeros(1), 1, 1e-2, false, 8.0);
  REQUIRE(!s.empty());
  CHECK_THAT(s[0] - coarse[0], WithinAbs(5.0, 1e-9));
  CHECK_THROWS_AS(dense_oracle_eigenvalues(spec, zeros(1), 1, 0.5), PreconditionError);
}

TEST_CASE("raising one coupling never lowers an eigenvalue") {
  std::mt19937_64 rng(31);
  const auto spec = reference_model(8.0);
  for (int t = 0; t < 5; ++t) {
    const int L = 2;
    auto w = random_box(rng, spec, L);
    const auto before = dense_oracle_eigenvalues(spec, w, L, 1e-2, false, 8.0);
    w.values[static_cast<std::size_t>(t % 4)] += 0.5;
    const auto after = dense_oracle_eigenvalues(spec, w, L, 1e-2, false, 20.0);
    for (std::size_t k = 0; k < before.size(); ++k) CHECK(after[k] >= before[k] - 1e-12);
  }
}

TEST_CASE("phase profile") {
  const auto spec = free_model(3.0);
  const auto pairs = find_eigenvalues_in_window(spec, zeros(1), 1);
  const auto prof = eigenfunction_phase_profile(pairs[0], spec, zeros(1), 1);
  REQUIRE(prof.theta_values.size() == 1);
  CHECK_THAT(prof.theta_values[0], WithinAbs(pi / 2, 1e-8));
  CHECK(prof.branch_index_j == 1);

  std::mt19937_64 rng(2);
  const auto ref = reference_model(8.0);
  const auto w = random_box(rng, ref, 3);
  for (const auto& p : find_eigenvalues_in_window(ref, w, 3)) {
    const auto pr = eigenfunction_phase_profile(p, ref, w, 3);
    REQUIRE(pr.theta_values.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      const double d = (pr.unwrapped[i] - pr.theta_values[i]) / ref.torus_length();
      CHECK_THAT(d, WithinAbs(std::round(d), 1e-12));
      CHECK(pr.theta_values[i] >= 0.0);
      CHECK(pr.theta_values[i] < ref.torus_length());
    }
  }
}
