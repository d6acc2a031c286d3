#include <doctest.h>

#include <cmath>

#include "bounds.hpp"
#include "ctmc.hpp"
#include "diagnostics.hpp"
#include "error.hpp"

using namespace matchmarket;

namespace {

PoolDistribution solve(Policy policy, const MarketParams& m) {
  return stationary_distribution(policy, m, default_grid(m));
}

const ConcentrationEntry& find(const std::vector<ConcentrationEntry>& es, const std::string& id) {
  for (const auto& e : es) {
    if (e.id == id) return e;
  }
  FAIL("no entry " << id);
  return es.front();
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("Greedy2 tails at lambda = 60, p = 1/12") {
  const auto m = validate_params(60, 60, 1.0 / 12);
  const auto pi = solve(Policy::Greedy2, m);
  const auto roots = solve_roots(m);
  const auto es = check_greedy2_tails(pi, roots, default_sigma(60));
  REQUIRE(es.size() == 2);
  for (const auto& e : es) {
    CHECK(e.measured < 0.1);
    CHECK(e.pass);
    CHECK(e.measured >= 0.0);
  }
  const auto report = concentration_report(Policy::Greedy2, m, pi);
  CHECK(report.all_pass());
}

TEST_CASE("tail mass is nonincreasing in sigma and vanishes past the grid") {
  const auto m = validate_params(30, 30, 0.1);
  const auto pi = solve(Policy::Greedy2, m);
  const auto roots = solve_roots(m);
  double prev_a = 1.0, prev_b = 1.0;
  for (double sigma = 1.0; sigma < 40; sigma += 1.5) {
    const auto es = check_greedy2_tails(pi, roots, sigma);
    CHECK(es[0].measured <= prev_a + 1e-15);
    CHECK(es[1].measured <= prev_b + 1e-15);
    prev_a = es[0].measured;
    prev_b = es[1].measured;
  }
  const auto edge = check_greedy2_tails(pi, roots, pi.grid.a_max + pi.grid.b_max);
  CHECK(edge[0].measured <= pi.leak);
  CHECK(edge[1].measured <= pi.leak);
}

TEST_CASE("checks refuse distributions solved for another policy") {
  const auto m = validate_params(20, 20, 0.1);
  const auto pi = solve(Policy::Patient2, m);
  const auto roots = solve_roots(m);
  try {
    check_greedy2_tails(pi, roots, 3.0);
    FAIL("expected PolicyMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PolicyMismatch);
  }
  CHECK_THROWS_AS(check_1sided_regions(pi, m, roots, Policy::Greedy1, 3, 3), Error);
  CHECK_THROWS_AS(check_1sided_regions(pi, m, roots, Policy::Greedy2, 3, 3), Error);
}

TEST_CASE("Patient2 region, sum and difference at d = 3") {
  const auto m = validate_params(60, 60, 0.05);
  const auto pi = solve(Policy::Patient2, m);
  const auto roots = solve_roots(m);
  const double s = default_sigma(60);
  const auto es = check_patient2_region(pi, m, roots, s, s, s, std::log(60.0));
  CHECK(find(es, "patient2-region").measured < 0.1);
  CHECK(find(es, "patient2-sum").measured < 0.1);
  const auto& diff = find(es, "patient2-diff");
  CHECK_FALSE(diff.skipped);
  CHECK(diff.measured < 0.1);
  for (const auto& e : es) {
    CHECK(e.measured >= 0.0);
    CHECK(e.measured <= 1.0);
  }

  // A shift of (lambda_a + lambda_b)/2 pushes the sum event below zero.
  const auto vacuous = check_patient2_region(pi, m, roots, s, s, 60.0, std::log(60.0));
  CHECK(find(vacuous, "patient2-sum").measured == 0.0);
}

TEST_CASE("difference check is gated to balanced markets") {
  const auto m = from_densities(4, 3, 0.05);
  const auto pi = solve(Policy::Patient2, m);
  const auto report = concentration_report(Policy::Patient2, m, pi);
  const auto& diff = find(report.entries, "patient2-diff");
  CHECK(diff.skipped);
  CHECK_FALSE(diff.note.empty());

  const auto small = from_densities(2, 2, 0.05);
  CHECK(find(concentration_report(Policy::Patient2, small, solve(Policy::Patient2, small)).entries, "patient2-diff")
            .skipped);
}

TEST_CASE("1-sided regions at lambda = 60, p = 0.05") {
  const auto m = validate_params(60, 60, 0.05);
  const auto roots = solve_roots(m);
  const double s = default_sigma(60);
  REQUIRE(roots.k1_upper.has_value());
  CHECK(*roots.k1_lower < roots.k1);
  CHECK(roots.k1 < *roots.k1_upper);

  const auto g1 = check_1sided_regions(solve(Policy::Greedy1, m), m, roots, Policy::Greedy1, s, s);
  REQUIRE(g1.size() == 3);
  for (const auto& e : g1) CHECK(e.measured < 0.1);

  const auto pi = solve(Policy::Patient1, m);
  const auto p1 = check_1sided_regions(pi, m, roots, Policy::Patient1, s, s);
  REQUIRE(p1.size() == 1);
  CHECK(p1[0].measured < 0.1);
  const auto f = stationary_loss(Policy::Patient1, m, pi);
  CHECK(std::abs(f.e_b - 60) < s);
}

TEST_CASE("1-sided region covering the grid leaves only the leak") {
  const auto m = validate_params(20, 20, 0.1);
  const auto roots = solve_roots(m);
  const auto pi = solve(Policy::Greedy1, m);
  const double huge = 1000;
  const auto es = check_1sided_regions(pi, m, roots, Policy::Greedy1, huge, 1.0);
  for (const auto& e : es) CHECK(e.measured <= pi.leak);
}

TEST_CASE("balance residuals of solved distributions") {
  const auto m = validate_params(30, 30, 1.0 / 6);
  for (Policy policy : {Policy::Greedy2, Policy::Patient2, Policy::Greedy1, Policy::Patient1,
                        Policy::Inactive}) {
    const auto pi = solve(policy, m);
    const auto r = balance_residuals(pi, policy, m);
    CAPTURE(to_string(policy));
    CHECK(r.max() < 1e-8 * 60);
    CHECK(r.diagonal.has_value() == (policy == Policy::Patient2));
  }
}

TEST_CASE("negative controls break balance") {
  const auto m = validate_params(10, 10, 0.2);
  const Grid g{40, 40};

  auto uniform = PoolDistribution::zeros(g);
  for (double& x : uniform.mass) x = 1.0 / static_cast<double>(g.states());
  CHECK(balance_residuals(uniform, Policy::Greedy2, m).max() > 1e-3 * 20);

  const auto origin = PoolDistribution::point_mass(g, {0, 0});
  const auto r = balance_residuals(origin, Policy::Greedy2, m);
  CHECK(r.vertical == doctest::Approx(10.0));  // lambda_a * pi(0,0) leaves {i <= 0}

  auto pi = stationary_distribution(Policy::Patient2, m, g);
  CHECK(balance_residuals(pi, Policy::Patient2, m).max() < 1e-8 * 20);
  const double moved = 0.01 * pi.at(3, 3);
  pi.at(3, 3) -= moved;
  pi.at(8, 2) += moved;
  CHECK(balance_residuals(pi, Policy::Patient2, m).max() > 1e-8 * 20);
}

TEST_CASE("simulation matches the chain") {
  SUBCASE("inactive pool means") {
    const auto m = validate_params(30, 30, 1.0 / 6);
    const auto r = compare_sim_stationary(m, Policy::Inactive, 10, 2, 200, 31, default_grid(m));
    REQUIRE(!r.inactive_moments.empty());
    for (double z : r.inactive_z_a) CHECK(std::abs(z) < 3);
    for (double z : r.inactive_z_b) CHECK(std::abs(z) < 3);
  }
  SUBCASE("Greedy2 at d = 5") {
    const auto m = validate_params(30, 30, 1.0 / 6);
    const auto r = compare_sim_stationary(m, Policy::Greedy2, 100, 20, 200, 32, default_grid(m));
    CAPTURE(r.z_total);
    CHECK(std::abs(r.z_total) < 3);
  }
  SUBCASE("Patient1 unbalanced") {
    const auto m = validate_params(40, 20, 0.1);
    const auto r = compare_sim_stationary(m, Policy::Patient1, 100, 20, 200, 33, default_grid(m));
    CAPTURE(r.z_total);
    CHECK(std::abs(r.z_total) < 3);
  }
  CHECK_THROWS_AS(compare_sim_stationary(validate_params(5, 5, 0.2), Policy::Greedy2, 10, 10, 5, 1,
                                         {30, 30}),
                  Error);
}

TEST_CASE("reports serialize to JSON") {
  const auto m = validate_params(20, 20, 0.1);
  const auto report = concentration_report(Policy::Patient2, m, solve(Policy::Patient2, m));
  const auto j = to_json(report);
  CHECK(j.at("policy") == "patient2");
  CHECK(j.at("entries").size() == report.entries.size());
  CHECK(j.at("entries")[0].contains("measured"));
  const auto b = to_json(balance_residuals(solve(Policy::Greedy2, m), Policy::Greedy2, m));
  CHECK(b.at("diagonal").is_null());
}

}  // TEST_SUITE
