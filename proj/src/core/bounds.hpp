#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "market.hpp"

namespace matchmarket {

/// Unique root of x + other (1 - (1-p)^x) = lhs on [0, lhs], by bisection to
/// 1e-12 relative width. Requires lhs > 0, other >= 0, 0 < p < 1.
double solve_characteristic_root(double lhs, double other, double p);

/// l1 = lambda_b (1-p)^(k1 - sigma_a). Also evaluates the equivalent form
/// (1-p)^(-sigma_a) (lambda_b - lambda_a + k1) and throws if the two disagree
/// beyond 1e-9 relative.
double solve_l1(const MarketParams& params, double k1, double sigma_a);

/// sqrt(lambda log lambda), floored at 1.
double default_sigma(double lambda) noexcept;

struct RootSet {
  double k2 = 0.0;  // lambda_a = k + lambda_b (1 - (1-p)^k)
  double l2 = 0.0;  // lambda_b = l + lambda_a (1 - (1-p)^l)
  double k1 = 0.0;  // same equation as k2
  double sigma_a = 1.0;
  double sigma_b = 1.0;
  std::optional<double> k2_lower;  // other rate lambda_b + sigma_b
  std::optional<double> l2_lower;  // other rate lambda_a + sigma_a
  std::optional<double> k1_lower;  // other rate lambda_b + sigma_b
  std::optional<double> k1_upper;  // other rate lambda_b - sigma_b; absent if sigma_b > lambda_b
  std::optional<double> l1;
};

/// Roots for the given shifts (sigma defaults to default_sigma per side).
RootSet solve_roots(const MarketParams& params, std::optional<double> sigma_a = std::nullopt,
                    std::optional<double> sigma_b = std::nullopt);

/// Residual |x + other (1-(1-p)^x) - lhs| / lhs.
double root_residual(double root, double lhs, double other, double p) noexcept;

struct SandwichChecks {
  bool k2_lower_bound = false;  // max{la - lb, la / (1 + d_b)} <= k2
  bool k2_upper_bound = false;  // k2 <= la - lb + log(d_b + 3) / p
  bool l2_lower_bound = false;  // lb / (1 + d_a) <= l2
  bool l2_upper_bound = false;  // l2 <= (lb / d_b) log(d_b + 3)
  bool k2_shift_order = false;  // k2 - sigma_b < k2_lower < k2
  bool l2_shift_order = false;  // l2 - sigma_a < l2_lower < l2
  bool k1_shift_order = false;  // k1 - sigma_b < k1_lower < k1 < k1_upper < min{k1 + sigma_b, la}
  bool residuals_ok = false;    // every root residual < 1e-9 relative
  bool oriented = true;         // false if the market was swapped to get d_a >= d_b
  bool all() const noexcept;
};

/// Checks the root sandwiches after orienting the market so d_a >= d_b.
SandwichChecks check_root_sandwiches(const MarketParams& params, const RootSet& roots);

struct BoundSet {
  // Upper bounds (asymptotic). Per-side values refer to the caller's sides.
  double greedy2_upper_a = 0.0, greedy2_upper_b = 0.0, greedy2_upper_total = 0.0;
  double patient2_upper_a = 0.0, patient2_upper_b = 0.0, patient2_upper_total = 0.0;
  /// Exponent max{d_a - d_b, d_a / (1 + d_b)} (oriented), reported in place of
  /// the balanced-case constant, which has no stated value.
  double patient2_balanced_exponent = 0.0;
  double alg1_upper_a = 0.0, alg1_upper_b = 0.0, alg1_upper_total = 0.0;

  // Lower bounds.
  double opt_lower = 0.0;
  double omn_lower = 0.0;
  double greedy1_lower = 0.0;
  double patient1_lower = 0.0;
  double delta_lower = 0.0;

  bool two_sided_in_regime = false;  // d_a >= d_b >= 1 (oriented), p < 1/10
  bool one_sided_in_regime = false;  // d_a, d_b >= 1, p < 1/10
  bool swapped_sides = false;
  std::vector<std::string> regime_flags;
  std::vector<std::string> vacuous;  // upper bounds exceeding 1
};

BoundSet upper_bounds(const MarketParams& params);
BoundSet lower_bounds(const MarketParams& params);
/// Union of upper_bounds and lower_bounds.
BoundSet all_bounds(const MarketParams& params);

/// Upper / lower bound that applies to a policy's total loss.
double policy_upper_bound(const BoundSet& bounds, Policy policy);
double policy_lower_bound(const BoundSet& bounds, Policy policy);

nlohmann::json to_json(const BoundSet& bounds);
nlohmann::json to_json(const RootSet& roots);
nlohmann::json to_json(const SandwichChecks& checks);

}  // namespace matchmarket
