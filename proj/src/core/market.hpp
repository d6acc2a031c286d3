#pragma once

#include <cmath>
#include <optional>
#include <string_view>

#include "error.hpp"

namespace matchmarket {

/// Market tuple (lambda_a, lambda_b, p). Only obtainable through
/// validate_params / from_densities, so a live value always satisfies
/// lambda_a, lambda_b > 0 and 0 < p < 1.
class MarketParams {
 public:
  double lambda_a() const noexcept { return lambda_a_; }
  double lambda_b() const noexcept { return lambda_b_; }
  double p() const noexcept { return p_; }
  double d_a() const noexcept { return lambda_a_ * p_; }
  double d_b() const noexcept { return lambda_b_ * p_; }

  /// Same market with the two sides exchanged.
  MarketParams swapped() const noexcept { return {lambda_b_, lambda_a_, p_}; }

  friend bool operator==(const MarketParams&, const MarketParams&) = default;

 private:
  MarketParams(double lambda_a, double lambda_b, double p) noexcept
      : lambda_a_(lambda_a), lambda_b_(lambda_b), p_(p) {}
  friend MarketParams validate_params(double, double, double);

  double lambda_a_;
  double lambda_b_;
  double p_;
};

MarketParams validate_params(double lambda_a, double lambda_b, double p);

/// (d_a, d_b, p) parameterization; lambda = d / p.
MarketParams from_densities(double d_a, double d_b, double p);

struct Densities {
  double d_a;
  double d_b;
  double delta;  // |d_a - d_b| / (d_a + d_b)
};

Densities densities(const MarketParams& params) noexcept;

enum class Policy { Greedy2, Patient2, Greedy1, Patient1, Inactive };

inline constexpr Policy kMatchingPolicies[] = {Policy::Greedy2, Policy::Patient2,
                                               Policy::Greedy1, Policy::Patient1};

std::string_view to_string(Policy policy) noexcept;
std::optional<Policy> parse_policy(std::string_view name) noexcept;

enum class Side { U, V };

/// Behaviour of one agent under a policy. In the 1-sided policies side U is
/// inactive and side V is the active side.
enum class Behaviour { Greedy, Patient, Inactive };

Behaviour behaviour(Policy policy, Side side) noexcept;

/// (1 - p)^k evaluated as exp(k * log1p(-p)).
inline double survival_pow(double p, double k) noexcept {
  return std::exp(k * std::log1p(-p));
}

}  // namespace matchmarket
