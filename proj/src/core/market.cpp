#include "market.hpp"

#include <sstream>

namespace matchmarket {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonPositiveRate: return "NonPositiveRate";
    case ErrorCode::ProbabilityOutOfRange: return "ProbabilityOutOfRange";
    case ErrorCode::HorizonNonPositive: return "HorizonNonPositive";
    case ErrorCode::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorCode::GridTooSmall: return "GridTooSmall";
    case ErrorCode::SolverDiverged: return "SolverDiverged";
    case ErrorCode::PolicyMismatch: return "PolicyMismatch";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NotConvergedWithinBudget: return "NotConvergedWithinBudget";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

MarketParams validate_params(double lambda_a, double lambda_b, double p) {
  // Written as !(x > 0) so NaN is rejected too.
  if (!(lambda_a > 0.0) || !(lambda_b > 0.0) || !std::isfinite(lambda_a) ||
      !std::isfinite(lambda_b)) {
    std::ostringstream msg;
    msg << "arrival rates must be finite and positive (lambda_a=" << lambda_a
        << ", lambda_b=" << lambda_b << ")";
    throw Error(ErrorCode::NonPositiveRate, msg.str());
  }
  if (!(p > 0.0 && p < 1.0)) {
    std::ostringstream msg;
    msg << "edge probability must lie in (0,1), got p=" << p;
    throw Error(ErrorCode::ProbabilityOutOfRange, msg.str());
  }
  return MarketParams(lambda_a, lambda_b, p);
}

MarketParams from_densities(double d_a, double d_b, double p) {
  if (!(p > 0.0 && p < 1.0)) {
    std::ostringstream msg;
    msg << "edge probability must lie in (0,1), got p=" << p;
    throw Error(ErrorCode::ProbabilityOutOfRange, msg.str());
  }
  return validate_params(d_a / p, d_b / p, p);
}

Densities densities(const MarketParams& params) noexcept {
  const double d_a = params.d_a();
  const double d_b = params.d_b();
  return {d_a, d_b, std::abs(d_a - d_b) / (d_a + d_b)};
}

std::string_view to_string(Policy policy) noexcept {
  switch (policy) {
    case Policy::Greedy2: return "greedy2";
    case Policy::Patient2: return "patient2";
    case Policy::Greedy1: return "greedy1";
    case Policy::Patient1: return "patient1";
    case Policy::Inactive: return "inactive";
  }
  return "unknown";
}

std::optional<Policy> parse_policy(std::string_view name) noexcept {
  for (Policy p : {Policy::Greedy2, Policy::Patient2, Policy::Greedy1, Policy::Patient1,
                   Policy::Inactive}) {
    if (name == to_string(p)) return p;
  }
  return std::nullopt;
}

Behaviour behaviour(Policy policy, Side side) noexcept {
  switch (policy) {
    case Policy::Greedy2: return Behaviour::Greedy;
    case Policy::Patient2: return Behaviour::Patient;
    case Policy::Greedy1: return side == Side::V ? Behaviour::Greedy : Behaviour::Inactive;
    case Policy::Patient1: return side == Side::V ? Behaviour::Patient : Behaviour::Inactive;
    case Policy::Inactive: return Behaviour::Inactive;
  }
  return Behaviour::Inactive;
}

}  // namespace matchmarket
