#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bounds.hpp"
#include "ctmc.hpp"
#include "event_sim.hpp"

namespace matchmarket {

struct ConcentrationEntry {
  std::string id;      // e.g. "greedy2-tail-A"
  std::string region;  // human-readable event whose mass is measured
  double measured = 0.0;
  double threshold = 0.1;
  bool pass = false;
  bool skipped = false;  // regime gate not met
  std::string note;
};

struct ConcentrationReport {
  Policy policy = Policy::Greedy2;
  double lambda_a = 0.0, lambda_b = 0.0, p = 0.0;
  double sigma_a = 0.0, sigma_b = 0.0;
  /// Largest measured tail mass among the non-skipped entries.
  double tail_mass_outside = 0.0;
  std::vector<ConcentrationEntry> entries;

  bool all_pass() const noexcept;
};

struct ConcentrationOptions {
  double threshold = 0.1;
  std::optional<double> sigma_a;
  std::optional<double> sigma_b;
  std::optional<double> sigma_sum;   // sum-of-pools check; default sigma_a
  std::optional<double> sigma_diff;  // difference check; default log lambda_a
};

/// Pr[A >= k2 + sigma + 1] and Pr[B >= l2 + sigma + 1].
std::vector<ConcentrationEntry> check_greedy2_tails(const PoolDistribution& dist,
                                                    const RootSet& roots, double sigma,
                                                    double threshold = 0.1);

/// Mass outside the rectangle around (lower roots, lambdas), the sum-of-pools
/// lower tail and, in the balanced regime, the difference tail.
std::vector<ConcentrationEntry> check_patient2_region(const PoolDistribution& dist,
                                                      const MarketParams& params,
                                                      const RootSet& roots, double sigma_a,
                                                      double sigma_b, double sigma_sum,
                                                      double sigma_diff, double threshold = 0.1);

std::vector<ConcentrationEntry> check_1sided_regions(const PoolDistribution& dist,
                                                     const MarketParams& params,
                                                     const RootSet& roots, Policy policy,
                                                     double sigma_a, double sigma_b,
                                                     double threshold = 0.1);

/// Runs the checks that apply to `policy` on a solved distribution.
ConcentrationReport concentration_report(Policy policy, const MarketParams& params,
                                         const PoolDistribution& dist,
                                         const ConcentrationOptions& options = {});

struct BalanceResiduals {
  double vertical = 0.0;    // cuts {i <= k}
  double horizontal = 0.0;  // cuts {j <= h}
  std::optional<double> diagonal;  // cuts {i + j <= h}, Patient2 only
  double max() const noexcept;
};

BalanceResiduals balance_residuals(const PoolDistribution& dist, Policy policy,
                                   const MarketParams& params);

struct ConsistencyReport {
  LossReport simulated;
  StationaryFunctionals stationary;
  double z_a = 0.0, z_b = 0.0, z_total = 0.0;  // difference in SE units
  /// Inactive policy only: E[A_t], E[B_t] against (1 - e^{-t}) lambda.
  std::vector<PoolMoments> inactive_moments;
  std::vector<double> inactive_z_a, inactive_z_b;
  double max_abs_z() const noexcept;
};

ConsistencyReport compare_sim_stationary(const MarketParams& params, Policy policy,
                                         double horizon, double burn_in, std::size_t n_reps,
                                         std::uint64_t seed, Grid grid);

nlohmann::json to_json(const ConcentrationReport& report);
nlohmann::json to_json(const BalanceResiduals& residuals);
nlohmann::json to_json(const ConsistencyReport& report);
nlohmann::json to_json(const LossReport& report);
nlohmann::json to_json(const StationaryFunctionals& f);

}  // namespace matchmarket
