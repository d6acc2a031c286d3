#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "market.hpp"

namespace matchmarket {

/// Pool sizes (A, B) = (k, j).
struct State {
  int k = 0;
  int j = 0;
  friend bool operator==(const State&, const State&) = default;
};

struct RateEntry {
  State from;
  State to;
  double rate = 0.0;
};

/// Transition rates of the pool-size chain out of `state`. Zero-rate entries
/// and targets with a negative coordinate are omitted.
std::vector<RateEntry> transition_rates(Policy policy, const MarketParams& params, State state);

/// Truncation bounds: states {0..a_max} x {0..b_max}.
struct Grid {
  int a_max = 0;
  int b_max = 0;
  std::size_t states() const noexcept {
    return static_cast<std::size_t>(a_max + 1) * static_cast<std::size_t>(b_max + 1);
  }
  std::size_t index(int k, int j) const noexcept {
    return static_cast<std::size_t>(k) * static_cast<std::size_t>(b_max + 1) +
           static_cast<std::size_t>(j);
  }
  bool contains(State s) const noexcept {
    return s.k >= 0 && s.j >= 0 && s.k <= a_max && s.j <= b_max;
  }
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// ceil(lambda + 10 sqrt(lambda + 1)) per side.
Grid default_grid(const MarketParams& params) noexcept;

/// Probability mass over a truncated (A, B) grid.
struct PoolDistribution {
  Grid grid;
  std::vector<double> mass;  // row-major, index = grid.index(k, j)
  /// Stationary solves: mass on the outer boundary rows. Empirical
  /// histograms: fraction of samples that fell outside the grid.
  double leak = 0.0;
  std::optional<Policy> policy;
  std::optional<MarketParams> params;

  double at(int k, int j) const { return mass[grid.index(k, j)]; }
  double& at(int k, int j) { return mass[grid.index(k, j)]; }
  double total() const noexcept;

  static PoolDistribution zeros(Grid grid);
  static PoolDistribution point_mass(Grid grid, State at);
};

enum class SolveMethod { Auto, Direct, Power };

struct SolveOptions {
  double leak_threshold = 1e-6;
  SolveMethod method = SolveMethod::Auto;
  /// Auto switches from the sparse LU to power iteration above this size.
  std::size_t direct_max_states = 250'000;
  double step_tolerance = 1e-12;      // TV between successive power iterates
  double residual_tolerance = 1e-10;  // max |pi Q|
  std::size_t max_iterations = 5'000'000;
};

/// Stationary distribution of the censored chain on `grid`: transitions
/// leaving the grid are dropped.
PoolDistribution stationary_distribution(Policy policy, const MarketParams& params, Grid grid,
                                         const SolveOptions& options = {});

/// max_t |(pi Q)_t| for the censored generator on dist.grid.
double generator_residual(Policy policy, const MarketParams& params, const PoolDistribution& dist);

struct StationaryFunctionals {
  double e_a = 0.0;      // E[A]
  double e_b = 0.0;      // E[B]
  double e_a_geo = 0.0;  // E[A (1-p)^B]
  double e_b_geo = 0.0;  // E[B (1-p)^A]
  double loss_a = 0.0;
  double loss_b = 0.0;
  double loss_total = 0.0;
};

/// Loss functionals: greedy policies and inactive sides lose E[size]/lambda,
/// patient sides lose E[size (1-p)^other]/lambda.
StationaryFunctionals stationary_loss(Policy policy, const MarketParams& params,
                                      const PoolDistribution& dist);

/// Histogram of (A_t, B_t) over n_reps independent trajectories started empty.
PoolDistribution empirical_distribution(const MarketParams& params, Policy policy, double t,
                                        std::size_t n_reps, std::uint64_t seed, Grid grid);

enum class TvConvention {
  Half,     // 1/2 sum |d1 - d2|, in [0, 1]
  FullSum,  // sum |d1 - d2| without the 1/2
};

double tv_distance(const PoolDistribution& d1, const PoolDistribution& d2,
                   TvConvention convention = TvConvention::Half);

struct MixingOptions {
  double first_time = 0.05;
  double ratio = 1.25;
  double max_time = 64.0;
};

/// TV distance to stationarity along a geometric time grid {0, t0, t0 r, ...},
/// all times taken from the same set of replicated trajectories.
struct MixingCurve {
  std::vector<double> times;
  std::vector<double> tv;
};

MixingCurve mixing_curve(const MarketParams& params, Policy policy, std::size_t n_reps,
                         std::uint64_t seed, Grid grid, const MixingOptions& options = {});

struct MixingEstimate {
  double time = 0.0;
  /// Gap to the next grid time: the estimate is only resolved to this width.
  double resolution = 0.0;
  std::size_t grid_index = 0;
  double tv = 0.0;
};

MixingEstimate first_time_below(const MixingCurve& curve, double epsilon);

MixingEstimate estimate_mixing_time(const MarketParams& params, Policy policy, double epsilon,
                                    std::size_t n_reps, std::uint64_t seed, Grid grid,
                                    const MixingOptions& options = {});

/// CSV with header `i,j,prob` and trailing `# leak=<value>`.
std::string to_csv(const PoolDistribution& dist);

}  // namespace matchmarket
