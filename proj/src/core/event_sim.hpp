#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "market.hpp"
#include "rng.hpp"

namespace matchmarket {

using AgentId = std::uint32_t;

struct Outcome {
  enum class Kind { Remaining, Matched, Perished };
  Kind kind = Kind::Remaining;
  AgentId partner = 0;  // valid when Matched
  double time = 0.0;    // match or perish time
};

struct Agent {
  AgentId id = 0;
  Side side = Side::U;
  double arrival_time = 0.0;
  double criticality_time = 0.0;  // arrival + Exp(1) lifetime
  Outcome outcome;

  /// Time the agent leaves the pool; +inf when still present at the horizon.
  double departure_time() const noexcept;
};

struct PoolSnapshot {
  double time = 0.0;
  std::int64_t a = 0;
  std::int64_t b = 0;
  friend bool operator==(const PoolSnapshot&, const PoolSnapshot&) = default;
};

/// One realized trajectory. Agent ids are indices into `agents`, assigned in
/// arrival order; edges are stored as (U id, V id).
struct EventLog {
  MarketParams params;
  Policy policy = Policy::Inactive;
  bool omniscient = false;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::vector<Agent> agents;
  std::vector<std::pair<AgentId, AgentId>> edges;
  std::vector<PoolSnapshot> pool_snapshots;
};

struct LossReport {
  double loss_a = 0.0;
  double loss_b = 0.0;
  double loss_total = 0.0;
  std::int64_t arrived_a = 0, arrived_b = 0;
  std::int64_t matched_a = 0, matched_b = 0;
  std::int64_t perished_a = 0, perished_b = 0;
  std::int64_t remaining_a = 0, remaining_b = 0;
  double se_a = 0.0, se_b = 0.0, se_total = 0.0;
  std::size_t replications = 1;
  /// Perished agents are only counted from this time on; losses divide by
  /// lambda * (horizon - window_start).
  double window_start = 0.0;
  /// Set when no agent arrived at all; losses are then reported as 0.
  bool zero_arrivals = false;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// Arrival stream shared by every policy run on the same (seed, replication).
struct Realization {
  MarketParams params;
  double horizon = 0.0;
  StreamKey key;
  std::vector<Agent> agents;  // outcomes all Remaining
};

struct SimOptions {
  bool record_edges = true;
  /// Assert the Greedy2 empty-pool-graph property after every event.
  bool check_invariants = false;
  std::vector<double> snapshot_times;
};

Realization generate_realization(const MarketParams& params, double horizon, StreamKey key);

EventLog run_policy(const Realization& realization, Policy policy, const SimOptions& options = {});

/// Maximum-cardinality matching over the compatibility graph of the
/// no-matching realization (full knowledge of the future).
EventLog run_omniscient(const Realization& realization);

LossReport loss_report(const EventLog& log, double window_start = 0.0);

/// Mean and standard error per policy across replications.
LossReport aggregate(std::span<const LossReport> reports);

std::pair<EventLog, LossReport> sample_trajectory(const MarketParams& params, Policy policy,
                                                  double horizon, std::uint64_t seed,
                                                  const SimOptions& options = {});

LossReport run_replications(const MarketParams& params, Policy policy, double horizon,
                            std::size_t n_reps, std::uint64_t seed, double burn_in = 0.0);

LossReport omniscient_loss(const MarketParams& params, double horizon, std::uint64_t seed);

std::pair<EventLog, LossReport> omniscient_trajectory(const MarketParams& params, double horizon,
                                                      std::uint64_t seed);

std::vector<std::pair<EventLog, LossReport>> coupled_run(const MarketParams& params,
                                                         double horizon, std::uint64_t seed,
                                                         std::span<const Policy> policies,
                                                         const SimOptions& options = {});

struct CoupledLosses {
  std::vector<LossReport> policies;  // same order as requested
  LossReport omniscient;
  bool has_omniscient = false;
};

/// Replicated coupled runs: per replication every policy (and optionally the
/// omniscient benchmark) sees the same arrivals, lifetimes and coins.
CoupledLosses coupled_replications(const MarketParams& params, double horizon, double burn_in,
                                   std::size_t n_reps, std::uint64_t seed,
                                   std::span<const Policy> policies, bool include_omniscient);

std::vector<PoolSnapshot> pool_size_timeseries(const EventLog& log,
                                               std::span<const double> sample_times);

struct PoolMoments {
  double time = 0.0;
  double mean_a = 0.0, se_a = 0.0;
  double mean_b = 0.0, se_b = 0.0;
};

/// Replicated estimate of E[A_t], E[B_t] at the given times.
std::vector<PoolMoments> mean_pool_sizes(const MarketParams& params, Policy policy,
                                         std::span<const double> times, std::size_t n_reps,
                                         std::uint64_t seed);

}  // namespace matchmarket
