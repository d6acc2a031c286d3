#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "bounds.hpp"
#include "ctmc.hpp"
#include "error.hpp"
#include "event_sim.hpp"
#include "rng.hpp"

using namespace matchmarket;

namespace {

constexpr Policy kAllPolicies[] = {Policy::Greedy2, Policy::Patient2, Policy::Greedy1,
                                   Policy::Patient1, Policy::Inactive};

std::int64_t matched_count(const LossReport& r) { return r.matched_a + r.matched_b; }

void check_conservation(const LossReport& r) {
  CHECK(r.perished_a + r.matched_a + r.remaining_a == r.arrived_a);
  CHECK(r.perished_b + r.matched_b + r.remaining_b == r.arrived_b);
}

/// Every matched pair is mutual, crosses sides, was a realized edge and both
/// agents were present at the match time.
void check_matching(const EventLog& log) {
  std::set<std::pair<AgentId, AgentId>> edges(log.edges.begin(), log.edges.end());
  for (const auto& [u, v] : log.edges) {
    CHECK(log.agents[u].side == Side::U);
    CHECK(log.agents[v].side == Side::V);
  }
  for (const Agent& a : log.agents) {
    if (a.outcome.kind != Outcome::Kind::Matched) continue;
    const Agent& b = log.agents[a.outcome.partner];
    REQUIRE(b.outcome.kind == Outcome::Kind::Matched);
    CHECK(b.outcome.partner == a.id);
    CHECK(a.side != b.side);
    CHECK(a.outcome.time == b.outcome.time);
    const double t = a.outcome.time;
    CHECK(t <= log.horizon);
    CHECK(a.arrival_time <= t);
    CHECK(t <= a.criticality_time);
    CHECK(b.arrival_time <= t);
    CHECK(t <= b.criticality_time);
    const AgentId u = a.side == Side::U ? a.id : b.id;
    const AgentId v = a.side == Side::U ? b.id : a.id;
    CHECK(edges.count({u, v}) == 1);
  }
}

bool same_logs(const EventLog& x, const EventLog& y) {
  if (x.agents.size() != y.agents.size() || x.edges != y.edges) return false;
  for (std::size_t i = 0; i < x.agents.size(); ++i) {
    const Agent& a = x.agents[i];
    const Agent& b = y.agents[i];
    if (a.arrival_time != b.arrival_time || a.criticality_time != b.criticality_time ||
        a.side != b.side || a.outcome.kind != b.outcome.kind ||
        a.outcome.partner != b.outcome.partner || a.outcome.time != b.outcome.time) {
      return false;
    }
  }
  return true;
}

Realization manual_realization(double p, std::vector<Agent> agents, double horizon = 5.0) {
  Realization r{validate_params(1.0, 1.0, p), horizon, {42, 0}, std::move(agents)};
  return r;
}

Agent agent(AgentId id, Side side, double arrive, double critical) {
  Agent a;
  a.id = id;
  a.side = side;
  a.arrival_time = arrive;
  a.criticality_time = critical;
  return a;
}

}  // namespace

TEST_SUITE("event_sim") {

TEST_CASE("horizon must be positive") {
  const auto m = validate_params(10, 10, 0.1);
  for (double T : {0.0, -1.0, std::nan("")}) {
    try {
      sample_trajectory(m, Policy::Greedy2, T, 1);
      FAIL("expected HorizonNonPositive");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::HorizonNonPositive);
    }
  }
  CHECK_THROWS_AS(omniscient_loss(m, 0.0, 1), Error);
}

TEST_CASE("empty market reports zero loss with a flag") {
  const auto [log, rep] = sample_trajectory(validate_params(1e-4, 1e-4, 0.5), Policy::Greedy2, 1e-9, 1);
  CHECK(log.agents.empty());
  CHECK(rep.zero_arrivals);
  CHECK(rep.arrived_a + rep.arrived_b == 0);
  CHECK(rep.loss_a == 0.0);
  CHECK(rep.loss_b == 0.0);
  CHECK(rep.loss_total == 0.0);
  CHECK(!std::isnan(rep.loss_total));
}

TEST_CASE("inactive policy never matches and conserves agents") {
  const auto [log, rep] = sample_trajectory(validate_params(15, 9, 0.2), Policy::Inactive, 100, 4);
  CHECK(rep.matched_a == 0);
  CHECK(rep.matched_b == 0);
  CHECK(rep.perished_a + rep.remaining_a == rep.arrived_a);
  CHECK(rep.perished_b + rep.remaining_b == rep.arrived_b);
  CHECK(rep.arrived_a > 0);
}

TEST_CASE("conservation and matching validity for every policy") {
  const auto m = validate_params(12, 8, 0.2);
  for (Policy policy : kAllPolicies) {
    SimOptions opts;
    opts.check_invariants = true;
    const auto [log, rep] = sample_trajectory(m, policy, 40, 11, opts);
    CAPTURE(to_string(policy));
    check_conservation(rep);
    check_matching(log);
    for (const Agent& a : log.agents) {
      CHECK(a.criticality_time > a.arrival_time);
      if (a.outcome.kind == Outcome::Kind::Perished) CHECK(a.outcome.time <= log.horizon);
      if (a.outcome.kind == Outcome::Kind::Remaining) CHECK(a.criticality_time > log.horizon);
    }
  }
}

TEST_CASE("1-sided policies: side U never initiates") {
  const auto m = validate_params(12, 12, 0.2);
  const auto [log, rep] = sample_trajectory(m, Policy::Greedy1, 40, 2);
  for (const Agent& a : log.agents) {
    if (a.side != Side::U || a.outcome.kind != Outcome::Kind::Matched) continue;
    // A U agent is matched only when the V partner arrives.
    CHECK(log.agents[a.outcome.partner].arrival_time == a.outcome.time);
  }
  const auto [plog, prep] = sample_trajectory(m, Policy::Patient1, 40, 2);
  for (const Agent& a : plog.agents) {
    if (a.side != Side::U || a.outcome.kind != Outcome::Kind::Matched) continue;
    CHECK(plog.agents[a.outcome.partner].criticality_time == a.outcome.time);
  }
}

TEST_CASE("Greedy2 pool graph stays empty after every event") {
  SimOptions opts;
  opts.check_invariants = true;
  CHECK_NOTHROW(sample_trajectory(validate_params(20, 20, 0.25), Policy::Greedy2, 30, 5, opts));
}

TEST_CASE("determinism") {
  const auto m = validate_params(10, 14, 0.15);
  for (Policy policy : kAllPolicies) {
    const auto a = sample_trajectory(m, policy, 30, 99);
    const auto b = sample_trajectory(m, policy, 30, 99);
    CHECK(same_logs(a.first, b.first));
    CHECK(a.second == b.second);
  }
  const auto c = sample_trajectory(m, Policy::Greedy2, 30, 100);
  CHECK_FALSE(same_logs(sample_trajectory(m, Policy::Greedy2, 30, 99).first, c.first));

  const Policy g2[] = {Policy::Greedy2};
  CHECK(coupled_run(m, 30, 5, g2).front().second == coupled_run(m, 30, 5, g2).front().second);
}

TEST_CASE("snapshot sampling does not perturb the trajectory") {
  const auto m = validate_params(10, 10, 0.2);
  SimOptions opts;
  opts.snapshot_times = {1, 2, 3, 10, 20};
  const auto with = sample_trajectory(m, Policy::Patient2, 20, 8, opts);
  const auto without = sample_trajectory(m, Policy::Patient2, 20, 8);
  CHECK(same_logs(with.first, without.first));
  CHECK(with.first.pool_snapshots.size() == 5);
}

TEST_CASE("run_replications with one replication equals a single trajectory") {
  const auto m = validate_params(10, 7, 0.2);
  const auto single = sample_trajectory(m, Policy::Patient2, 25, 17).second;
  const auto reps = run_replications(m, Policy::Patient2, 25, 1, 17);
  CHECK(reps.loss_a == single.loss_a);
  CHECK(reps.loss_b == single.loss_b);
  CHECK(reps.loss_total == single.loss_total);
  CHECK(reps.se_a == 0.0);
  CHECK(reps.se_total == 0.0);
  CHECK_THROWS_AS(run_replications(m, Policy::Patient2, 25, 0, 17), Error);
}

TEST_CASE("aggregate: mean and standard error") {
  LossReport a, b, c;
  a.loss_a = 0.1;
  b.loss_a = 0.2;
  c.loss_a = 0.6;
  a.arrived_a = 3;
  b.arrived_a = 4;
  c.arrived_a = 5;
  const LossReport xs[] = {a, b, c};
  const auto agg = aggregate(xs);
  CHECK(agg.loss_a == doctest::Approx(0.3));
  // sample sd = sqrt(((0.2)^2 + (0.1)^2 + (0.3)^2) / 2) = sqrt(0.07)
  CHECK(agg.se_a == doctest::Approx(std::sqrt(0.07) / std::sqrt(3.0)));
  CHECK(agg.arrived_a == 12);
  CHECK(agg.replications == 3);
}

TEST_CASE("loss_total is the arrival-weighted average of side losses") {
  const auto m = validate_params(20, 5, 0.2);
  const auto rep = sample_trajectory(m, Policy::Greedy2, 50, 3).second;
  CHECK(rep.loss_total == doctest::Approx((20 * rep.loss_a + 5 * rep.loss_b) / 25));
  CHECK(rep.loss_a == doctest::Approx(rep.perished_a / (20.0 * 50)));
}

TEST_CASE("Greedy2 simulated loss agrees with the chain") {
  const auto m = validate_params(20, 20, 0.25);
  const auto sim = run_replications(m, Policy::Greedy2, 50, 60, 1, 5.0);
  const auto pi = stationary_distribution(Policy::Greedy2, m, default_grid(m));
  const auto f = stationary_loss(Policy::Greedy2, m, pi);
  CAPTURE(sim.loss_total);
  CAPTURE(f.loss_total);
  CHECK(std::abs(sim.loss_total - f.loss_total) < 3 * sim.se_total);
}

TEST_CASE("bound sandwich and Patient2 < Greedy2 at lambda=200, p=0.025") {
  const auto m = validate_params(200, 200, 0.025);
  const Policy both[] = {Policy::Greedy2, Policy::Patient2};
  const auto res = coupled_replications(m, 200, 0.0, 100, 7, both, false);
  const auto& g2 = res.policies[0];
  const auto& p2 = res.policies[1];
  const auto b = all_bounds(m);
  CAPTURE(g2.loss_total);
  CAPTURE(p2.loss_total);
  CHECK(g2.loss_total >= b.opt_lower);
  CHECK(g2.loss_total <= b.greedy2_upper_total);
  CHECK(p2.loss_total < g2.loss_total);
}

TEST_CASE("omniscient: single feasible pair is matched") {
  const double p = 1.0 - 1e-12;
  REQUIRE(edge_coin(derive_seed({42, 0}, Stream::Coins), 0, 1, p));
  const auto r = manual_realization(p, {agent(0, Side::U, 0, 2), agent(1, Side::V, 1, 3)});
  const auto log = run_omniscient(r);
  const auto rep = loss_report(log);
  CHECK(log.edges.size() == 1);
  CHECK(rep.matched_a == 1);
  CHECK(rep.matched_b == 1);
  CHECK(rep.perished_a + rep.perished_b == 0);
  CHECK(log.agents[0].outcome.partner == 1);
  CHECK(log.agents[0].outcome.time == 1.0);
}

TEST_CASE("omniscient: disjoint intervals never connect") {
  const double p = 1.0 - 1e-12;
  const auto r = manual_realization(p, {agent(0, Side::U, 0, 1), agent(1, Side::V, 2, 3)});
  const auto log = run_omniscient(r);
  const auto rep = loss_report(log);
  CHECK(log.edges.empty());
  CHECK(rep.perished_a == 1);
  CHECK(rep.perished_b == 1);
}

TEST_CASE("omniscient: uses the future to beat greedy on a path") {
  // u0 overlaps v1 and v2; u3 arrives later and overlaps only v2.
  // Greedy matches u0 with whichever V comes first; OMN pairs u0-v1, u3-v2.
  const double p = 1.0 - 1e-12;
  const auto r = manual_realization(p, {agent(0, Side::U, 0.0, 4.0), agent(1, Side::V, 0.5, 1.5),
                                        agent(2, Side::V, 1.0, 4.0), agent(3, Side::U, 2.0, 4.5)});
  const auto rep = loss_report(run_omniscient(r));
  CHECK(rep.matched_a == 2);
}

TEST_CASE("omniscient dominates every coupled online policy") {
  const auto m = validate_params(50, 50, 0.1);
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const Realization r = generate_realization(m, 100, {seed, 0});
    const auto omn = loss_report(run_omniscient(r));
    check_matching(run_omniscient(r));
    for (Policy policy : kMatchingPolicies) {
      CHECK(matched_count(omn) >= matched_count(loss_report(run_policy(r, policy))));
    }
  }
}

TEST_CASE("omniscient loss is above the OMN lower bound") {
  const auto m = validate_params(50, 50, 0.1);
  const Policy none[] = {Policy::Inactive};
  const auto res = coupled_replications(m, 100, 0.0, 20, 3, none, true);
  const auto b = all_bounds(m);
  CHECK(res.omniscient.loss_total >= b.omn_lower - 3 * res.omniscient.se_total);
}

TEST_CASE("coupling dominance against the inactive chain") {
  const auto m = validate_params(50, 50, 0.1);
  std::vector<double> times;
  for (double t = 0; t <= 50; t += 0.25) times.push_back(t);
  const Policy ps[] = {Policy::Inactive, Policy::Greedy2, Policy::Patient2, Policy::Greedy1,
                       Policy::Patient1};
  SimOptions opts;
  opts.snapshot_times = times;
  const auto runs = coupled_run(m, 50, 9, ps, opts);
  const auto& inactive = runs[0].first.pool_snapshots;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto& snaps = runs[i].first.pool_snapshots;
    REQUIRE(snaps.size() == inactive.size());
    for (std::size_t s = 0; s < snaps.size(); ++s) {
      CHECK(snaps[s].a <= inactive[s].a);
      CHECK(snaps[s].b <= inactive[s].b);
    }
  }
  // All coupled runs share arrivals and lifetimes.
  for (std::size_t i = 1; i < runs.size(); ++i) {
    CHECK(runs[i].second.arrived_a == runs[0].second.arrived_a);
    CHECK(runs[i].first.agents.back().criticality_time == runs[0].first.agents.back().criticality_time);
  }
}

TEST_CASE("pool_size_timeseries bookkeeping") {
  const auto empty = run_policy(manual_realization(0.5, {}), Policy::Inactive);
  const double t0[] = {0.0, 2.5};
  for (const auto& s : pool_size_timeseries(empty, t0)) {
    CHECK(s.a == 0);
    CHECK(s.b == 0);
  }

  const auto one = run_policy(manual_realization(0.5, {agent(0, Side::U, 1.0, 2.5)}), Policy::Inactive);
  const double t[] = {0.5, 1.0, 2.0, 2.5, 3.0};
  const auto snaps = pool_size_timeseries(one, t);
  CHECK(snaps[0].a == 0);
  CHECK(snaps[1].a == 1);
  CHECK(snaps[2] == PoolSnapshot{2.0, 1, 0});
  CHECK(snaps[3].a == 0);
  CHECK(snaps[4].a == 0);

  const double bad[] = {6.0};
  try {
    pool_size_timeseries(one, bad);
    FAIL("expected TimeOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TimeOutOfRange);
  }
  const double negative[] = {-0.1};
  CHECK_THROWS_AS(pool_size_timeseries(one, negative), Error);
}

TEST_CASE("Greedy2 time-average pool size matches the loss rate") {
  const auto m = validate_params(20, 20, 0.25);
  const double T = 500, burn = 20;
  std::vector<double> times;
  const double dt = 0.02;
  for (double t = burn; t <= T; t += dt) times.push_back(t);
  SimOptions opts;
  opts.record_edges = false;
  opts.snapshot_times = times;
  const auto [log, rep] = sample_trajectory(m, Policy::Greedy2, T, 21, opts);
  double area = 0;
  for (const auto& s : log.pool_snapshots) area += static_cast<double>(s.a) * dt;
  const double avg_a = area / (T - burn);
  const double loss_a = loss_report(log, burn).loss_a;
  CHECK(avg_a / 20.0 == doctest::Approx(loss_a).epsilon(0.1));
}

TEST_CASE("inactive pool means follow (1 - e^-t) lambda") {
  const auto m = validate_params(25, 10, 0.1);
  const double times[] = {0.25, 1.0, 3.0};
  const auto moments = mean_pool_sizes(m, Policy::Inactive, times, 400, 12);
  for (const auto& mo : moments) {
    const double scale = 1.0 - std::exp(-mo.time);
    CAPTURE(mo.time);
    CHECK(std::abs(mo.mean_a - scale * 25) < 3 * mo.se_a);
    CHECK(std::abs(mo.mean_b - scale * 10) < 3 * mo.se_b);
  }
}

TEST_CASE("burn-in window accounting") {
  const auto m = validate_params(10, 10, 0.2);
  const auto [log, full] = sample_trajectory(m, Policy::Patient2, 40, 6);
  const auto windowed = loss_report(log, 10.0);
  std::int64_t lost = 0;
  for (const Agent& a : log.agents) {
    if (a.side == Side::U && a.outcome.kind == Outcome::Kind::Perished && a.outcome.time >= 10.0) ++lost;
  }
  CHECK(windowed.loss_a == doctest::Approx(lost / (10.0 * 30.0)));
  CHECK(windowed.perished_a == full.perished_a);
  CHECK_THROWS_AS(loss_report(log, 40.0), Error);
}

}  // TEST_SUITE
