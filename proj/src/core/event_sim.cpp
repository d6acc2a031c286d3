#include "event_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

#include "hopcroft_karp.hpp"
#include "parallel.hpp"

namespace matchmarket {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_horizon(double horizon) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    std::ostringstream msg;
    msg << "horizon must be positive and finite, got " << horizon;
    throw Error(ErrorCode::HorizonNonPositive, msg.str());
  }
}

constexpr int index_of(Side s) noexcept { return s == Side::U ? 0 : 1; }
constexpr Side opposite(Side s) noexcept { return s == Side::U ? Side::V : Side::U; }

/// Members of one side's pool with O(1) removal.
class Pool {
 public:
  explicit Pool(std::size_t n_agents) : slot_(n_agents, kAbsent) {}

  void insert(AgentId id) {
    slot_[id] = members_.size();
    members_.push_back(id);
  }
  void erase(AgentId id) {
    const std::size_t at = slot_[id];
    members_[at] = members_.back();
    slot_[members_[at]] = at;
    members_.pop_back();
    slot_[id] = kAbsent;
  }
  bool contains(AgentId id) const { return slot_[id] != kAbsent; }
  const std::vector<AgentId>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }

 private:
  static constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();
  std::vector<AgentId> members_;
  std::vector<std::size_t> slot_;
};

class Simulator {
 public:
  Simulator(const Realization& r, Policy policy, const SimOptions& options)
      : r_(r),
        policy_(policy),
        options_(options),
        coin_key_(derive_seed(r.key, Stream::Coins)),
        tiebreak_(make_engine(r.key, Stream::TieBreak)),
        pools_{Pool(r.agents.size()), Pool(r.agents.size())},
        log_{.params = r.params,
             .policy = policy,
             .omniscient = false,
             .horizon = r.horizon,
             .seed = r.key.seed,
             .agents = r.agents,
             .edges = {},
             .pool_snapshots = {}} {}

  EventLog run() {
    using Entry = std::pair<double, AgentId>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> critical;
    std::size_t next_arrival = 0;
    const auto& agents = log_.agents;

    for (;;) {
      const double t_arrive =
          next_arrival < agents.size() ? agents[next_arrival].arrival_time : kInf;
      while (!critical.empty() && !present(critical.top().second)) critical.pop();
      const double t_critical = critical.empty() ? kInf : critical.top().first;
      const double t = std::min(t_arrive, t_critical);
      if (t > r_.horizon) break;

      if (t_arrive <= t_critical) {
        const AgentId id = static_cast<AgentId>(next_arrival++);
        if (on_arrival(id)) critical.emplace(agents[id].criticality_time, id);
      } else {
        const AgentId id = critical.top().second;
        critical.pop();
        on_critical(id);
      }
      if (options_.check_invariants) check_invariants();
    }

    if (!options_.snapshot_times.empty()) {
      log_.pool_snapshots = pool_size_timeseries(log_, options_.snapshot_times);
    }
    return std::move(log_);
  }

 private:
  bool present(AgentId id) const {
    return pools_[index_of(log_.agents[id].side)].contains(id);
  }

  bool coin(AgentId x, AgentId y) const {
    const bool x_is_u = log_.agents[x].side == Side::U;
    return edge_coin(coin_key_, x_is_u ? x : y, x_is_u ? y : x, r_.params.p());
  }

  void collect_neighbors(AgentId id) {
    neighbors_.clear();
    for (AgentId other : pools_[index_of(opposite(log_.agents[id].side))].members()) {
      if (coin(id, other)) neighbors_.push_back(other);
    }
  }

  void match(AgentId x, AgentId y, double t) {
    auto& ax = log_.agents[x];
    auto& ay = log_.agents[y];
    ax.outcome = {Outcome::Kind::Matched, y, t};
    ay.outcome = {Outcome::Kind::Matched, x, t};
    if (pools_[index_of(ax.side)].contains(x)) pools_[index_of(ax.side)].erase(x);
    if (pools_[index_of(ay.side)].contains(y)) pools_[index_of(ay.side)].erase(y);
  }

  AgentId pick_uniform() {
    std::uniform_int_distribution<std::size_t> pick(0, neighbors_.size() - 1);
    return neighbors_[pick(tiebreak_)];
  }

  void record_edges(AgentId id) {
    const bool is_u = log_.agents[id].side == Side::U;
    for (AgentId other : neighbors_) {
      log_.edges.emplace_back(is_u ? id : other, is_u ? other : id);
    }
  }

  /// Returns true when the arriving agent joins the pool.
  bool on_arrival(AgentId id) {
    const Agent& agent = log_.agents[id];
    const bool greedy = behaviour(policy_, agent.side) == Behaviour::Greedy;
    if (greedy || options_.record_edges) collect_neighbors(id);
    if (options_.record_edges) record_edges(id);
    if (greedy && !neighbors_.empty()) {
      match(id, pick_uniform(), agent.arrival_time);
      return false;
    }
    pools_[index_of(agent.side)].insert(id);
    return true;
  }

  void on_critical(AgentId id) {
    Agent& agent = log_.agents[id];
    if (behaviour(policy_, agent.side) == Behaviour::Patient) {
      collect_neighbors(id);
      if (!neighbors_.empty()) {
        match(id, pick_uniform(), agent.criticality_time);
        return;
      }
    }
    agent.outcome = {Outcome::Kind::Perished, 0, agent.criticality_time};
    pools_[index_of(agent.side)].erase(id);
  }

  void check_invariants() const {
    if (policy_ != Policy::Greedy2) return;
    for (AgentId u : pools_[0].members()) {
      for (AgentId v : pools_[1].members()) {
        if (edge_coin(coin_key_, u, v, r_.params.p())) {
          std::ostringstream msg;
          msg << "Greedy2 pool holds edge (" << u << "," << v << ")";
          throw Error(ErrorCode::InvalidArgument, msg.str());
        }
      }
    }
  }

  const Realization& r_;
  Policy policy_;
  const SimOptions& options_;
  std::uint64_t coin_key_;
  std::mt19937_64 tiebreak_;
  Pool pools_[2];
  std::vector<AgentId> neighbors_;
  EventLog log_;
};

std::vector<double> arrival_times(std::mt19937_64& engine, double rate, double horizon) {
  std::exponential_distribution<double> gap(rate);
  std::vector<double> times;
  for (double t = gap(engine); t <= horizon; t += gap(engine)) times.push_back(t);
  return times;
}

double mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double standard_error(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace

double Agent::departure_time() const noexcept {
  return outcome.kind == Outcome::Kind::Remaining ? kInf : outcome.time;
}

Realization generate_realization(const MarketParams& params, double horizon, StreamKey key) {
  require_horizon(horizon);
  auto arrivals_a = make_engine(key, Stream::ArrivalsA);
  auto arrivals_b = make_engine(key, Stream::ArrivalsB);
  auto lifetimes_a = make_engine(key, Stream::LifetimesA);
  auto lifetimes_b = make_engine(key, Stream::LifetimesB);
  const auto times_u = arrival_times(arrivals_a, params.lambda_a(), horizon);
  const auto times_v = arrival_times(arrivals_b, params.lambda_b(), horizon);

  Realization r{params, horizon, key, {}};
  r.agents.reserve(times_u.size() + times_v.size());
  std::exponential_distribution<double> lifetime(1.0);
  std::size_t iu = 0, iv = 0;
  while (iu < times_u.size() || iv < times_v.size()) {
    const bool take_u = iv == times_v.size() || (iu < times_u.size() && times_u[iu] <= times_v[iv]);
    Agent agent;
    agent.id = static_cast<AgentId>(r.agents.size());
    agent.side = take_u ? Side::U : Side::V;
    agent.arrival_time = take_u ? times_u[iu++] : times_v[iv++];
    agent.criticality_time = agent.arrival_time + lifetime(take_u ? lifetimes_a : lifetimes_b);
    r.agents.push_back(agent);
  }
  return r;
}

EventLog run_policy(const Realization& realization, Policy policy, const SimOptions& options) {
  return Simulator(realization, policy, options).run();
}

EventLog run_omniscient(const Realization& r) {
  EventLog log{.params = r.params,
               .policy = Policy::Inactive,
               .omniscient = true,
               .horizon = r.horizon,
               .seed = r.key.seed,
               .agents = r.agents,
               .edges = {},
               .pool_snapshots = {}};
  const std::uint64_t coin_key = derive_seed(r.key, Stream::Coins);
  const double p = r.params.p();
  auto& agents = log.agents;

  // Left vertices are U agents, right vertices V agents, both in arrival order.
  std::vector<std::int32_t> local(agents.size());
  std::vector<AgentId> u_ids, v_ids;
  for (const Agent& a : agents) {
    auto& ids = a.side == Side::U ? u_ids : v_ids;
    local[a.id] = static_cast<std::int32_t>(ids.size());
    ids.push_back(a.id);
  }

  // Sweep arrivals; an arriving agent overlaps exactly the opposite agents
  // still alive in the no-matching realization.
  std::vector<std::vector<std::int32_t>> adjacency(u_ids.size());
  std::vector<AgentId> alive[2];
  for (const Agent& a : agents) {
    auto& others = alive[index_of(opposite(a.side))];
    std::erase_if(others, [&](AgentId o) { return agents[o].criticality_time <= a.arrival_time; });
    for (AgentId o : others) {
      const AgentId u = a.side == Side::U ? a.id : o;
      const AgentId v = a.side == Side::U ? o : a.id;
      if (edge_coin(coin_key, u, v, p)) {
        log.edges.emplace_back(u, v);
        adjacency[local[u]].push_back(local[v]);
      }
    }
    alive[index_of(a.side)].push_back(a.id);
  }

  const BipartiteMatching m = hopcroft_karp(v_ids.size(), adjacency);
  for (std::size_t l = 0; l < u_ids.size(); ++l) {
    if (m.left_partner[l] == kUnmatched) continue;
    Agent& u = agents[u_ids[l]];
    Agent& v = agents[v_ids[m.left_partner[l]]];
    const double t = std::max(u.arrival_time, v.arrival_time);
    u.outcome = {Outcome::Kind::Matched, v.id, t};
    v.outcome = {Outcome::Kind::Matched, u.id, t};
  }
  for (Agent& a : agents) {
    if (a.outcome.kind == Outcome::Kind::Matched) continue;
    if (a.criticality_time <= r.horizon) a.outcome = {Outcome::Kind::Perished, 0, a.criticality_time};
  }
  return log;
}

LossReport loss_report(const EventLog& log, double window_start) {
  if (!(window_start >= 0.0 && window_start < log.horizon)) {
    std::ostringstream msg;
    msg << "burn-in " << window_start << " must lie in [0, horizon=" << log.horizon << ")";
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  LossReport rep;
  rep.window_start = window_start;
  std::int64_t lost_a = 0, lost_b = 0;
  for (const Agent& a : log.agents) {
    const bool u = a.side == Side::U;
    ++(u ? rep.arrived_a : rep.arrived_b);
    switch (a.outcome.kind) {
      case Outcome::Kind::Matched: ++(u ? rep.matched_a : rep.matched_b); break;
      case Outcome::Kind::Remaining: ++(u ? rep.remaining_a : rep.remaining_b); break;
      case Outcome::Kind::Perished:
        ++(u ? rep.perished_a : rep.perished_b);
        if (a.outcome.time >= window_start) ++(u ? lost_a : lost_b);
        break;
    }
  }
  rep.zero_arrivals = log.agents.empty();
  if (!rep.zero_arrivals) {
    const double span = log.horizon - window_start;
    const double la = log.params.lambda_a();
    const double lb = log.params.lambda_b();
    rep.loss_a = static_cast<double>(lost_a) / (la * span);
    rep.loss_b = static_cast<double>(lost_b) / (lb * span);
    rep.loss_total = (la * rep.loss_a + lb * rep.loss_b) / (la + lb);
  }
  return rep;
}

LossReport aggregate(std::span<const LossReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to aggregate");
  if (reports.size() == 1) return reports.front();
  LossReport out;
  std::vector<double> la, lb, lt;
  out.zero_arrivals = true;
  for (const LossReport& r : reports) {
    la.push_back(r.loss_a);
    lb.push_back(r.loss_b);
    lt.push_back(r.loss_total);
    out.arrived_a += r.arrived_a;
    out.arrived_b += r.arrived_b;
    out.matched_a += r.matched_a;
    out.matched_b += r.matched_b;
    out.perished_a += r.perished_a;
    out.perished_b += r.perished_b;
    out.remaining_a += r.remaining_a;
    out.remaining_b += r.remaining_b;
    out.zero_arrivals = out.zero_arrivals && r.zero_arrivals;
  }
  out.loss_a = mean(la);
  out.loss_b = mean(lb);
  out.loss_total = mean(lt);
  out.se_a = standard_error(la);
  out.se_b = standard_error(lb);
  out.se_total = standard_error(lt);
  out.replications = reports.size();
  out.window_start = reports.front().window_start;
  return out;
}

std::pair<EventLog, LossReport> sample_trajectory(const MarketParams& params, Policy policy,
                                                  double horizon, std::uint64_t seed,
                                                  const SimOptions& options) {
  const Realization r = generate_realization(params, horizon, {seed, 0});
  EventLog log = run_policy(r, policy, options);
  LossReport report = loss_report(log);
  return {std::move(log), report};
}

LossReport run_replications(const MarketParams& params, Policy policy, double horizon,
                            std::size_t n_reps, std::uint64_t seed, double burn_in) {
  const Policy one[] = {policy};
  return coupled_replications(params, horizon, burn_in, n_reps, seed, one, false).policies.front();
}

std::pair<EventLog, LossReport> omniscient_trajectory(const MarketParams& params, double horizon,
                                                      std::uint64_t seed) {
  EventLog log = run_omniscient(generate_realization(params, horizon, {seed, 0}));
  LossReport report = loss_report(log);
  return {std::move(log), report};
}

LossReport omniscient_loss(const MarketParams& params, double horizon, std::uint64_t seed) {
  return omniscient_trajectory(params, horizon, seed).second;
}

std::vector<std::pair<EventLog, LossReport>> coupled_run(const MarketParams& params,
                                                         double horizon, std::uint64_t seed,
                                                         std::span<const Policy> policies,
                                                         const SimOptions& options) {
  if (policies.empty()) throw Error(ErrorCode::InvalidArgument, "coupled_run needs a policy");
  const Realization r = generate_realization(params, horizon, {seed, 0});
  std::vector<std::pair<EventLog, LossReport>> out;
  for (Policy policy : policies) {
    EventLog log = run_policy(r, policy, options);
    LossReport report = loss_report(log);
    out.emplace_back(std::move(log), report);
  }
  return out;
}

CoupledLosses coupled_replications(const MarketParams& params, double horizon, double burn_in,
                                   std::size_t n_reps, std::uint64_t seed,
                                   std::span<const Policy> policies, bool include_omniscient) {
  require_horizon(horizon);
  if (n_reps == 0) throw Error(ErrorCode::InvalidArgument, "n_reps must be at least 1");
  if (!(burn_in >= 0.0 && burn_in < horizon)) {
    throw Error(ErrorCode::InvalidArgument, "burn-in must lie in [0, horizon)");
  }
  const std::size_t columns = policies.size() + (include_omniscient ? 1 : 0);
  std::vector<LossReport> table(n_reps * columns);
  SimOptions options;
  options.record_edges = false;

  parallel_for(n_reps, [&](std::size_t rep) {
    const Realization r = generate_realization(params, horizon, {seed, rep});
    for (std::size_t c = 0; c < policies.size(); ++c) {
      table[rep * columns + c] = loss_report(run_policy(r, policies[c], options), burn_in);
    }
    if (include_omniscient) {
      table[rep * columns + columns - 1] = loss_report(run_omniscient(r), burn_in);
    }
  });

  CoupledLosses out;
  std::vector<LossReport> column(n_reps);
  for (std::size_t c = 0; c < columns; ++c) {
    for (std::size_t rep = 0; rep < n_reps; ++rep) column[rep] = table[rep * columns + c];
    if (c < policies.size()) {
      out.policies.push_back(aggregate(column));
    } else {
      out.omniscient = aggregate(column);
      out.has_omniscient = true;
    }
  }
  return out;
}

std::vector<PoolSnapshot> pool_size_timeseries(const EventLog& log,
                                               std::span<const double> sample_times) {
  std::vector<double> arrive[2], depart[2];
  for (const Agent& a : log.agents) {
    arrive[index_of(a.side)].push_back(a.arrival_time);
    depart[index_of(a.side)].push_back(a.departure_time());
  }
  for (int s = 0; s < 2; ++s) {
    std::sort(arrive[s].begin(), arrive[s].end());
    std::sort(depart[s].begin(), depart[s].end());
  }
  // Present at t iff arrival <= t < departure.
  auto count = [&](int s, double t) {
    const auto in = std::upper_bound(arrive[s].begin(), arrive[s].end(), t) - arrive[s].begin();
    const auto out = std::upper_bound(depart[s].begin(), depart[s].end(), t) - depart[s].begin();
    return static_cast<std::int64_t>(in - out);
  };
  std::vector<PoolSnapshot> out;
  out.reserve(sample_times.size());
  for (double t : sample_times) {
    if (!(t >= 0.0 && t <= log.horizon)) {
      std::ostringstream msg;
      msg << "sample time " << t << " outside [0, " << log.horizon << "]";
      throw Error(ErrorCode::TimeOutOfRange, msg.str());
    }
    out.push_back({t, count(0, t), count(1, t)});
  }
  return out;
}

std::vector<PoolMoments> mean_pool_sizes(const MarketParams& params, Policy policy,
                                         std::span<const double> times, std::size_t n_reps,
                                         std::uint64_t seed) {
  if (times.empty()) return {};
  if (n_reps == 0) throw Error(ErrorCode::InvalidArgument, "n_reps must be at least 1");
  const double horizon = *std::max_element(times.begin(), times.end());
  require_horizon(horizon);
  std::vector<std::vector<PoolSnapshot>> samples(n_reps);
  SimOptions options;
  options.record_edges = false;
  parallel_for(n_reps, [&](std::size_t rep) {
    const Realization r = generate_realization(params, horizon, {seed, rep});
    samples[rep] = pool_size_timeseries(run_policy(r, policy, options), times);
  });
  std::vector<PoolMoments> out;
  std::vector<double> a(n_reps), b(n_reps);
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::size_t rep = 0; rep < n_reps; ++rep) {
      a[rep] = static_cast<double>(samples[rep][i].a);
      b[rep] = static_cast<double>(samples[rep][i].b);
    }
    out.push_back({times[i], mean(a), standard_error(a), mean(b), standard_error(b)});
  }
  return out;
}

}  // namespace matchmarket
