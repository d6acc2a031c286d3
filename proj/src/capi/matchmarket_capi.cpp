#include "matchmarket/matchmarket.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "bounds.hpp"
#include "ctmc.hpp"
#include "diagnostics.hpp"
#include "error.hpp"
#include "event_sim.hpp"
#include "market.hpp"

namespace mm = matchmarket;

struct mm_event_log {
  mm::EventLog log;
};

struct mm_distribution {
  mm::PoolDistribution dist;
};

namespace {

thread_local std::string g_last_error;

mm_status status_of(mm::ErrorCode code) {
  switch (code) {
    case mm::ErrorCode::NonPositiveRate: return MM_ERR_NON_POSITIVE_RATE;
    case mm::ErrorCode::ProbabilityOutOfRange: return MM_ERR_PROBABILITY_OUT_OF_RANGE;
    case mm::ErrorCode::HorizonNonPositive: return MM_ERR_HORIZON_NON_POSITIVE;
    case mm::ErrorCode::TimeOutOfRange: return MM_ERR_TIME_OUT_OF_RANGE;
    case mm::ErrorCode::GridTooSmall: return MM_ERR_GRID_TOO_SMALL;
    case mm::ErrorCode::SolverDiverged: return MM_ERR_SOLVER_DIVERGED;
    case mm::ErrorCode::PolicyMismatch: return MM_ERR_POLICY_MISMATCH;
    case mm::ErrorCode::GridMismatch: return MM_ERR_GRID_MISMATCH;
    case mm::ErrorCode::NotConvergedWithinBudget: return MM_ERR_NOT_CONVERGED;
    case mm::ErrorCode::InvalidArgument: return MM_ERR_INVALID_ARGUMENT;
  }
  return MM_ERR_INTERNAL;
}

mm_status fail(mm_status status, const char* message) {
  g_last_error = message;
  return status;
}

template <typename F>
mm_status guarded(F&& body) {
  try {
    body();
    return MM_OK;
  } catch (const mm::Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(MM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MM_ERR_INTERNAL, "unknown error");
  }
}

template <typename... Ptrs>
bool any_null(const Ptrs*... ptrs) {
  return ((ptrs == nullptr) || ...);
}

#define MM_REQUIRE(...)                                                  \
  do {                                                                   \
    if (any_null(__VA_ARGS__)) return fail(MM_ERR_NULL_POINTER, "null pointer argument"); \
  } while (0)

mm::Policy to_policy(mm_policy p) {
  switch (p) {
    case MM_GREEDY2: return mm::Policy::Greedy2;
    case MM_PATIENT2: return mm::Policy::Patient2;
    case MM_GREEDY1: return mm::Policy::Greedy1;
    case MM_PATIENT1: return mm::Policy::Patient1;
    case MM_INACTIVE: return mm::Policy::Inactive;
  }
  throw mm::Error(mm::ErrorCode::InvalidArgument, "unknown policy value");
}

mm_policy from_policy(mm::Policy p) {
  switch (p) {
    case mm::Policy::Greedy2: return MM_GREEDY2;
    case mm::Policy::Patient2: return MM_PATIENT2;
    case mm::Policy::Greedy1: return MM_GREEDY1;
    case mm::Policy::Patient1: return MM_PATIENT1;
    case mm::Policy::Inactive: return MM_INACTIVE;
  }
  return MM_INACTIVE;
}

mm::MarketParams to_params(const mm_params* p) {
  return mm::validate_params(p->lambda_a, p->lambda_b, p->p);
}

mm_params from_params(const mm::MarketParams& p) { return {p.lambda_a(), p.lambda_b(), p.p()}; }

mm::Grid to_grid(mm_grid g) {
  if (g.a_max < 1 || g.b_max < 1) {
    throw mm::Error(mm::ErrorCode::InvalidArgument, "grid bounds must be at least 1");
  }
  return {g.a_max, g.b_max};
}

mm_loss_report from_report(const mm::LossReport& r) {
  mm_loss_report o{};
  o.loss_a = r.loss_a;
  o.loss_b = r.loss_b;
  o.loss_total = r.loss_total;
  o.se_a = r.se_a;
  o.se_b = r.se_b;
  o.se_total = r.se_total;
  o.arrived_a = r.arrived_a;
  o.arrived_b = r.arrived_b;
  o.matched_a = r.matched_a;
  o.matched_b = r.matched_b;
  o.perished_a = r.perished_a;
  o.perished_b = r.perished_b;
  o.remaining_a = r.remaining_a;
  o.remaining_b = r.remaining_b;
  o.replications = r.replications;
  o.window_start = r.window_start;
  o.zero_arrivals = r.zero_arrivals ? 1 : 0;
  return o;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::optional<double> opt(const double* x) {
  return x ? std::optional<double>(*x) : std::nullopt;
}

std::optional<double> opt_nonneg(double x) {
  return x >= 0.0 ? std::optional<double>(x) : std::nullopt;
}

}  // namespace

extern "C" {

const char* mm_last_error(void) { return g_last_error.c_str(); }

const char* mm_status_name(mm_status status) {
  switch (status) {
    case MM_OK: return "Ok";
    case MM_ERR_NON_POSITIVE_RATE: return "NonPositiveRate";
    case MM_ERR_PROBABILITY_OUT_OF_RANGE: return "ProbabilityOutOfRange";
    case MM_ERR_HORIZON_NON_POSITIVE: return "HorizonNonPositive";
    case MM_ERR_TIME_OUT_OF_RANGE: return "TimeOutOfRange";
    case MM_ERR_GRID_TOO_SMALL: return "GridTooSmall";
    case MM_ERR_SOLVER_DIVERGED: return "SolverDiverged";
    case MM_ERR_POLICY_MISMATCH: return "PolicyMismatch";
    case MM_ERR_GRID_MISMATCH: return "GridMismatch";
    case MM_ERR_NOT_CONVERGED: return "NotConvergedWithinBudget";
    case MM_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case MM_ERR_NULL_POINTER: return "NullPointer";
    case MM_ERR_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* mm_policy_name(mm_policy policy) {
  switch (policy) {
    case MM_GREEDY2:
    case MM_PATIENT2:
    case MM_GREEDY1:
    case MM_PATIENT1:
    case MM_INACTIVE:
      return mm::to_string(to_policy(policy)).data();
  }
  return "unknown";
}

mm_status mm_parse_policy(const char* name, mm_policy* out) {
  MM_REQUIRE(name, out);
  const auto p = mm::parse_policy(name);
  if (!p) return fail(MM_ERR_INVALID_ARGUMENT, (std::string("unknown policy '") + name + "'").c_str());
  *out = from_policy(*p);
  return MM_OK;
}

void mm_string_free(char* s) { std::free(s); }

mm_status mm_validate_params(double lambda_a, double lambda_b, double p, mm_params* out) {
  MM_REQUIRE(out);
  return guarded([&] { *out = from_params(mm::validate_params(lambda_a, lambda_b, p)); });
}

mm_status mm_params_from_densities(double d_a, double d_b, double p, mm_params* out) {
  MM_REQUIRE(out);
  return guarded([&] { *out = from_params(mm::from_densities(d_a, d_b, p)); });
}

mm_status mm_params_densities(const mm_params* params, mm_densities* out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    const auto d = mm::densities(to_params(params));
    *out = {d.d_a, d.d_b, d.delta};
  });
}

mm_status mm_sample_trajectory(const mm_params* params, mm_policy policy, double horizon,
                               uint64_t seed, mm_event_log** out_log, mm_loss_report* out_report) {
  MM_REQUIRE(params, out_log, out_report);
  return guarded([&] {
    auto [log, report] = mm::sample_trajectory(to_params(params), to_policy(policy), horizon, seed);
    *out_log = new mm_event_log{std::move(log)};
    *out_report = from_report(report);
  });
}

mm_status mm_omniscient_trajectory(const mm_params* params, double horizon, uint64_t seed,
                                   mm_event_log** out_log, mm_loss_report* out_report) {
  MM_REQUIRE(params, out_log, out_report);
  return guarded([&] {
    auto [log, report] = mm::omniscient_trajectory(to_params(params), horizon, seed);
    *out_log = new mm_event_log{std::move(log)};
    *out_report = from_report(report);
  });
}

void mm_event_log_free(mm_event_log* log) { delete log; }

size_t mm_event_log_agent_count(const mm_event_log* log) {
  return log ? log->log.agents.size() : 0;
}

mm_status mm_event_log_agent(const mm_event_log* log, size_t index, mm_agent* out) {
  MM_REQUIRE(log, out);
  if (index >= log->log.agents.size()) return fail(MM_ERR_INVALID_ARGUMENT, "agent index out of range");
  const mm::Agent& a = log->log.agents[index];
  out->id = a.id;
  out->side = a.side == mm::Side::U ? MM_SIDE_U : MM_SIDE_V;
  out->arrival_time = a.arrival_time;
  out->criticality_time = a.criticality_time;
  switch (a.outcome.kind) {
    case mm::Outcome::Kind::Remaining: out->outcome = MM_REMAINING; break;
    case mm::Outcome::Kind::Matched: out->outcome = MM_MATCHED; break;
    case mm::Outcome::Kind::Perished: out->outcome = MM_PERISHED; break;
  }
  out->partner = a.outcome.partner;
  out->outcome_time = a.outcome.time;
  return MM_OK;
}

size_t mm_event_log_edge_count(const mm_event_log* log) { return log ? log->log.edges.size() : 0; }

mm_status mm_event_log_edge(const mm_event_log* log, size_t index, uint32_t* u_id, uint32_t* v_id) {
  MM_REQUIRE(log, u_id, v_id);
  if (index >= log->log.edges.size()) return fail(MM_ERR_INVALID_ARGUMENT, "edge index out of range");
  *u_id = log->log.edges[index].first;
  *v_id = log->log.edges[index].second;
  return MM_OK;
}

mm_status mm_pool_size_timeseries(const mm_event_log* log, const double* times, size_t n,
                                  mm_pool_snapshot* out) {
  MM_REQUIRE(log);
  if (n == 0) return MM_OK;
  MM_REQUIRE(times, out);
  return guarded([&] {
    const auto snaps = mm::pool_size_timeseries(log->log, std::span<const double>(times, n));
    for (size_t i = 0; i < n; ++i) out[i] = {snaps[i].time, snaps[i].a, snaps[i].b};
  });
}

mm_status mm_run_replications(const mm_params* params, mm_policy policy, double horizon,
                              size_t n_reps, uint64_t seed, double burn_in, mm_loss_report* out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    *out = from_report(
        mm::run_replications(to_params(params), to_policy(policy), horizon, n_reps, seed, burn_in));
  });
}

mm_status mm_omniscient_loss(const mm_params* params, double horizon, uint64_t seed,
                             mm_loss_report* out) {
  MM_REQUIRE(params, out);
  return guarded([&] { *out = from_report(mm::omniscient_loss(to_params(params), horizon, seed)); });
}

mm_status mm_coupled_replications(const mm_params* params, double horizon, double burn_in,
                                  size_t n_reps, uint64_t seed, const mm_policy* policies,
                                  size_t n_policies, int include_omniscient,
                                  mm_loss_report* out_policies, mm_loss_report* out_omniscient) {
  MM_REQUIRE(params);
  if (n_policies > 0) MM_REQUIRE(policies, out_policies);
  if (include_omniscient) MM_REQUIRE(out_omniscient);
  return guarded([&] {
    std::vector<mm::Policy> ps;
    for (size_t i = 0; i < n_policies; ++i) ps.push_back(to_policy(policies[i]));
    const auto res = mm::coupled_replications(to_params(params), horizon, burn_in, n_reps, seed, ps,
                                              include_omniscient != 0);
    for (size_t i = 0; i < n_policies; ++i) out_policies[i] = from_report(res.policies[i]);
    if (include_omniscient) *out_omniscient = from_report(res.omniscient);
  });
}

mm_status mm_transition_rates(mm_policy policy, const mm_params* params, int k, int j,
                              mm_rate_entry* out, size_t capacity, size_t* count) {
  MM_REQUIRE(params, out, count);
  if (k < 0 || j < 0) return fail(MM_ERR_INVALID_ARGUMENT, "state coordinates must be nonnegative");
  return guarded([&] {
    const auto rates = mm::transition_rates(to_policy(policy), to_params(params), {k, j});
    if (rates.size() > capacity) {
      throw mm::Error(mm::ErrorCode::InvalidArgument, "output capacity too small for rate list");
    }
    for (size_t i = 0; i < rates.size(); ++i) {
      out[i] = {rates[i].from.k, rates[i].from.j, rates[i].to.k, rates[i].to.j, rates[i].rate};
    }
    *count = rates.size();
  });
}

mm_status mm_default_grid(const mm_params* params, mm_grid* out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    const auto g = mm::default_grid(to_params(params));
    *out = {g.a_max, g.b_max};
  });
}

void mm_solve_options_default(mm_solve_options* out) {
  if (out == nullptr) return;
  const mm::SolveOptions d;
  out->leak_threshold = d.leak_threshold;
  out->method = MM_SOLVE_AUTO;
  out->direct_max_states = d.direct_max_states;
  out->step_tolerance = d.step_tolerance;
  out->residual_tolerance = d.residual_tolerance;
  out->max_iterations = d.max_iterations;
}

mm_status mm_stationary_distribution(mm_policy policy, const mm_params* params, mm_grid grid,
                                     const mm_solve_options* options, mm_distribution** out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    mm::SolveOptions o;
    if (options) {
      o.leak_threshold = options->leak_threshold;
      switch (options->method) {
        case MM_SOLVE_AUTO: o.method = mm::SolveMethod::Auto; break;
        case MM_SOLVE_DIRECT: o.method = mm::SolveMethod::Direct; break;
        case MM_SOLVE_POWER: o.method = mm::SolveMethod::Power; break;
        default: throw mm::Error(mm::ErrorCode::InvalidArgument, "unknown solve method");
      }
      o.direct_max_states = options->direct_max_states;
      o.step_tolerance = options->step_tolerance;
      o.residual_tolerance = options->residual_tolerance;
      o.max_iterations = options->max_iterations;
    }
    *out = new mm_distribution{
        mm::stationary_distribution(to_policy(policy), to_params(params), to_grid(grid), o)};
  });
}

mm_status mm_empirical_distribution(const mm_params* params, mm_policy policy, double t,
                                    size_t n_reps, uint64_t seed, mm_grid grid,
                                    mm_distribution** out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    *out = new mm_distribution{mm::empirical_distribution(to_params(params), to_policy(policy), t,
                                                          n_reps, seed, to_grid(grid))};
  });
}

void mm_distribution_free(mm_distribution* dist) { delete dist; }

mm_grid mm_distribution_grid(const mm_distribution* dist) {
  if (dist == nullptr) return {0, 0};
  return {dist->dist.grid.a_max, dist->dist.grid.b_max};
}

double mm_distribution_leak(const mm_distribution* dist) { return dist ? dist->dist.leak : 0.0; }

mm_status mm_distribution_prob(const mm_distribution* dist, int k, int j, double* out) {
  MM_REQUIRE(dist, out);
  if (!dist->dist.grid.contains({k, j})) return fail(MM_ERR_INVALID_ARGUMENT, "state outside grid");
  *out = dist->dist.at(k, j);
  return MM_OK;
}

const double* mm_distribution_data(const mm_distribution* dist, size_t* n) {
  if (dist == nullptr) {
    if (n) *n = 0;
    return nullptr;
  }
  if (n) *n = dist->dist.mass.size();
  return dist->dist.mass.data();
}

mm_status mm_distribution_to_csv(const mm_distribution* dist, char** out) {
  MM_REQUIRE(dist, out);
  return guarded([&] { *out = dup_string(mm::to_csv(dist->dist)); });
}

mm_status mm_stationary_loss(mm_policy policy, const mm_params* params, const mm_distribution* dist,
                             mm_stationary_functionals* out) {
  MM_REQUIRE(params, dist, out);
  return guarded([&] {
    const auto f = mm::stationary_loss(to_policy(policy), to_params(params), dist->dist);
    *out = {f.e_a, f.e_b, f.e_a_geo, f.e_b_geo, f.loss_a, f.loss_b, f.loss_total};
  });
}

mm_status mm_tv_distance(const mm_distribution* d1, const mm_distribution* d2, int full_sum,
                         double* out) {
  MM_REQUIRE(d1, d2, out);
  return guarded([&] {
    *out = mm::tv_distance(d1->dist, d2->dist,
                           full_sum ? mm::TvConvention::FullSum : mm::TvConvention::Half);
  });
}

mm_status mm_estimate_mixing_time(const mm_params* params, mm_policy policy, double epsilon,
                                  size_t n_reps, uint64_t seed, mm_grid grid,
                                  mm_mixing_estimate* out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    const auto e = mm::estimate_mixing_time(to_params(params), to_policy(policy), epsilon, n_reps,
                                            seed, to_grid(grid));
    *out = {e.time, e.resolution, e.tv};
  });
}

mm_status mm_solve_characteristic_root(double lhs, double other, double p, double* out) {
  MM_REQUIRE(out);
  return guarded([&] { *out = mm::solve_characteristic_root(lhs, other, p); });
}

mm_status mm_solve_roots(const mm_params* params, const double* sigma_a, const double* sigma_b,
                         mm_roots* out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    const auto r = mm::solve_roots(to_params(params), opt(sigma_a), opt(sigma_b));
    *out = mm_roots{};
    out->k2 = r.k2;
    out->l2 = r.l2;
    out->k1 = r.k1;
    out->sigma_a = r.sigma_a;
    out->sigma_b = r.sigma_b;
    auto put = [](const std::optional<double>& v, int& has, double& value) {
      has = v.has_value() ? 1 : 0;
      value = v.value_or(0.0);
    };
    put(r.k2_lower, out->has_k2_lower, out->k2_lower);
    put(r.l2_lower, out->has_l2_lower, out->l2_lower);
    put(r.k1_lower, out->has_k1_lower, out->k1_lower);
    put(r.k1_upper, out->has_k1_upper, out->k1_upper);
    put(r.l1, out->has_l1, out->l1);
  });
}

mm_status mm_all_bounds(const mm_params* params, mm_bounds* out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    const auto b = mm::all_bounds(to_params(params));
    *out = mm_bounds{};
    out->greedy2_upper_a = b.greedy2_upper_a;
    out->greedy2_upper_b = b.greedy2_upper_b;
    out->greedy2_upper_total = b.greedy2_upper_total;
    out->patient2_upper_a = b.patient2_upper_a;
    out->patient2_upper_b = b.patient2_upper_b;
    out->patient2_upper_total = b.patient2_upper_total;
    out->patient2_balanced_exponent = b.patient2_balanced_exponent;
    out->alg1_upper_a = b.alg1_upper_a;
    out->alg1_upper_b = b.alg1_upper_b;
    out->alg1_upper_total = b.alg1_upper_total;
    out->opt_lower = b.opt_lower;
    out->omn_lower = b.omn_lower;
    out->greedy1_lower = b.greedy1_lower;
    out->patient1_lower = b.patient1_lower;
    out->delta_lower = b.delta_lower;
    out->two_sided_in_regime = b.two_sided_in_regime;
    out->one_sided_in_regime = b.one_sided_in_regime;
    out->swapped_sides = b.swapped_sides;
  });
}

mm_status mm_policy_bounds(const mm_params* params, mm_policy policy, double* upper,
                           double* lower) {
  MM_REQUIRE(params, upper, lower);
  return guarded([&] {
    const auto b = mm::all_bounds(to_params(params));
    *upper = mm::policy_upper_bound(b, to_policy(policy));
    *lower = mm::policy_lower_bound(b, to_policy(policy));
  });
}

mm_status mm_bounds_json(const mm_params* params, const double* sigma_a, const double* sigma_b,
                         int roots_only, char** out) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    const auto mp = to_params(params);
    const auto roots = mm::solve_roots(mp, opt(sigma_a), opt(sigma_b));
    nlohmann::json j;
    if (roots_only) {
      j = mm::to_json(roots);
    } else {
      j = mm::to_json(mm::all_bounds(mp));
      j["roots"] = mm::to_json(roots);
      j["sandwich_checks"] = mm::to_json(mm::check_root_sandwiches(mp, roots));
    }
    *out = dup_string(j.dump(2));
  });
}

mm_status mm_concentration_report_json(mm_policy policy, const mm_params* params,
                                       const mm_distribution* dist,
                                       const mm_concentration_options* options, char** out,
                                       int* all_pass) {
  MM_REQUIRE(params, dist, out);
  return guarded([&] {
    mm::ConcentrationOptions o;
    if (options) {
      if (options->threshold > 0.0) o.threshold = options->threshold;
      o.sigma_a = opt_nonneg(options->sigma_a);
      o.sigma_b = opt_nonneg(options->sigma_b);
      o.sigma_sum = opt_nonneg(options->sigma_sum);
      o.sigma_diff = opt_nonneg(options->sigma_diff);
    }
    const auto report = mm::concentration_report(to_policy(policy), to_params(params), dist->dist, o);
    if (all_pass) *all_pass = report.all_pass() ? 1 : 0;
    *out = dup_string(mm::to_json(report).dump(2));
  });
}

mm_status mm_compute_balance_residuals(const mm_distribution* dist, mm_policy policy,
                               const mm_params* params, mm_balance_residuals* out) {
  MM_REQUIRE(dist, params, out);
  return guarded([&] {
    const auto r = mm::balance_residuals(dist->dist, to_policy(policy), to_params(params));
    out->vertical = r.vertical;
    out->horizontal = r.horizontal;
    out->has_diagonal = r.diagonal.has_value() ? 1 : 0;
    out->diagonal = r.diagonal.value_or(0.0);
  });
}

mm_status mm_compare_sim_stationary_json(const mm_params* params, mm_policy policy, double horizon,
                                         double burn_in, size_t n_reps, uint64_t seed,
                                         mm_grid grid, char** out, double* max_abs_z) {
  MM_REQUIRE(params, out);
  return guarded([&] {
    const auto r = mm::compare_sim_stationary(to_params(params), to_policy(policy), horizon,
                                              burn_in, n_reps, seed, to_grid(grid));
    if (max_abs_z) *max_abs_z = r.max_abs_z();
    *out = dup_string(mm::to_json(r).dump(2));
  });
}

}  // extern "C"
