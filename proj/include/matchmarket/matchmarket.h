#ifndef MATCHMARKET_MATCHMARKET_H
#define MATCHMARKET_MATCHMARKET_H

#include <stddef.h>
#include <stdint.h>

#if defined(MM_BUILDING_LIBRARY)
#define MM_API __attribute__((visibility("default")))
#else
#define MM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every function returns a status; on failure a message is available from
 * mm_last_error() on the calling thread until the next failing call. */
typedef enum mm_status {
  MM_OK = 0,
  MM_ERR_NON_POSITIVE_RATE,
  MM_ERR_PROBABILITY_OUT_OF_RANGE,
  MM_ERR_HORIZON_NON_POSITIVE,
  MM_ERR_TIME_OUT_OF_RANGE,
  MM_ERR_GRID_TOO_SMALL,
  MM_ERR_SOLVER_DIVERGED,
  MM_ERR_POLICY_MISMATCH,
  MM_ERR_GRID_MISMATCH,
  MM_ERR_NOT_CONVERGED,
  MM_ERR_INVALID_ARGUMENT,
  MM_ERR_NULL_POINTER,
  MM_ERR_INTERNAL
} mm_status;

typedef enum mm_policy {
  MM_GREEDY2 = 0,
  MM_PATIENT2,
  MM_GREEDY1,
  MM_PATIENT1,
  MM_INACTIVE
} mm_policy;

typedef struct mm_params {
  double lambda_a;
  double lambda_b;
  double p;
} mm_params;

typedef struct mm_densities {
  double d_a;
  double d_b;
  double delta;
} mm_densities;

typedef struct mm_loss_report {
  double loss_a, loss_b, loss_total;
  double se_a, se_b, se_total;
  int64_t arrived_a, arrived_b;
  int64_t matched_a, matched_b;
  int64_t perished_a, perished_b;
  int64_t remaining_a, remaining_b;
  uint64_t replications;
  double window_start;
  int zero_arrivals;
} mm_loss_report;

typedef enum mm_side { MM_SIDE_U = 0, MM_SIDE_V = 1 } mm_side;
typedef enum mm_outcome { MM_REMAINING = 0, MM_MATCHED, MM_PERISHED } mm_outcome;

typedef struct mm_agent {
  uint32_t id;
  mm_side side;
  double arrival_time;
  double criticality_time;
  mm_outcome outcome;
  uint32_t partner;
  double outcome_time;
} mm_agent;

typedef struct mm_pool_snapshot {
  double time;
  int64_t a;
  int64_t b;
} mm_pool_snapshot;

typedef struct mm_grid {
  int a_max;
  int b_max;
} mm_grid;

typedef struct mm_rate_entry {
  int from_k, from_j;
  int to_k, to_j;
  double rate;
} mm_rate_entry;

typedef enum mm_solve_method { MM_SOLVE_AUTO = 0, MM_SOLVE_DIRECT, MM_SOLVE_POWER } mm_solve_method;

typedef struct mm_solve_options {
  double leak_threshold;
  mm_solve_method method;
  size_t direct_max_states;
  double step_tolerance;
  double residual_tolerance;
  size_t max_iterations;
} mm_solve_options;

typedef struct mm_stationary_functionals {
  double e_a, e_b;
  double e_a_geo, e_b_geo;
  double loss_a, loss_b, loss_total;
} mm_stationary_functionals;

typedef struct mm_mixing_estimate {
  double time;
  double resolution;
  double tv;
} mm_mixing_estimate;

typedef struct mm_roots {
  double k2, l2, k1;
  double sigma_a, sigma_b;
  int has_k2_lower, has_l2_lower, has_k1_lower, has_k1_upper, has_l1;
  double k2_lower, l2_lower, k1_lower, k1_upper, l1;
} mm_roots;

typedef struct mm_bounds {
  double greedy2_upper_a, greedy2_upper_b, greedy2_upper_total;
  double patient2_upper_a, patient2_upper_b, patient2_upper_total;
  double patient2_balanced_exponent;
  double alg1_upper_a, alg1_upper_b, alg1_upper_total;
  double opt_lower, omn_lower, greedy1_lower, patient1_lower, delta_lower;
  int two_sided_in_regime;
  int one_sided_in_regime;
  int swapped_sides;
} mm_bounds;

typedef struct mm_balance_residuals {
  double vertical;
  double horizontal;
  int has_diagonal;
  double diagonal;
} mm_balance_residuals;

/* Negative values mean "use the default". */
typedef struct mm_concentration_options {
  double threshold;
  double sigma_a;
  double sigma_b;
  double sigma_sum;
  double sigma_diff;
} mm_concentration_options;

typedef struct mm_event_log mm_event_log;
typedef struct mm_distribution mm_distribution;

/* Errors and names. */
MM_API const char* mm_last_error(void);
MM_API const char* mm_status_name(mm_status status);
MM_API const char* mm_policy_name(mm_policy policy);
MM_API mm_status mm_parse_policy(const char* name, mm_policy* out);
MM_API void mm_string_free(char* s);

/* Parameters. */
MM_API mm_status mm_validate_params(double lambda_a, double lambda_b, double p, mm_params* out);
MM_API mm_status mm_params_from_densities(double d_a, double d_b, double p, mm_params* out);
MM_API mm_status mm_params_densities(const mm_params* params, mm_densities* out);

/* Simulation. */
MM_API mm_status mm_sample_trajectory(const mm_params* params, mm_policy policy, double horizon,
                                      uint64_t seed, mm_event_log** out_log,
                                      mm_loss_report* out_report);
MM_API mm_status mm_omniscient_trajectory(const mm_params* params, double horizon, uint64_t seed,
                                          mm_event_log** out_log, mm_loss_report* out_report);
MM_API void mm_event_log_free(mm_event_log* log);
MM_API size_t mm_event_log_agent_count(const mm_event_log* log);
MM_API mm_status mm_event_log_agent(const mm_event_log* log, size_t index, mm_agent* out);
MM_API size_t mm_event_log_edge_count(const mm_event_log* log);
MM_API mm_status mm_event_log_edge(const mm_event_log* log, size_t index, uint32_t* u_id,
                                   uint32_t* v_id);
MM_API mm_status mm_pool_size_timeseries(const mm_event_log* log, const double* times, size_t n,
                                         mm_pool_snapshot* out);

MM_API mm_status mm_run_replications(const mm_params* params, mm_policy policy, double horizon,
                                     size_t n_reps, uint64_t seed, double burn_in,
                                     mm_loss_report* out);
MM_API mm_status mm_omniscient_loss(const mm_params* params, double horizon, uint64_t seed,
                                    mm_loss_report* out);
/* out_policies has n_policies slots; out_omniscient may be NULL when
 * include_omniscient is 0. */
MM_API mm_status mm_coupled_replications(const mm_params* params, double horizon, double burn_in,
                                         size_t n_reps, uint64_t seed, const mm_policy* policies,
                                         size_t n_policies, int include_omniscient,
                                         mm_loss_report* out_policies,
                                         mm_loss_report* out_omniscient);

/* Pool-size chain. At most 5 entries are produced. */
MM_API mm_status mm_transition_rates(mm_policy policy, const mm_params* params, int k, int j,
                                     mm_rate_entry* out, size_t capacity, size_t* count);
MM_API mm_status mm_default_grid(const mm_params* params, mm_grid* out);
MM_API void mm_solve_options_default(mm_solve_options* out);
/* options may be NULL. */
MM_API mm_status mm_stationary_distribution(mm_policy policy, const mm_params* params,
                                            mm_grid grid, const mm_solve_options* options,
                                            mm_distribution** out);
MM_API mm_status mm_empirical_distribution(const mm_params* params, mm_policy policy, double t,
                                           size_t n_reps, uint64_t seed, mm_grid grid,
                                           mm_distribution** out);
MM_API void mm_distribution_free(mm_distribution* dist);
MM_API mm_grid mm_distribution_grid(const mm_distribution* dist);
MM_API double mm_distribution_leak(const mm_distribution* dist);
MM_API mm_status mm_distribution_prob(const mm_distribution* dist, int k, int j, double* out);
/* Row-major mass, index k * (b_max + 1) + j; valid while dist lives. */
MM_API const double* mm_distribution_data(const mm_distribution* dist, size_t* n);
MM_API mm_status mm_distribution_to_csv(const mm_distribution* dist, char** out);
MM_API mm_status mm_stationary_loss(mm_policy policy, const mm_params* params,
                                    const mm_distribution* dist, mm_stationary_functionals* out);
MM_API mm_status mm_tv_distance(const mm_distribution* d1, const mm_distribution* d2,
                                int full_sum, double* out);
MM_API mm_status mm_estimate_mixing_time(const mm_params* params, mm_policy policy,
                                         double epsilon, size_t n_reps, uint64_t seed,
                                         mm_grid grid, mm_mixing_estimate* out);

/* Roots and bounds. sigma pointers may be NULL for the defaults. */
MM_API mm_status mm_solve_characteristic_root(double lhs, double other, double p, double* out);
MM_API mm_status mm_solve_roots(const mm_params* params, const double* sigma_a,
                                const double* sigma_b, mm_roots* out);
MM_API mm_status mm_all_bounds(const mm_params* params, mm_bounds* out);
MM_API mm_status mm_policy_bounds(const mm_params* params, mm_policy policy, double* upper,
                                  double* lower);
/* JSON with bounds, roots and sandwich checks, or only the roots. */
MM_API mm_status mm_bounds_json(const mm_params* params, const double* sigma_a,
                                const double* sigma_b, int roots_only, char** out);

/* Diagnostics. options may be NULL. */
MM_API mm_status mm_concentration_report_json(mm_policy policy, const mm_params* params,
                                              const mm_distribution* dist,
                                              const mm_concentration_options* options,
                                              char** out, int* all_pass);
MM_API mm_status mm_compute_balance_residuals(const mm_distribution* dist, mm_policy policy,
                                      const mm_params* params, mm_balance_residuals* out);
MM_API mm_status mm_compare_sim_stationary_json(const mm_params* params, mm_policy policy,
                                                double horizon, double burn_in, size_t n_reps,
                                                uint64_t seed, mm_grid grid, char** out,
                                                double* max_abs_z);

#ifdef __cplusplus
}
#endif

#endif
