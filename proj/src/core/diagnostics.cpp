#include "diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace matchmarket {
namespace {

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

/// Mass of {(k, j) : pred(k, j)}.
template <typename Pred>
double mass_where(const PoolDistribution& d, Pred pred) {
  double m = 0.0;
  for (int k = 0; k <= d.grid.a_max; ++k) {
    for (int j = 0; j <= d.grid.b_max; ++j) {
      if (pred(k, j)) m += d.at(k, j);
    }
  }
  return std::clamp(m, 0.0, 1.0);
}

ConcentrationEntry entry(std::string id, std::string region, double measured, double threshold) {
  return {std::move(id), std::move(region), measured, threshold, measured < threshold, false, {}};
}

void require_policy(const PoolDistribution& dist, std::initializer_list<Policy> allowed) {
  if (!dist.policy) return;
  for (Policy p : allowed) {
    if (*dist.policy == p) return;
  }
  throw Error(ErrorCode::PolicyMismatch,
              std::string("check does not apply to a distribution solved for ") +
                  std::string(to_string(*dist.policy)));
}

double z_score(double diff, double se) {
  if (se > 0.0) return diff / se;
  return diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
}

}  // namespace

bool ConcentrationReport::all_pass() const noexcept {
  return std::all_of(entries.begin(), entries.end(),
                     [](const ConcentrationEntry& e) { return e.skipped || e.pass; });
}

std::vector<ConcentrationEntry> check_greedy2_tails(const PoolDistribution& dist,
                                                    const RootSet& roots, double sigma,
                                                    double threshold) {
  require_policy(dist, {Policy::Greedy2});
  const double a_cut = roots.k2 + sigma + 1.0;
  const double b_cut = roots.l2 + sigma + 1.0;
  return {
      entry("greedy2-tail-A", "A >= " + fmt(a_cut), mass_where(dist, [&](int k, int) { return k >= a_cut; }),
            threshold),
      entry("greedy2-tail-B", "B >= " + fmt(b_cut), mass_where(dist, [&](int, int j) { return j >= b_cut; }),
            threshold),
  };
}

std::vector<ConcentrationEntry> check_patient2_region(const PoolDistribution& dist,
                                                      const MarketParams& params,
                                                      const RootSet& roots, double sigma_a,
                                                      double sigma_b, double sigma_sum,
                                                      double sigma_diff, double threshold) {
  require_policy(dist, {Policy::Patient2});
  const double la = params.lambda_a();
  const double lb = params.lambda_b();
  std::vector<ConcentrationEntry> out;

  // Lower roots are taken with the shifts used for the region.
  const double k_low = solve_characteristic_root(la, lb + sigma_b, params.p());
  const double l_low = solve_characteristic_root(lb, la + sigma_a, params.p());
  (void)roots;
  const double a_lo = k_low - sigma_a, a_hi = la + sigma_a;
  const double b_lo = l_low - sigma_b, b_hi = lb + sigma_b;
  out.push_back(entry("patient2-region",
                      "(A,B) outside [" + fmt(a_lo) + "," + fmt(a_hi) + "]x[" + fmt(b_lo) + "," +
                          fmt(b_hi) + "]",
                      mass_where(dist,
                                 [&](int k, int j) {
                                   return !(k >= a_lo && k <= a_hi && j >= b_lo && j <= b_hi);
                                 }),
                      threshold));

  const double sum_cut = (la + lb) / 2.0 - 2.0 - sigma_sum - 1.0;
  out.push_back(entry("patient2-sum", "A+B <= " + fmt(sum_cut),
                      mass_where(dist, [&](int k, int j) { return k + j <= sum_cut; }), threshold));

  const double diff_cut = (la + sigma_a) / 2.0 + sigma_diff;
  ConcentrationEntry diff =
      entry("patient2-diff", "A-B >= " + fmt(diff_cut),
            mass_where(dist, [&](int k, int j) { return k - j >= diff_cut; }), threshold);
  const double da = params.d_a(), db = params.d_b();
  const bool balanced = std::abs(da - db) <= 1e-9 * std::max(da, db);
  if (!(balanced && da >= 3.0 && params.p() < 0.1 && sigma_a <= la)) {
    diff.skipped = true;
    diff.pass = false;
    diff.note = "requires d_a = d_b >= 3, p < 1/10 and 1 <= sigma_a <= lambda_a";
  }
  out.push_back(diff);
  return out;
}

std::vector<ConcentrationEntry> check_1sided_regions(const PoolDistribution& dist,
                                                     const MarketParams& params,
                                                     const RootSet& roots, Policy policy,
                                                     double sigma_a, double sigma_b,
                                                     double threshold) {
  if (policy != Policy::Greedy1 && policy != Policy::Patient1) {
    throw Error(ErrorCode::PolicyMismatch, "1-sided checks need greedy1 or patient1");
  }
  require_policy(dist, {policy});
  const double la = params.lambda_a();
  const double lb = params.lambda_b();
  const double p = params.p();
  const double k1 = roots.k1;
  std::vector<ConcentrationEntry> out;

  if (policy == Policy::Greedy1) {
    const double hi = k1 + sigma_a + 1.0;
    const double lo = k1 - sigma_a - 1.0;
    const double l1 = solve_l1(params, k1, sigma_a);
    const double b_cut = l1 + sigma_b + 1.0;
    out.push_back(entry("greedy1-A-upper", "A >= " + fmt(hi),
                        mass_where(dist, [&](int k, int) { return k >= hi; }), threshold));
    out.push_back(entry("greedy1-A-lower", "A <= " + fmt(lo),
                        mass_where(dist, [&](int k, int) { return k <= lo; }), threshold));
    out.push_back(entry("greedy1-B", "B >= " + fmt(b_cut),
                        mass_where(dist, [&](int, int j) { return j >= b_cut; }), threshold));
    return out;
  }

  const double k_low = solve_characteristic_root(la, lb + sigma_b, p);
  if (lb - sigma_b < 0.0) {
    ConcentrationEntry e = entry("patient1-region", "region undefined", 1.0, threshold);
    e.skipped = true;
    e.note = "sigma_b exceeds lambda_b, upper shifted root undefined";
    out.push_back(e);
    return out;
  }
  const double k_high = solve_characteristic_root(la, lb - sigma_b, p);
  const double a_lo = k_low - sigma_a, a_hi = k_high + sigma_a;
  const double b_lo = lb - sigma_b, b_hi = lb + sigma_b;
  out.push_back(entry("patient1-region",
                      "(A,B) outside [" + fmt(a_lo) + "," + fmt(a_hi) + "]x[" + fmt(b_lo) + "," +
                          fmt(b_hi) + "]",
                      mass_where(dist,
                                 [&](int k, int j) {
                                   return !(k >= a_lo && k <= a_hi && j >= b_lo && j <= b_hi);
                                 }),
                      threshold));
  return out;
}

ConcentrationReport concentration_report(Policy policy, const MarketParams& params,
                                         const PoolDistribution& dist,
                                         const ConcentrationOptions& options) {
  ConcentrationReport rep;
  rep.policy = policy;
  rep.lambda_a = params.lambda_a();
  rep.lambda_b = params.lambda_b();
  rep.p = params.p();
  rep.sigma_a = options.sigma_a.value_or(default_sigma(params.lambda_a()));
  rep.sigma_b = options.sigma_b.value_or(default_sigma(params.lambda_b()));
  const RootSet roots = solve_roots(params, rep.sigma_a, rep.sigma_b);

  switch (policy) {
    case Policy::Greedy2: {
      auto a = check_greedy2_tails(dist, roots, rep.sigma_a, options.threshold);
      auto b = check_greedy2_tails(dist, roots, rep.sigma_b, options.threshold);
      rep.entries = {a[0], b[1]};
      break;
    }
    case Policy::Patient2:
      rep.entries = check_patient2_region(
          dist, params, roots, rep.sigma_a, rep.sigma_b, options.sigma_sum.value_or(rep.sigma_a),
          options.sigma_diff.value_or(std::max(1.0, std::log(params.lambda_a()))),
          options.threshold);
      break;
    case Policy::Greedy1:
    case Policy::Patient1:
      rep.entries = check_1sided_regions(dist, params, roots, policy, rep.sigma_a, rep.sigma_b,
                                         options.threshold);
      break;
    case Policy::Inactive:
      throw Error(ErrorCode::PolicyMismatch, "no concentration checks for the inactive policy");
  }
  for (const auto& e : rep.entries) {
    if (!e.skipped) rep.tail_mass_outside = std::max(rep.tail_mass_outside, e.measured);
  }
  return rep;
}

double BalanceResiduals::max() const noexcept {
  return std::max({vertical, horizontal, diagonal.value_or(0.0)});
}

BalanceResiduals balance_residuals(const PoolDistribution& dist, Policy policy,
                                   const MarketParams& params) {
  const Grid g = dist.grid;
  // net[c] accumulates (flux out of X_c) - (flux into X_c).
  std::vector<double> vertical(static_cast<std::size_t>(g.a_max) + 1, 0.0);
  std::vector<double> horizontal(static_cast<std::size_t>(g.b_max) + 1, 0.0);
  std::vector<double> diagonal(static_cast<std::size_t>(g.a_max + g.b_max) + 1, 0.0);

  for (int k = 0; k <= g.a_max; ++k) {
    for (int j = 0; j <= g.b_max; ++j) {
      const double m = dist.at(k, j);
      if (m == 0.0) continue;
      for (const RateEntry& e : transition_rates(policy, params, {k, j})) {
        if (!g.contains(e.to)) continue;
        const double flux = m * e.rate;
        if (e.to.k != k) vertical[std::min(k, e.to.k)] += e.to.k > k ? flux : -flux;
        if (e.to.j != j) horizontal[std::min(j, e.to.j)] += e.to.j > j ? flux : -flux;
        const int s = k + j, t = e.to.k + e.to.j;
        for (int h = std::min(s, t); h < std::max(s, t); ++h) diagonal[h] += t > s ? flux : -flux;
      }
    }
  }
  auto worst = [](const std::vector<double>& v) {
    double w = 0.0;
    for (double x : v) w = std::max(w, std::abs(x));
    return w;
  };
  BalanceResiduals r;
  r.vertical = worst(vertical);
  r.horizontal = worst(horizontal);
  if (policy == Policy::Patient2) r.diagonal = worst(diagonal);
  return r;
}

double ConsistencyReport::max_abs_z() const noexcept {
  double z = std::max({std::abs(z_a), std::abs(z_b), std::abs(z_total)});
  for (double x : inactive_z_a) z = std::max(z, std::abs(x));
  for (double x : inactive_z_b) z = std::max(z, std::abs(x));
  return z;
}

ConsistencyReport compare_sim_stationary(const MarketParams& params, Policy policy,
                                         double horizon, double burn_in, std::size_t n_reps,
                                         std::uint64_t seed, Grid grid) {
  if (!(burn_in < horizon)) throw Error(ErrorCode::InvalidArgument, "burn-in must precede horizon");
  ConsistencyReport rep;
  rep.simulated = run_replications(params, policy, horizon, n_reps, seed, burn_in);
  rep.stationary = stationary_loss(policy, params, stationary_distribution(policy, params, grid));
  rep.z_a = z_score(rep.simulated.loss_a - rep.stationary.loss_a, rep.simulated.se_a);
  rep.z_b = z_score(rep.simulated.loss_b - rep.stationary.loss_b, rep.simulated.se_b);
  rep.z_total = z_score(rep.simulated.loss_total - rep.stationary.loss_total, rep.simulated.se_total);

  if (policy == Policy::Inactive) {
    std::vector<double> times = {0.5, 1.0, 2.0, horizon};
    times.erase(std::remove_if(times.begin(), times.end(), [&](double t) { return t > horizon; }),
                times.end());
    rep.inactive_moments = mean_pool_sizes(params, policy, times, n_reps, seed);
    for (const PoolMoments& m : rep.inactive_moments) {
      const double scale = 1.0 - std::exp(-m.time);
      rep.inactive_z_a.push_back(z_score(m.mean_a - scale * params.lambda_a(), m.se_a));
      rep.inactive_z_b.push_back(z_score(m.mean_b - scale * params.lambda_b(), m.se_b));
    }
  }
  return rep;
}

nlohmann::json to_json(const ConcentrationReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"id", e.id},
                       {"region", e.region},
                       {"measured", e.measured},
                       {"threshold", e.threshold},
                       {"pass", e.pass},
                       {"skipped", e.skipped},
                       {"note", e.note}});
  }
  return {{"policy", std::string(to_string(r.policy))},
          {"lambda_a", r.lambda_a},
          {"lambda_b", r.lambda_b},
          {"p", r.p},
          {"sigma_a", r.sigma_a},
          {"sigma_b", r.sigma_b},
          {"tail_mass_outside", r.tail_mass_outside},
          {"all_pass", r.all_pass()},
          {"entries", entries}};
}

nlohmann::json to_json(const BalanceResiduals& r) {
  nlohmann::json j = {{"vertical", r.vertical}, {"horizontal", r.horizontal}};
  j["diagonal"] = r.diagonal ? nlohmann::json(*r.diagonal) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const LossReport& r) {
  return {{"loss_a", r.loss_a},           {"loss_b", r.loss_b},
          {"loss_total", r.loss_total},   {"se_a", r.se_a},
          {"se_b", r.se_b},               {"se_total", r.se_total},
          {"arrived_a", r.arrived_a},     {"arrived_b", r.arrived_b},
          {"matched_a", r.matched_a},     {"matched_b", r.matched_b},
          {"perished_a", r.perished_a},   {"perished_b", r.perished_b},
          {"remaining_a", r.remaining_a}, {"remaining_b", r.remaining_b},
          {"replications", r.replications}, {"window_start", r.window_start},
          {"zero_arrivals", r.zero_arrivals}};
}

nlohmann::json to_json(const StationaryFunctionals& f) {
  return {{"e_a", f.e_a},       {"e_b", f.e_b},       {"e_a_geo", f.e_a_geo},
          {"e_b_geo", f.e_b_geo}, {"loss_a", f.loss_a}, {"loss_b", f.loss_b},
          {"loss_total", f.loss_total}};
}

nlohmann::json to_json(const ConsistencyReport& r) {
  nlohmann::json moments = nlohmann::json::array();
  for (std::size_t i = 0; i < r.inactive_moments.size(); ++i) {
    const auto& m = r.inactive_moments[i];
    moments.push_back({{"t", m.time},
                       {"mean_a", m.mean_a},
                       {"se_a", m.se_a},
                       {"mean_b", m.mean_b},
                       {"se_b", m.se_b},
                       {"z_a", r.inactive_z_a[i]},
                       {"z_b", r.inactive_z_b[i]}});
  }
  return {{"simulated", to_json(r.simulated)}, {"stationary", to_json(r.stationary)},
          {"z_a", r.z_a},                      {"z_b", r.z_b},
          {"z_total", r.z_total},              {"inactive_moments", moments}};
}

}  // namespace matchmarket
