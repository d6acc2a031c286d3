// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bounds.hpp"
#include "ctmc.hpp"
#include "diagnostics.hpp"
#include "event_sim.hpp"
#include "market.hpp"

using namespace matchmarket;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED[" << what << "]";
    }
  }
};

struct Criterion {
  int number;
  std::string name;
  double time_limit_s;
  std::function<void(Verdict&)> body;
};

bool close_rel(double x, double want, double rel) { return std::abs(x - want) <= rel * std::abs(want); }

double residual(double x, double lhs, double other, double p) {
  return std::abs(x + other * (1.0 - std::pow(1.0 - p, x)) - lhs) / lhs;
}

std::string run_command(const std::string& cmd, int& exit_code) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    exit_code = -1;
    return out;
  }
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  exit_code = pclose(pipe);
  return out;
}

double sep(const LossReport& lo, const LossReport& hi, double LossReport::*loss,
           double LossReport::*se) {
  const double s = std::hypot(lo.*se, hi.*se);
  return s > 0 ? (hi.*loss - lo.*loss) / s : INFINITY;
}

// 1. Bound arithmetic through the CLI against hand-evaluated formulas.
void bound_arithmetic(Verdict& o) {
  const double la = 100, lb = 100, p = 0.05, da = la * p, db = lb * p;
  const double delta = (da - db) / (da + db);
  const double opt = std::max(1.0 / (1 + 2 * da + db + 2 * da * da / la + db * db / lb), delta);
  const double omn = std::max(0.5 * (std::exp(-(da + da * p)) / (1 + da + da * da / la) +
                                     std::exp(-(db + db * p)) / (1 + db + db * db / lb)),
                              delta);
  const double g1 = std::max(1.0 / (2 * (1 + db + db * db / lb)), delta);
  const double p1 = std::max(std::log(db + db * db / lb) / (da + db + da * da / la + db * db / lb), delta);
  const double g2 = delta + 2 * std::log(db + 3) / (da + db);

  int code = 0;
  const std::string out = run_command(std::string(MM_CLI_PATH) + " bounds --lambda-a 100 --lambda-b 100 --p 0.05", code);
  o.require(code == 0, "cli exit");
  if (code != 0) return;
  const json j = json::parse(out);
  const std::pair<const char*, double> want[] = {{"opt_lower", opt},
                                                  {"omn_lower", omn},
                                                  {"greedy1_lower", g1},
                                                  {"patient1_lower", p1},
                                                  {"greedy2_upper_total", g2}};
  for (const auto& [key, value] : want) {
    const double got = j.at(key).get<double>();
    o.detail << " " << key << "=" << got;
    o.require(close_rel(got, value, 1e-6), key);
  }
}

// 2. Root sandwiches and orderings over 50 parameterizations.
void root_sandwiches(Verdict& o) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 50; ++i) {
    const double db = 1 + 9 * unit(rng);
    const double da = db + (10 - db) * unit(rng);
    const double p = 0.01 + 0.089 * unit(rng);
    const auto m = from_densities(da, db, p);
    const double la = m.lambda_a(), lb = m.lambda_b();
    const auto r = solve_roots(m);
    const double sa = r.sigma_a, sb = r.sigma_b;
    std::ostringstream at;
    at << "d_a=" << da << " d_b=" << db << " p=" << p;
    const std::string tag = at.str();

    o.require(std::max(la - lb, la / (1 + db)) <= r.k2 + 1e-9 * la, "k2 lower " + tag);
    o.require(r.k2 <= la - lb + std::log(db + 3) / p, "k2 upper " + tag);
    o.require(lb / (1 + da) <= r.l2 + 1e-9 * lb, "l2 lower " + tag);
    o.require(r.l2 <= lb / db * std::log(db + 3), "l2 upper " + tag);
    o.require(r.k2_lower && r.l2_lower && r.k1_lower, "shifted roots present " + tag);
    if (!(r.k2_lower && r.l2_lower && r.k1_lower)) continue;
    o.require(r.k2 - sb < *r.k2_lower && *r.k2_lower < r.k2, "k2 shift " + tag);
    o.require(r.l2 - sa < *r.l2_lower && *r.l2_lower < r.l2, "l2 shift " + tag);
    o.require(r.k1 - sb < *r.k1_lower && *r.k1_lower < r.k1, "k1 lower shift " + tag);
    if (r.k1_upper) {
      o.require(r.k1 < *r.k1_upper && *r.k1_upper < std::min(r.k1 + sb, la), "k1 upper shift " + tag);
      o.require(residual(*r.k1_upper, la, lb - sb, p) < 1e-9, "k1_upper residual " + tag);
    }
    o.require(residual(r.k2, la, lb, p) < 1e-9, "k2 residual " + tag);
    o.require(residual(r.l2, lb, la, p) < 1e-9, "l2 residual " + tag);
    o.require(residual(r.k1, la, lb, p) < 1e-9, "k1 residual " + tag);
    o.require(residual(*r.k2_lower, la, lb + sb, p) < 1e-9, "k2_lower residual " + tag);
    o.require(residual(*r.l2_lower, lb, la + sa, p) < 1e-9, "l2_lower residual " + tag);
    o.require(residual(*r.k1_lower, la, lb + sb, p) < 1e-9, "k1_lower residual " + tag);
    o.require(check_root_sandwiches(m, r).all(), "library sandwich checks " + tag);
    ++checked;
  }
  o.detail << " parameterizations=" << checked;
}

// 3. Stationary solver: balance across cuts, leak, exchange symmetry.
void stationary_solver(Verdict& o) {
  const auto m = validate_params(30, 30, 1.0 / 6);
  for (Policy policy : {Policy::Greedy2, Policy::Patient2, Policy::Greedy1, Policy::Patient1,
                        Policy::Inactive}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto pi = stationary_distribution(policy, m, default_grid(m));
    const auto bal = balance_residuals(pi, policy, m);
    const auto f = stationary_loss(policy, m, pi);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string name(to_string(policy));
    o.detail << " " << name << "{residual=" << bal.max() << " leak=" << pi.leak << " " << secs << "s}";
    o.require(bal.max() < 1e-8 * 60, name + " balance");
    o.require(pi.leak < 1e-6, name + " leak");
    o.require(secs < 60, name + " runtime");
    if (policy == Policy::Greedy2 || policy == Policy::Patient2) {
      o.require(std::abs(f.e_a - f.e_b) < 1e-8, name + " symmetry");
    }
  }
}

// 4. Simulated losses against the stationary functionals.
void sim_chain_consistency(Verdict& o) {
  const auto m = validate_params(30, 30, 1.0 / 6);
  const Grid g = default_grid(m);
  std::uint64_t seed = 400;
  for (Policy policy : {Policy::Greedy2, Policy::Patient2, Policy::Greedy1, Policy::Patient1}) {
    const auto r = compare_sim_stationary(m, policy, 100, 20, 200, ++seed, g);
    o.detail << " " << to_string(policy) << "{sim=" << r.simulated.loss_total
             << " chain=" << r.stationary.loss_total << " z=" << r.z_total << "}";
    o.require(std::abs(r.z_total) < 3, std::string(to_string(policy)));
  }
  const auto r = compare_sim_stationary(m, Policy::Inactive, 100, 20, 200, ++seed, g);
  double worst = 0;
  for (std::size_t i = 0; i < r.inactive_moments.size(); ++i) {
    worst = std::max({worst, std::abs(r.inactive_z_a[i]), std::abs(r.inactive_z_b[i])});
  }
  o.detail << " inactive{times=" << r.inactive_moments.size() << " max|z|=" << worst << "}";
  o.require(!r.inactive_moments.empty() && worst < 3, "inactive moments");
}

// 5. Patient2 beats Greedy2 across a balanced sweep, inside the bounds.
void headline_separation(Verdict& o) {
  const Policy ps[] = {Policy::Greedy2, Policy::Patient2};
  for (double d : {3.0, 5.0, 8.0}) {
    const auto m = validate_params(20 * d, 20 * d, 0.05);
    const auto c = coupled_replications(m, 100, 20, 100, 500 + static_cast<std::uint64_t>(d), ps, false);
    const auto& g2 = c.policies[0];
    const auto& p2 = c.policies[1];
    const auto b = all_bounds(m);
    const double z = sep(p2, g2, &LossReport::loss_total, &LossReport::se_total);
    o.detail << " d=" << d << "{G2=" << g2.loss_total << " P2=" << p2.loss_total << " sep=" << z
             << "SE}";
    const std::string tag = " d=" + std::to_string(static_cast<int>(d));
    o.require(p2.loss_total < g2.loss_total, "P2<G2" + tag);
    if (d == 5.0) o.require(z >= 5, "separation" + tag);
    o.require(g2.loss_total >= b.opt_lower - 3 * g2.se_total, "G2 above opt_lower" + tag);
    o.require(g2.loss_total <= b.greedy2_upper_total + 3 * g2.se_total, "G2 below upper" + tag);
    o.require(p2.loss_total >= b.omn_lower - 3 * p2.se_total, "P2 above omn_lower" + tag);
  }
}

// 6. 1-sided policies are alike and waiting does not help them.
void one_sided_equivalence(Verdict& o) {
  const auto m = validate_params(100, 100, 0.05);
  const Policy ps[] = {Policy::Greedy1, Policy::Patient1, Policy::Patient2};
  const auto c = coupled_replications(m, 100, 20, 100, 600, ps, false);
  const auto& g1 = c.policies[0];
  const auto& p1 = c.policies[1];
  const auto& p2 = c.policies[2];
  const auto b = all_bounds(m);
  o.detail << " G1=" << g1.loss_total << " P1=" << p1.loss_total << " P2=" << p2.loss_total
           << " alg1_upper=" << b.alg1_upper_total << " greedy1_lower=" << b.greedy1_lower
           << " patient1_lower=" << b.patient1_lower;
  const double ratio = std::max(g1.loss_total, p1.loss_total) / std::min(g1.loss_total, p1.loss_total);
  o.require(ratio <= 2, "factor of 2");
  o.require(g1.loss_total >= b.greedy1_lower - 3 * g1.se_total, "G1 lower");
  o.require(g1.loss_total <= b.alg1_upper_total + 3 * g1.se_total, "G1 upper");
  o.require(p1.loss_total >= b.patient1_lower - 3 * p1.se_total, "P1 lower");
  o.require(p1.loss_total <= b.alg1_upper_total + 3 * p1.se_total, "P1 upper");
  const double z = sep(p2, p1, &LossReport::loss_total, &LossReport::se_total);
  o.detail << " P1-P2 sep=" << z << "SE";
  o.require(z >= 5, "P1 > P2");
}

// 7. Unbalanced market: the larger side pays the imbalance.
void unbalanced_structure(Verdict& o) {
  const auto m = from_densities(8, 4, 0.08);
  const double floor_a = (8.0 - 4.0) / 8.0;
  const Policy ps[] = {Policy::Greedy2, Policy::Patient2, Policy::Greedy1, Policy::Patient1};
  const auto c = coupled_replications(m, 100, 20, 100, 700, ps, false);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& r = c.policies[i];
    o.detail << " " << to_string(ps[i]) << "{loss_a=" << r.loss_a << " loss_b=" << r.loss_b << "}";
    o.require(r.loss_a >= floor_a - 3 * r.se_a, std::string(to_string(ps[i])) + " loss_a floor");
  }
  const double z = sep(c.policies[1], c.policies[0], &LossReport::loss_b, &LossReport::se_b);
  o.detail << " loss_b sep=" << z << "SE";
  o.require(c.policies[1].loss_b < c.policies[0].loss_b && z >= 5, "P2 loss_b < G2 loss_b");
}

// 8. Tail masses of the solved distributions at default shifts.
void concentration(Verdict& o) {
  const auto m = validate_params(60, 60, 0.05);
  bool saw_sum = false, saw_diff = false;
  for (Policy policy : {Policy::Greedy2, Policy::Patient2, Policy::Greedy1, Policy::Patient1}) {
    const auto pi = stationary_distribution(policy, m, default_grid(m));
    const auto report = concentration_report(policy, m, pi);
    for (const auto& e : report.entries) {
      o.detail << " " << e.id << "=" << e.measured << (e.skipped ? "(skipped)" : "");
      o.require(!e.skipped, e.id + " in regime");
      o.require(e.skipped || e.measured < 0.1, e.id);
      saw_sum |= e.id == "patient2-sum" && !e.skipped;
      saw_diff |= e.id == "patient2-diff" && !e.skipped;
    }
  }
  o.require(saw_sum && saw_diff, "sum and difference checks evaluated");
}

// 9. Pathwise dominance on shared randomness and the omniscient benchmark.
void coupling_dominance(Verdict& o) {
  const auto m = validate_params(20, 20, 0.2);
  const double T = 50;
  SimOptions opts;
  opts.record_edges = false;
  for (int i = 0; i <= 200; ++i) opts.snapshot_times.push_back(0.25 * i);
  const Policy active[] = {Policy::Greedy2, Policy::Patient2, Policy::Greedy1, Policy::Patient1};
  std::size_t snapshots = 0, violations = 0, matched_violations = 0;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    const auto r = generate_realization(m, T, {900, rep});
    const auto inactive = run_policy(r, Policy::Inactive, opts);
    const auto omn = loss_report(run_omniscient(r));
    for (Policy policy : active) {
      const auto log = run_policy(r, policy, opts);
      for (std::size_t s = 0; s < log.pool_snapshots.size(); ++s) {
        ++snapshots;
        if (log.pool_snapshots[s].a > inactive.pool_snapshots[s].a ||
            log.pool_snapshots[s].b > inactive.pool_snapshots[s].b) {
          ++violations;
        }
      }
      const auto rep_loss = loss_report(log);
      if (omn.matched_a + omn.matched_b < rep_loss.matched_a + rep_loss.matched_b) ++matched_violations;
    }
  }
  o.detail << " snapshots=" << snapshots << " dominance_violations=" << violations
           << " matched_violations=" << matched_violations;
  o.require(snapshots > 0 && violations == 0, "pool dominance");
  o.require(matched_violations == 0, "omniscient matched count");

  const auto un = from_densities(6, 3, 0.2);
  const auto c = coupled_replications(un, T, 0, 50, 901, std::span<const Policy>(), true);
  const double delta = all_bounds(un).delta_lower;
  o.detail << " omniscient_unbalanced=" << c.omniscient.loss_total << " (se " << c.omniscient.se_total
           << ") delta=" << delta;
  o.require(c.omniscient.loss_total >= delta - 3 * c.omniscient.se_total, "omniscient >= delta");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "bound arithmetic", 1, bound_arithmetic},
      {2, "root sandwiches", 5, root_sandwiches},
      {3, "stationary solver correctness", 5 * 60, stationary_solver},
      {4, "simulation vs chain consistency", 5 * 60, sim_chain_consistency},
      {5, "headline separation", 10 * 60, headline_separation},
      {6, "1-sided equivalence", 5 * 60, one_sided_equivalence},
      {7, "unbalanced structure", 5 * 60, unbalanced_structure},
      {8, "concentration diagnostics", 2 * 60, concentration},
      {9, "coupling and omniscient dominance", 2 * 60, coupling_dominance},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Verdict o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.time_limit_s) {
      o.pass = false;
      o.detail << " FAILED[runtime limit " << c.time_limit_s << "s]";
    }
    failures += !o.pass;
    std::printf("%s %d %s (%.2fs):%s\n", o.pass ? "PASS" : "FAIL", c.number, c.name.c_str(), secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
