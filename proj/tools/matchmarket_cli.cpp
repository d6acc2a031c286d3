// matchmarket: command-line front end over the C API.
//
//   matchmarket simulate   --lambda-a 30 --lambda-b 30 --p 0.1667 --policy all --reps 50
//   matchmarket stationary --config run.json --dist pi.csv
//   matchmarket bounds     --d-a 5 --d-b 5 --p 0.05
//   matchmarket compare    --config sweep.json --reps 100 --burn-in 20
//   matchmarket diagnose   --lambda-a 60 --lambda-b 60 --p 0.05 --policy all
//
// Exit status: 0 on success, 2 for an invalid configuration, 1 for an engine
// error.

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli_config.hpp"

namespace {

using nlohmann::json;
using mmcli::ConfigInvalid;
using mmcli::RunConfig;

constexpr int kExitEngine = 1;
constexpr int kExitConfig = 2;

class EngineError : public std::runtime_error {
 public:
  EngineError(mm_status status, const std::string& what)
      : std::runtime_error(std::string(mm_status_name(status)) + ": " + what) {}
};

void check(mm_status st) {
  if (st != MM_OK) throw EngineError(st, mm_last_error());
}

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

struct StringDeleter {
  void operator()(char* s) const { mm_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

struct DistDeleter {
  void operator()(mm_distribution* d) const { mm_distribution_free(d); }
};
using Dist = std::unique_ptr<mm_distribution, DistDeleter>;

/// Output sink: stdout unless --out is given.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw ConfigInvalid("out", "cannot open '" + path + "' for writing");
    }
  }
  std::ostream& os() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

mm_grid grid_for(const RunConfig& c, const mm_params& params) {
  if (c.grid) return *c.grid;
  mm_grid g;
  check(mm_default_grid(&params, &g));
  return g;
}

std::string grid_text(mm_grid g) { return std::to_string(g.a_max) + "x" + std::to_string(g.b_max); }

json loss_json(const mm_loss_report& r) {
  return {{"loss_a", r.loss_a},           {"loss_b", r.loss_b},
          {"loss_total", r.loss_total},   {"se_a", r.se_a},
          {"se_b", r.se_b},               {"se_total", r.se_total},
          {"arrived_a", r.arrived_a},     {"arrived_b", r.arrived_b},
          {"matched_a", r.matched_a},     {"matched_b", r.matched_b},
          {"perished_a", r.perished_a},   {"perished_b", r.perished_b},
          {"remaining_a", r.remaining_a}, {"remaining_b", r.remaining_b},
          {"zero_arrivals", r.zero_arrivals != 0}};
}

json functionals_json(const mm_stationary_functionals& f) {
  return {{"e_a", f.e_a},         {"e_b", f.e_b},       {"e_a_geo", f.e_a_geo},
          {"e_b_geo", f.e_b_geo}, {"loss_a", f.loss_a}, {"loss_b", f.loss_b},
          {"loss_total", f.loss_total}};
}

// ---- simulate ---------------------------------------------------------------

struct NamedReport {
  std::string policy;
  mm_loss_report report;
};

std::vector<NamedReport> simulate_point(const RunConfig& c, const mm_params& params) {
  std::vector<NamedReport> rows;
  if (c.all_policies) {
    std::vector<mm_loss_report> reports(c.policies.size());
    mm_loss_report omn{};
    check(mm_coupled_replications(&params, c.horizon, c.burn_in, c.reps, c.seed, c.policies.data(),
                                  c.policies.size(), 1, reports.data(), &omn));
    for (std::size_t i = 0; i < c.policies.size(); ++i) {
      rows.push_back({mm_policy_name(c.policies[i]), reports[i]});
    }
    rows.push_back({"omniscient", omn});
  } else {
    mm_loss_report r{};
    check(mm_run_replications(&params, c.policies.front(), c.horizon, c.reps, c.seed, c.burn_in, &r));
    rows.push_back({mm_policy_name(c.policies.front()), r});
  }
  return rows;
}

int cmd_simulate(const RunConfig& c, Sink& sink) {
  const mm_params params = *c.params;
  const auto rows = simulate_point(c, params);
  std::ostream& os = sink.os();
  if (c.format == "json") {
    json out = {{"config", mmcli::effective_json(c)}, {"rows", json::array()}};
    for (const auto& row : rows) {
      json r = loss_json(row.report);
      r["policy"] = row.policy;
      out["rows"].push_back(r);
    }
    os << out.dump(2) << "\n";
    return 0;
  }
  os << "# config: " << mmcli::effective_json(c).dump() << "\n";
  os << "policy,lambda_a,lambda_b,p,d_a,d_b,T,reps,seed,loss_a,loss_b,loss_total,se_a,se_b,se_total\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    os << row.policy << ',' << num(params.lambda_a) << ',' << num(params.lambda_b) << ','
       << num(params.p) << ',' << num(params.lambda_a * params.p) << ','
       << num(params.lambda_b * params.p) << ',' << num(c.horizon) << ',' << c.reps << ','
       << c.seed << ',' << num(r.loss_a) << ',' << num(r.loss_b) << ',' << num(r.loss_total) << ','
       << num(r.se_a) << ',' << num(r.se_b) << ',' << num(r.se_total) << "\n";
  }
  return 0;
}

// ---- stationary -------------------------------------------------------------

std::string suffixed(const std::string& path, const std::string& suffix) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path + "-" + suffix;
  }
  return path.substr(0, dot) + "-" + suffix + path.substr(dot);
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw ConfigInvalid("dist", "cannot open '" + path + "' for writing");
  f << text;
}

int cmd_stationary(const RunConfig& c, Sink& sink, const std::string& dist_path) {
  const mm_params params = *c.params;
  const mm_grid grid = grid_for(c, params);
  if (c.format == "csv" && c.policies.size() != 1) {
    throw ConfigInvalid("format", "csv output holds one distribution; pick a single policy");
  }
  json results = json::array();
  for (mm_policy policy : c.policies) {
    mm_distribution* raw = nullptr;
    check(mm_stationary_distribution(policy, &params, grid, nullptr, &raw));
    Dist dist(raw);
    mm_stationary_functionals f;
    check(mm_stationary_loss(policy, &params, dist.get(), &f));
    char* csv_raw = nullptr;
    check(mm_distribution_to_csv(dist.get(), &csv_raw));
    CString csv(csv_raw);

    json r = {{"policy", mm_policy_name(policy)},
              {"grid", grid_text(grid)},
              {"leak", mm_distribution_leak(dist.get())},
              {"functionals", functionals_json(f)}};
    if (!dist_path.empty()) {
      const std::string path =
          c.policies.size() == 1 ? dist_path : suffixed(dist_path, mm_policy_name(policy));
      write_file(path, csv.get());
      r["dist_file"] = path;
    }
    if (c.format == "csv") {
      sink.os() << "# config: " << mmcli::effective_json(c).dump() << "\n" << csv.get();
      std::cerr << json{{"functionals", r}}.dump() << "\n";
      return 0;
    }
    results.push_back(r);
  }
  sink.os() << json{{"config", mmcli::effective_json(c)}, {"results", results}}.dump(2) << "\n";
  return 0;
}

// ---- bounds -----------------------------------------------------------------

int cmd_bounds(const RunConfig& c, Sink& sink, bool roots_only) {
  const mm_params params = *c.params;
  char* raw = nullptr;
  check(mm_bounds_json(&params, c.sigma_a ? &*c.sigma_a : nullptr,
                       c.sigma_b ? &*c.sigma_b : nullptr, roots_only ? 1 : 0, &raw));
  CString text(raw);
  json out = json::parse(text.get());
  if (!roots_only) {
    mm_densities d;
    check(mm_params_densities(&params, &d));
    out["d_a"] = d.d_a;
    out["d_b"] = d.d_b;
    out["delta"] = d.delta;
  }
  out["config"] = mmcli::effective_json(c);
  sink.os() << out.dump(2) << "\n";
  return 0;
}

// ---- compare ----------------------------------------------------------------

int cmd_compare(const RunConfig& c, Sink& sink, bool skip_stationary) {
  std::vector<mm_params> points;
  for (const auto& s : c.sweep) points.push_back(s.params);
  if (points.empty() && c.params) points.push_back(*c.params);
  if (points.empty()) throw ConfigInvalid("sweep", "no market points: give a sweep or lambda/density values");

  std::ostream& os = sink.os();
  json rows_json = json::array();
  if (c.format == "csv") {
    os << "# config: " << mmcli::effective_json(c).dump() << "\n";
    os << "policy,lambda_a,lambda_b,p,d_a,d_b,T,reps,seed,burn_in,"
          "sim_loss_a,sim_loss_b,sim_loss_total,sim_se_a,sim_se_b,sim_se_total,"
          "stationary_loss_a,stationary_loss_b,stationary_loss_total,leak,upper_bound,lower_bound\n";
  }
  // Points run in sweep order; replications inside each point use the worker pool.
  for (const mm_params& params : points) {
    const auto sims = simulate_point(c, params);
    mm_bounds bounds;
    check(mm_all_bounds(&params, &bounds));
    for (const auto& row : sims) {
      std::optional<mm_stationary_functionals> stat;
      double leak = NAN, upper = NAN, lower = NAN;
      if (row.policy == "omniscient") {
        lower = bounds.omn_lower;
      } else {
        mm_policy policy;
        check(mm_parse_policy(row.policy.c_str(), &policy));
        check(mm_policy_bounds(&params, policy, &upper, &lower));
        if (!skip_stationary) {
          mm_distribution* raw = nullptr;
          check(mm_stationary_distribution(policy, &params, grid_for(c, params), nullptr, &raw));
          Dist dist(raw);
          mm_stationary_functionals f;
          check(mm_stationary_loss(policy, &params, dist.get(), &f));
          stat = f;
          leak = mm_distribution_leak(dist.get());
        }
      }
      const auto& r = row.report;
      if (c.format == "json") {
        json j = {{"policy", row.policy},     {"lambda_a", params.lambda_a},
                  {"lambda_b", params.lambda_b}, {"p", params.p},
                  {"d_a", params.lambda_a * params.p}, {"d_b", params.lambda_b * params.p},
                  {"simulated", loss_json(r)}};
        j["stationary"] = stat ? functionals_json(*stat) : json(nullptr);
        j["leak"] = std::isnan(leak) ? json(nullptr) : json(leak);
        j["upper_bound"] = std::isnan(upper) ? json(nullptr) : json(upper);
        j["lower_bound"] = std::isnan(lower) ? json(nullptr) : json(lower);
        rows_json.push_back(j);
        continue;
      }
      auto opt = [](double x) { return std::isnan(x) ? std::string() : num(x); };
      os << row.policy << ',' << num(params.lambda_a) << ',' << num(params.lambda_b) << ','
         << num(params.p) << ',' << num(params.lambda_a * params.p) << ','
         << num(params.lambda_b * params.p) << ',' << num(c.horizon) << ',' << c.reps << ','
         << c.seed << ',' << num(c.burn_in) << ',' << num(r.loss_a) << ',' << num(r.loss_b) << ','
         << num(r.loss_total) << ',' << num(r.se_a) << ',' << num(r.se_b) << ','
         << num(r.se_total) << ',' << (stat ? num(stat->loss_a) : "") << ','
         << (stat ? num(stat->loss_b) : "") << ',' << (stat ? num(stat->loss_total) : "") << ','
         << opt(leak) << ',' << opt(upper) << ',' << opt(lower) << "\n";
    }
  }
  if (c.format == "json") {
    os << json{{"config", mmcli::effective_json(c)}, {"rows", rows_json}}.dump(2) << "\n";
  }
  return 0;
}

// ---- diagnose ---------------------------------------------------------------

int cmd_diagnose(const RunConfig& c, Sink& sink, bool consistency) {
  const mm_params params = *c.params;
  const mm_grid grid = grid_for(c, params);
  std::vector<mm_policy> policies = c.policies;
  if (c.all_policies) policies.push_back(MM_INACTIVE);

  json results = json::array();
  bool all_pass = true;
  for (mm_policy policy : policies) {
    mm_distribution* raw = nullptr;
    check(mm_stationary_distribution(policy, &params, grid, nullptr, &raw));
    Dist dist(raw);
    json r = {{"policy", mm_policy_name(policy)},
              {"grid", grid_text(grid)},
              {"leak", mm_distribution_leak(dist.get())}};

    mm_balance_residuals bal;
    check(mm_compute_balance_residuals(dist.get(), policy, &params, &bal));
    const double tol = 1e-8 * (params.lambda_a + params.lambda_b);
    const double worst = std::max({bal.vertical, bal.horizontal, bal.has_diagonal ? bal.diagonal : 0.0});
    r["balance"] = {{"vertical", bal.vertical},
                    {"horizontal", bal.horizontal},
                    {"diagonal", bal.has_diagonal ? json(bal.diagonal) : json(nullptr)},
                    {"tolerance", tol},
                    {"pass", worst < tol}};
    all_pass = all_pass && worst < tol;

    if (policy != MM_INACTIVE) {
      mm_concentration_options opts{c.threshold, c.sigma_a.value_or(-1.0), c.sigma_b.value_or(-1.0),
                                    -1.0, -1.0};
      char* text = nullptr;
      int pass = 0;
      check(mm_concentration_report_json(policy, &params, dist.get(), &opts, &text, &pass));
      CString owned(text);
      r["concentration"] = json::parse(owned.get());
      all_pass = all_pass && pass;
    }
    if (consistency) {
      char* text = nullptr;
      double z = 0.0;
      check(mm_compare_sim_stationary_json(&params, policy, c.horizon, c.burn_in, c.reps, c.seed,
                                           grid, &text, &z));
      CString owned(text);
      r["consistency"] = json::parse(owned.get());
      r["consistency"]["pass"] = z < 3.0;
      all_pass = all_pass && z < 3.0;
    }
    results.push_back(r);
  }

  std::ostream& os = sink.os();
  if (c.format == "json") {
    os << json{{"config", mmcli::effective_json(c)}, {"results", results}, {"all_pass", all_pass}}.dump(2)
       << "\n";
    return 0;
  }
  // Pass/fail table.
  os << "# config: " << mmcli::effective_json(c).dump() << "\n";
  os << "policy,check,region,measured,threshold,status\n";
  for (const auto& r : results) {
    const std::string policy = r["policy"];
    const auto& bal = r["balance"];
    const double worst = std::max({bal["vertical"].get<double>(), bal["horizontal"].get<double>(),
                                   bal["diagonal"].is_null() ? 0.0 : bal["diagonal"].get<double>()});
    os << policy << ",balance,max cut residual," << num(worst) << ','
       << num(bal["tolerance"].get<double>()) << ',' << (bal["pass"].get<bool>() ? "PASS" : "FAIL")
       << "\n";
    if (r.contains("concentration")) {
      for (const auto& e : r["concentration"]["entries"]) {
        const char* status = e["skipped"].get<bool>() ? "SKIP" : e["pass"].get<bool>() ? "PASS" : "FAIL";
        os << policy << ',' << e["id"].get<std::string>() << ",\"" << e["region"].get<std::string>()
           << "\"," << num(e["measured"].get<double>()) << ',' << num(e["threshold"].get<double>())
           << ',' << status << "\n";
      }
    }
    if (r.contains("consistency")) {
      const auto& k = r["consistency"];
      const double z = std::max({std::abs(k["z_a"].get<double>()), std::abs(k["z_b"].get<double>()),
                                 std::abs(k["z_total"].get<double>())});
      os << policy << ",consistency,|sim - stationary| in SE," << num(z) << ",3,"
         << (k["pass"].get<bool>() ? "PASS" : "FAIL") << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic bipartite matching market engine"};
  app.require_subcommand(1);

  std::string config_path, out_path, dist_path;
  mmcli::RawConfig flags;
  std::optional<std::string> policy, grid, format;
  std::optional<double> la, lb, p, da, db, horizon, burn_in, sigma_a, sigma_b, threshold;
  std::optional<std::uint64_t> seed, reps;
  bool roots_only = false, skip_stationary = false, consistency = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--policy", policy, "greedy2|patient2|greedy1|patient1|inactive|all");
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--out", out_path, "output file (default stdout)");
    sub->add_option("--format", format, "csv|json");
    sub->add_option("--grid", grid, "truncation AxB");
    sub->add_option("--reps", reps, "replications");
    sub->add_option("--horizon", horizon, "time horizon T");
    sub->add_option("--burn-in", burn_in, "burn-in T0");
    sub->add_option("--lambda-a", la, "arrival rate of side U");
    sub->add_option("--lambda-b", lb, "arrival rate of side V");
    sub->add_option("--p", p, "edge probability");
    sub->add_option("--d-a", da, "density of side U");
    sub->add_option("--d-b", db, "density of side V");
    sub->add_option("--sigma-a", sigma_a, "shift for side U");
    sub->add_option("--sigma-b", sigma_b, "shift for side V");
  };

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo losses");
  common(simulate);
  auto* stationary = app.add_subcommand("stationary", "stationary distribution and loss functionals");
  common(stationary);
  stationary->add_option("--dist", dist_path, "write the distribution CSV here");
  auto* bounds = app.add_subcommand("bounds", "theoretical bounds, roots and sandwich checks");
  common(bounds);
  bounds->add_flag("--roots-only", roots_only, "emit only the roots");
  auto* compare = app.add_subcommand("compare", "simulated vs stationary vs bounds over a sweep");
  common(compare);
  compare->add_flag("--skip-stationary", skip_stationary, "do not solve the chains");
  auto* diagnose = app.add_subcommand("diagnose", "concentration and balance checks");
  common(diagnose);
  diagnose->add_option("--threshold", threshold, "pass threshold for tail masses");
  diagnose->add_flag("--consistency", consistency, "also compare simulation with the chain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  flags.lambda_a = la;
  flags.lambda_b = lb;
  flags.p = p;
  flags.d_a = da;
  flags.d_b = db;
  flags.policy = policy;
  flags.horizon = horizon;
  flags.reps = reps;
  flags.seed = seed;
  flags.burn_in = burn_in;
  flags.grid = grid;
  flags.sigma_a = sigma_a;
  flags.sigma_b = sigma_b;
  flags.threshold = threshold;
  flags.format = format;

  try {
    mmcli::RawConfig raw = config_path.empty() ? mmcli::RawConfig{} : mmcli::load_config_file(config_path);
    raw = mmcli::overlay(std::move(raw), flags);

    if (*simulate) {
      const RunConfig c = mmcli::resolve(raw, "csv", true);
      Sink sink(out_path);
      return cmd_simulate(c, sink);
    }
    if (*stationary) {
      if (!raw.policy) raw.policy = "greedy2";
      const RunConfig c = mmcli::resolve(raw, "json", true);
      Sink sink(out_path);
      return cmd_stationary(c, sink, dist_path);
    }
    if (*bounds) {
      const RunConfig c = mmcli::resolve(raw, "json", true);
      if (c.format != "json") throw ConfigInvalid("format", "bounds are emitted as JSON only");
      Sink sink(out_path);
      return cmd_bounds(c, sink, roots_only);
    }
    if (*compare) {
      if (!raw.policy) raw.policy = "all";
      const RunConfig c = mmcli::resolve(raw, "csv", false);
      Sink sink(out_path);
      return cmd_compare(c, sink, skip_stationary);
    }
    if (*diagnose) {
      if (!raw.policy) raw.policy = "all";
      const RunConfig c = mmcli::resolve(raw, "csv", true);
      Sink sink(out_path);
      return cmd_diagnose(c, sink, consistency);
    }
  } catch (const ConfigInvalid& e) {
    std::cerr << "error: ConfigInvalid: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EngineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEngine;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEngine;
  }
  return 0;
}
