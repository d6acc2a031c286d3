#include "cli_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mmcli {
namespace {

using nlohmann::json;

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigInvalid(key, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ConfigInvalid(key, "expected a finite number");
  return x;
}

std::uint64_t get_count(const json& j, const std::string& key) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
  throw ConfigInvalid(key, "expected a nonnegative integer");
}

std::string get_string(const json& j, const std::string& key) {
  if (!j.is_string()) throw ConfigInvalid(key, "expected a string");
  return j.get<std::string>();
}

/// Maps an engine status from parameter validation to the field at fault.
[[noreturn]] void params_invalid(mm_status status, bool from_densities) {
  std::string field = "p";
  if (status == MM_ERR_NON_POSITIVE_RATE) field = from_densities ? "d_a/d_b" : "lambda_a/lambda_b";
  throw ConfigInvalid(field, mm_last_error());
}

mm_params resolve_point(std::optional<double> la, std::optional<double> lb, std::optional<double> p,
                        std::optional<double> da, std::optional<double> db,
                        const std::string& where) {
  const std::string prefix = where.empty() ? "" : where + ".";
  if ((la || lb) && (da || db)) {
    throw ConfigInvalid(prefix + "d_a", "give either rates (lambda_a, lambda_b) or densities (d_a, d_b), not both");
  }
  if (!p) throw ConfigInvalid(prefix + "p", "missing");
  mm_params out{};
  mm_status st;
  if (da || db) {
    if (!da || !db) throw ConfigInvalid(prefix + (da ? "d_b" : "d_a"), "missing");
    st = mm_params_from_densities(*da, *db, *p, &out);
    if (st != MM_OK) params_invalid(st, true);
  } else {
    if (!la) throw ConfigInvalid(prefix + "lambda_a", "missing");
    if (!lb) throw ConfigInvalid(prefix + "lambda_b", "missing");
    st = mm_validate_params(*la, *lb, *p, &out);
    if (st != MM_OK) params_invalid(st, false);
  }
  return out;
}

std::vector<double> number_list(const json& j, const std::string& key) {
  if (j.is_number()) return {get_number(j, key)};
  if (!j.is_array() || j.empty()) throw ConfigInvalid(key, "expected a nonempty list of numbers");
  std::vector<double> out;
  for (const auto& x : j) out.push_back(get_number(x, key));
  return out;
}

}  // namespace

RawConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid("", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigInvalid("", "config must be a JSON object");

  RawConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda_a") c.lambda_a = get_number(value, key);
    else if (key == "lambda_b") c.lambda_b = get_number(value, key);
    else if (key == "p") c.p = get_number(value, key);
    else if (key == "d_a") c.d_a = get_number(value, key);
    else if (key == "d_b") c.d_b = get_number(value, key);
    else if (key == "policy") c.policy = get_string(value, key);
    else if (key == "horizon") c.horizon = get_number(value, key);
    else if (key == "reps") c.reps = get_count(value, key);
    else if (key == "seed") c.seed = get_count(value, key);
    else if (key == "burn_in") c.burn_in = get_number(value, key);
    else if (key == "grid") {
      if (value.is_string()) {
        c.grid = value.get<std::string>();
      } else if (value.is_array() && value.size() == 2) {
        c.grid = std::to_string(get_count(value[0], key)) + "x" + std::to_string(get_count(value[1], key));
      } else {
        throw ConfigInvalid(key, "expected \"AxB\" or [A, B]");
      }
    } else if (key == "sigma_a") c.sigma_a = get_number(value, key);
    else if (key == "sigma_b") c.sigma_b = get_number(value, key);
    else if (key == "threshold") c.threshold = get_number(value, key);
    else if (key == "format") c.format = get_string(value, key);
    else if (key == "sweep") c.sweep = value;
    else throw ConfigInvalid(key, "unknown key");
  }
  return c;
}

RawConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("config", "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_json(buf.str());
}

RawConfig overlay(RawConfig base, const RawConfig& flags) {
  auto take = [](auto& dst, const auto& src) {
    if (src) dst = src;
  };
  // A rate flag replaces densities from the file and vice versa.
  if (flags.lambda_a || flags.lambda_b) {
    base.d_a.reset();
    base.d_b.reset();
  }
  if (flags.d_a || flags.d_b) {
    base.lambda_a.reset();
    base.lambda_b.reset();
  }
  take(base.lambda_a, flags.lambda_a);
  take(base.lambda_b, flags.lambda_b);
  take(base.p, flags.p);
  take(base.d_a, flags.d_a);
  take(base.d_b, flags.d_b);
  take(base.policy, flags.policy);
  take(base.horizon, flags.horizon);
  take(base.reps, flags.reps);
  take(base.seed, flags.seed);
  take(base.burn_in, flags.burn_in);
  take(base.grid, flags.grid);
  take(base.sigma_a, flags.sigma_a);
  take(base.sigma_b, flags.sigma_b);
  take(base.threshold, flags.threshold);
  take(base.format, flags.format);
  take(base.sweep, flags.sweep);
  return base;
}

mm_grid parse_grid(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw ConfigInvalid("grid", "expected AxB, got '" + text + "'");
  try {
    std::size_t used_a = 0, used_b = 0;
    const std::string a = text.substr(0, x), b = text.substr(x + 1);
    const long av = std::stol(a, &used_a);
    const long bv = std::stol(b, &used_b);
    if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument("trailing");
    if (av < 1 || bv < 1 || av > 1'000'000 || bv > 1'000'000) {
      throw ConfigInvalid("grid", "bounds must be between 1 and 1000000");
    }
    return {static_cast<int>(av), static_cast<int>(bv)};
  } catch (const std::logic_error&) {
    throw ConfigInvalid("grid", "expected AxB, got '" + text + "'");
  }
}

std::vector<SweepPoint> parse_sweep(const json& sweep) {
  if (!sweep.is_object()) throw ConfigInvalid("sweep", "expected an object");
  std::vector<SweepPoint> out;

  if (sweep.contains("points")) {
    if (sweep.size() != 1) throw ConfigInvalid("sweep", "'points' cannot be combined with other keys");
    const json& pts = sweep["points"];
    if (!pts.is_array() || pts.empty()) throw ConfigInvalid("sweep.points", "expected a nonempty list");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string where = "sweep.points[" + std::to_string(i) + "]";
      if (!pts[i].is_object()) throw ConfigInvalid(where, "expected an object");
      std::optional<double> la, lb, p, da, db;
      for (const auto& [key, value] : pts[i].items()) {
        const std::string f = where + "." + key;
        if (key == "lambda_a") la = get_number(value, f);
        else if (key == "lambda_b") lb = get_number(value, f);
        else if (key == "p") p = get_number(value, f);
        else if (key == "d_a") da = get_number(value, f);
        else if (key == "d_b") db = get_number(value, f);
        else throw ConfigInvalid(f, "unknown key");
      }
      out.push_back({resolve_point(la, lb, p, da, db, where)});
    }
    return out;
  }

  static const std::set<std::string> known = {"d_a", "d_b", "p", "lambda_b"};
  for (const auto& [key, value] : sweep.items()) {
    if (!known.count(key)) throw ConfigInvalid("sweep." + key, "unknown key");
  }
  if (!sweep.contains("d_a")) throw ConfigInvalid("sweep.d_a", "missing");
  const auto das = number_list(sweep["d_a"], "sweep.d_a");
  const bool balanced = !sweep.contains("d_b");
  const auto dbs = balanced ? std::vector<double>{} : number_list(sweep["d_b"], "sweep.d_b");
  const bool has_p = sweep.contains("p"), has_lb = sweep.contains("lambda_b");
  if (has_p == has_lb) throw ConfigInvalid("sweep.p", "give exactly one of 'p' or 'lambda_b'");

  auto add = [&](double da, double db) {
    const double p = has_p ? get_number(sweep["p"], "sweep.p")
                           : db / get_number(sweep["lambda_b"], "sweep.lambda_b");
    out.push_back({resolve_point(std::nullopt, std::nullopt, p, da, db, "sweep")});
  };
  for (double da : das) {
    if (balanced) {
      add(da, da);
    } else {
      for (double db : dbs) add(da, db);
    }
  }
  return out;
}

RunConfig resolve(const RawConfig& raw, const std::string& default_format, bool need_params) {
  RunConfig c;
  const bool any_point = raw.lambda_a || raw.lambda_b || raw.d_a || raw.d_b;
  if (need_params || any_point) {
    c.params = resolve_point(raw.lambda_a, raw.lambda_b, raw.p, raw.d_a, raw.d_b, "");
  }

  c.policy_name = raw.policy.value_or("greedy2");
  if (c.policy_name == "all") {
    c.all_policies = true;
    c.policies = {MM_GREEDY2, MM_PATIENT2, MM_GREEDY1, MM_PATIENT1};
  } else {
    mm_policy p;
    if (mm_parse_policy(c.policy_name.c_str(), &p) != MM_OK) {
      throw ConfigInvalid("policy", "unknown policy '" + c.policy_name +
                                        "' (greedy2, patient2, greedy1, patient1, inactive, all)");
    }
    c.policies = {p};
  }

  if (raw.horizon) c.horizon = *raw.horizon;
  if (!(c.horizon > 0.0)) throw ConfigInvalid("horizon", "must be positive");
  if (raw.reps) c.reps = *raw.reps;
  if (c.reps < 1) throw ConfigInvalid("reps", "must be at least 1");
  if (raw.seed) c.seed = *raw.seed;
  if (raw.burn_in) c.burn_in = *raw.burn_in;
  if (!(c.burn_in >= 0.0 && c.burn_in < c.horizon)) {
    throw ConfigInvalid("burn_in", "must lie in [0, horizon)");
  }
  if (raw.grid) c.grid = parse_grid(*raw.grid);
  if (raw.sigma_a) {
    if (!(*raw.sigma_a >= 1.0)) throw ConfigInvalid("sigma_a", "must be at least 1");
    c.sigma_a = raw.sigma_a;
  }
  if (raw.sigma_b) {
    if (!(*raw.sigma_b >= 1.0)) throw ConfigInvalid("sigma_b", "must be at least 1");
    c.sigma_b = raw.sigma_b;
  }
  if (raw.threshold) {
    if (!(*raw.threshold > 0.0 && *raw.threshold <= 1.0)) {
      throw ConfigInvalid("threshold", "must lie in (0, 1]");
    }
    c.threshold = *raw.threshold;
  }
  c.format = raw.format.value_or(default_format);
  if (c.format != "csv" && c.format != "json") throw ConfigInvalid("format", "expected csv or json");
  if (raw.sweep) c.sweep = parse_sweep(*raw.sweep);
  return c;
}

nlohmann::json effective_json(const RunConfig& c) {
  json j;
  if (c.params) {
    j["lambda_a"] = c.params->lambda_a;
    j["lambda_b"] = c.params->lambda_b;
    j["p"] = c.params->p;
  }
  j["policy"] = c.policy_name;
  j["horizon"] = c.horizon;
  j["reps"] = c.reps;
  j["seed"] = c.seed;
  j["burn_in"] = c.burn_in;
  if (c.grid) j["grid"] = std::to_string(c.grid->a_max) + "x" + std::to_string(c.grid->b_max);
  if (c.sigma_a) j["sigma_a"] = *c.sigma_a;
  if (c.sigma_b) j["sigma_b"] = *c.sigma_b;
  j["threshold"] = c.threshold;
  j["format"] = c.format;
  if (!c.sweep.empty()) {
    json pts = json::array();
    for (const auto& s : c.sweep) {
      pts.push_back({{"lambda_a", s.params.lambda_a}, {"lambda_b", s.params.lambda_b}, {"p", s.params.p}});
    }
    j["sweep"] = {{"points", pts}};
  }
  return j;
}

}  // namespace mmcli
