#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "matchmarket/matchmarket.h"

namespace mmcli {

/// Bad user input. `field` names the offending config key or flag.
class ConfigInvalid : public std::runtime_error {
 public:
  ConfigInvalid(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : "field '" + field + "': " + message),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct SweepPoint {
  mm_params params;
};

/// Raw values as read from the config file and flags, before resolution.
struct RawConfig {
  std::optional<double> lambda_a, lambda_b, p, d_a, d_b;
  std::optional<std::string> policy;
  std::optional<double> horizon;
  std::optional<std::uint64_t> reps;
  std::optional<std::uint64_t> seed;
  std::optional<double> burn_in;
  std::optional<std::string> grid;
  std::optional<double> sigma_a, sigma_b;
  std::optional<double> threshold;
  std::optional<std::string> format;
  std::optional<nlohmann::json> sweep;
};

struct RunConfig {
  std::optional<mm_params> params;  // absent only for pure sweep configs
  std::vector<mm_policy> policies;
  bool all_policies = false;  // adds the omniscient benchmark to simulate/compare
  std::string policy_name = "greedy2";
  double horizon = 100.0;
  std::uint64_t reps = 1;
  std::uint64_t seed = 1;
  double burn_in = 0.0;
  std::optional<mm_grid> grid;
  std::optional<double> sigma_a, sigma_b;
  double threshold = 0.1;
  std::string format = "csv";
  std::vector<SweepPoint> sweep;
};

/// Parses a config file strictly: unknown keys and wrongly typed values are
/// rejected.
RawConfig parse_config_json(const std::string& text);
RawConfig load_config_file(const std::string& path);

/// Flag values override the file.
RawConfig overlay(RawConfig base, const RawConfig& flags);

/// Validates and resolves densities into rates. `need_params` requires a
/// single market point; sweeps are resolved when present.
RunConfig resolve(const RawConfig& raw, const std::string& default_format, bool need_params);

mm_grid parse_grid(const std::string& text);
std::vector<SweepPoint> parse_sweep(const nlohmann::json& sweep);

/// Effective configuration, echoed into every output.
nlohmann::json effective_json(const RunConfig& config);

}  // namespace mmcli
