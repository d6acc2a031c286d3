#include "bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace matchmarket {
namespace {

constexpr double kRootTolerance = 1e-12;
constexpr double kResidualTolerance = 1e-9;

double characteristic(double x, double lhs, double other, double p) noexcept {
  return x + other * (1.0 - survival_pow(p, x)) - lhs;
}

struct Oriented {
  double da, db, la, lb;
  bool swapped;
};

Oriented orient(const MarketParams& params) noexcept {
  if (params.d_a() >= params.d_b()) {
    return {params.d_a(), params.d_b(), params.lambda_a(), params.lambda_b(), false};
  }
  return {params.d_b(), params.d_a(), params.lambda_b(), params.lambda_a(), true};
}

}  // namespace

double solve_characteristic_root(double lhs, double other, double p) {
  if (!(lhs > 0.0) || !(other >= 0.0) || !std::isfinite(lhs) || !std::isfinite(other)) {
    std::ostringstream msg;
    msg << "root needs lhs > 0 and other >= 0 (lhs=" << lhs << ", other=" << other << ")";
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::ProbabilityOutOfRange, "p must lie in (0,1)");
  if (other == 0.0) return lhs;

  // f(0) = -lhs < 0 and f(lhs) = other (1 - (1-p)^lhs) >= 0; f is strictly increasing.
  double lo = 0.0;
  double hi = lhs;
  for (int it = 0; it < 400 && hi - lo > kRootTolerance * lhs; ++it) {
    const double mid = 0.5 * (lo + hi);
    (characteristic(mid, lhs, other, p) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double root_residual(double root, double lhs, double other, double p) noexcept {
  return std::abs(characteristic(root, lhs, other, p)) / lhs;
}

double solve_l1(const MarketParams& params, double k1, double sigma_a) {
  if (!(sigma_a >= 1.0)) throw Error(ErrorCode::InvalidArgument, "sigma_a must be at least 1");
  const double p = params.p();
  const double direct = params.lambda_b() * survival_pow(p, k1 - sigma_a);
  const double via_identity =
      survival_pow(p, -sigma_a) * (params.lambda_b() - params.lambda_a() + k1);
  if (std::abs(direct - via_identity) > 1e-9 * std::max(1.0, std::abs(direct))) {
    std::ostringstream msg;
    msg << "l1 closed forms disagree (" << direct << " vs " << via_identity
        << "); is k1 a root of the characteristic equation?";
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  return direct;
}

double default_sigma(double lambda) noexcept {
  return std::max(1.0, std::sqrt(lambda * std::log(lambda)));
}

RootSet solve_roots(const MarketParams& params, std::optional<double> sigma_a,
                    std::optional<double> sigma_b) {
  const double la = params.lambda_a();
  const double lb = params.lambda_b();
  const double p = params.p();
  RootSet r;
  r.sigma_a = sigma_a.value_or(default_sigma(la));
  r.sigma_b = sigma_b.value_or(default_sigma(lb));
  if (!(r.sigma_a >= 1.0) || !(r.sigma_b >= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "sigma shifts must be at least 1");
  }
  r.k2 = solve_characteristic_root(la, lb, p);
  r.l2 = solve_characteristic_root(lb, la, p);
  r.k1 = r.k2;
  r.k2_lower = solve_characteristic_root(la, lb + r.sigma_b, p);
  r.l2_lower = solve_characteristic_root(lb, la + r.sigma_a, p);
  r.k1_lower = r.k2_lower;
  if (lb - r.sigma_b >= 0.0) r.k1_upper = solve_characteristic_root(la, lb - r.sigma_b, p);
  r.l1 = solve_l1(params, r.k1, r.sigma_a);
  return r;
}

bool SandwichChecks::all() const noexcept {
  return k2_lower_bound && k2_upper_bound && l2_lower_bound && l2_upper_bound && k2_shift_order &&
         l2_shift_order && k1_shift_order && residuals_ok;
}

SandwichChecks check_root_sandwiches(const MarketParams& params, const RootSet& roots) {
  const Oriented o = orient(params);
  const double p = params.p();
  // Quantities on the oriented market.
  const double k2 = o.swapped ? roots.l2 : roots.k2;
  const double l2 = o.swapped ? roots.k2 : roots.l2;
  const double sa = o.swapped ? roots.sigma_b : roots.sigma_a;
  const double sb = o.swapped ? roots.sigma_a : roots.sigma_b;
  const auto k2_low = o.swapped ? roots.l2_lower : roots.k2_lower;
  const auto l2_low = o.swapped ? roots.k2_lower : roots.l2_lower;

  SandwichChecks c;
  c.oriented = !o.swapped;
  c.k2_lower_bound = std::max(o.la - o.lb, o.la / (1.0 + o.db)) <= k2;
  c.k2_upper_bound = k2 <= o.la - o.lb + std::log(o.db + 3.0) / p;
  c.l2_lower_bound = o.lb / (1.0 + o.da) <= l2;
  c.l2_upper_bound = l2 <= (o.lb / o.db) * std::log(o.db + 3.0);
  c.k2_shift_order = k2_low && k2 - sb < *k2_low && *k2_low < k2;
  c.l2_shift_order = l2_low && l2 - sa < *l2_low && *l2_low < l2;

  // The one-sided roots keep the caller's sides (U inactive).
  const double k1 = roots.k1;
  c.k1_shift_order = roots.k1_lower && k1 - roots.sigma_b < *roots.k1_lower &&
                     *roots.k1_lower < k1 &&
                     (!roots.k1_upper ||
                      (k1 < *roots.k1_upper &&
                       *roots.k1_upper < std::min(k1 + roots.sigma_b, params.lambda_a())));

  const double la = params.lambda_a();
  const double lb = params.lambda_b();
  bool ok = root_residual(roots.k2, la, lb, p) < kResidualTolerance &&
            root_residual(roots.l2, lb, la, p) < kResidualTolerance &&
            root_residual(roots.k1, la, lb, p) < kResidualTolerance;
  if (roots.k2_lower) ok = ok && root_residual(*roots.k2_lower, la, lb + roots.sigma_b, p) < kResidualTolerance;
  if (roots.l2_lower) ok = ok && root_residual(*roots.l2_lower, lb, la + roots.sigma_a, p) < kResidualTolerance;
  if (roots.k1_upper) ok = ok && root_residual(*roots.k1_upper, la, lb - roots.sigma_b, p) < kResidualTolerance;
  c.residuals_ok = ok;
  return c;
}

namespace {

void flag_vacuous(BoundSet& b) {
  const std::pair<const char*, double> uppers[] = {
      {"greedy2_upper_a", b.greedy2_upper_a},   {"greedy2_upper_b", b.greedy2_upper_b},
      {"greedy2_upper_total", b.greedy2_upper_total},
      {"patient2_upper_a", b.patient2_upper_a}, {"patient2_upper_b", b.patient2_upper_b},
      {"patient2_upper_total", b.patient2_upper_total},
      {"alg1_upper_a", b.alg1_upper_a},         {"alg1_upper_b", b.alg1_upper_b},
      {"alg1_upper_total", b.alg1_upper_total},
  };
  b.vacuous.clear();
  for (const auto& [name, value] : uppers) {
    if (value > 1.0) b.vacuous.emplace_back(name);
  }
}

void fill_upper(BoundSet& b, const MarketParams& params) {
  const Oriented o = orient(params);
  const double delta = (o.da - o.db) / (o.da + o.db);
  const double log_term = std::log(o.db + 3.0);

  // Two-sided bounds on the oriented market; per-side values mapped back.
  const double big_side = (o.da - o.db) / o.da + log_term / o.da;
  const double g2_small = log_term / o.db;
  const double exponent = std::max(o.da - o.db, o.da / (1.0 + o.db));
  const double p2_small = std::exp(-exponent);

  b.swapped_sides = o.swapped;
  b.greedy2_upper_a = o.swapped ? g2_small : big_side;
  b.greedy2_upper_b = o.swapped ? big_side : g2_small;
  b.greedy2_upper_total = delta + 2.0 * log_term / (o.da + o.db);
  b.patient2_upper_a = o.swapped ? p2_small : big_side;
  b.patient2_upper_b = o.swapped ? big_side : p2_small;
  b.patient2_upper_total = delta + log_term / (o.da + o.db) + p2_small;
  b.patient2_balanced_exponent = exponent;

  // One-sided: U stays inactive, so no reorientation.
  const double da = params.d_a();
  const double db = params.d_b();
  const double log_b = std::log(db + 3.0);
  if (da >= db) {
    b.alg1_upper_a = (da - db) / da + log_b / da;
    b.alg1_upper_b = log_b / db;
  } else {
    b.alg1_upper_a = log_b / da;
    b.alg1_upper_b = (db - da) / db + log_b / db;
  }
  b.alg1_upper_total = std::abs(db - da) / (da + db) + 2.0 * log_b / (da + db);
  flag_vacuous(b);
}

void fill_lower(BoundSet& b, const MarketParams& params) {
  const Oriented o = orient(params);
  const double p = params.p();
  const double delta = densities(params).delta;
  b.delta_lower = delta;
  b.swapped_sides = o.swapped;

  b.two_sided_in_regime = o.db >= 1.0 && p < 0.1;
  if (b.two_sided_in_regime) {
    const double opt = 1.0 / (1.0 + 2.0 * o.da + o.db + 2.0 * o.da * o.da / o.la +
                              o.db * o.db / o.lb);
    const double omn =
        0.5 * (std::exp(-(o.da + o.da * p)) / (1.0 + o.da + o.da * o.da / o.la) +
               std::exp(-(o.db + o.db * p)) / (1.0 + o.db + o.db * o.db / o.lb));
    b.opt_lower = std::max(opt, delta);
    b.omn_lower = std::max(omn, delta);
  } else {
    b.opt_lower = delta;
    b.omn_lower = delta;
    b.regime_flags.emplace_back("opt_omn_lower_out_of_regime");
  }

  const double da = params.d_a();
  const double db = params.d_b();
  const double la = params.lambda_a();
  const double lb = params.lambda_b();
  b.one_sided_in_regime = da >= 1.0 && db >= 1.0 && p < 0.1;
  if (b.one_sided_in_regime) {
    b.greedy1_lower = std::max(1.0 / (2.0 * (1.0 + db + db * db / lb)), delta);
    b.patient1_lower =
        std::max(std::log(db + db * db / lb) / (da + db + da * da / la + db * db / lb), delta);
  } else {
    b.greedy1_lower = delta;
    b.patient1_lower = delta;
    b.regime_flags.emplace_back("one_sided_lower_out_of_regime");
  }
}

}  // namespace

BoundSet upper_bounds(const MarketParams& params) {
  BoundSet b;
  fill_upper(b, params);
  return b;
}

BoundSet lower_bounds(const MarketParams& params) {
  BoundSet b;
  fill_lower(b, params);
  return b;
}

BoundSet all_bounds(const MarketParams& params) {
  BoundSet b;
  fill_upper(b, params);
  fill_lower(b, params);
  return b;
}

double policy_upper_bound(const BoundSet& bounds, Policy policy) {
  switch (policy) {
    case Policy::Greedy2: return bounds.greedy2_upper_total;
    case Policy::Patient2: return bounds.patient2_upper_total;
    case Policy::Greedy1:
    case Policy::Patient1: return bounds.alg1_upper_total;
    case Policy::Inactive: return 1.0;
  }
  return 1.0;
}

double policy_lower_bound(const BoundSet& bounds, Policy policy) {
  switch (policy) {
    case Policy::Greedy2: return bounds.opt_lower;
    case Policy::Patient2: return bounds.omn_lower;
    case Policy::Greedy1: return bounds.greedy1_lower;
    case Policy::Patient1: return bounds.patient1_lower;
    case Policy::Inactive: return bounds.delta_lower;
  }
  return 0.0;
}

nlohmann::json to_json(const BoundSet& b) {
  return {
      {"greedy2_upper_a", b.greedy2_upper_a},
      {"greedy2_upper_b", b.greedy2_upper_b},
      {"greedy2_upper_total", b.greedy2_upper_total},
      {"patient2_upper_a", b.patient2_upper_a},
      {"patient2_upper_b", b.patient2_upper_b},
      {"patient2_upper_total", b.patient2_upper_total},
      {"patient2_balanced_exponent", b.patient2_balanced_exponent},
      {"alg1_upper_a", b.alg1_upper_a},
      {"alg1_upper_b", b.alg1_upper_b},
      {"alg1_upper_total", b.alg1_upper_total},
      {"opt_lower", b.opt_lower},
      {"omn_lower", b.omn_lower},
      {"greedy1_lower", b.greedy1_lower},
      {"patient1_lower", b.patient1_lower},
      {"delta_lower", b.delta_lower},
      {"two_sided_in_regime", b.two_sided_in_regime},
      {"one_sided_in_regime", b.one_sided_in_regime},
      {"swapped_sides", b.swapped_sides},
      {"asymptotic", true},
      {"regime_flags", b.regime_flags},
      {"vacuous_upper_bounds", b.vacuous},
  };
}

nlohmann::json to_json(const RootSet& r) {
  nlohmann::json j = {{"k2", r.k2}, {"l2", r.l2}, {"k1", r.k1}, {"sigma_a", r.sigma_a},
                      {"sigma_b", r.sigma_b}};
  auto opt = [&](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  opt("k2_lower", r.k2_lower);
  opt("l2_lower", r.l2_lower);
  opt("k1_lower", r.k1_lower);
  opt("k1_upper", r.k1_upper);
  opt("l1", r.l1);
  return j;
}

nlohmann::json to_json(const SandwichChecks& c) {
  return {{"k2_lower_bound", c.k2_lower_bound}, {"k2_upper_bound", c.k2_upper_bound},
          {"l2_lower_bound", c.l2_lower_bound}, {"l2_upper_bound", c.l2_upper_bound},
          {"k2_shift_order", c.k2_shift_order}, {"l2_shift_order", c.l2_shift_order},
          {"k1_shift_order", c.k1_shift_order}, {"residuals_ok", c.residuals_ok},
          {"oriented", c.oriented},             {"all", c.all()}};
}

}  // namespace matchmarket
