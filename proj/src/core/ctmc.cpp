#include "ctmc.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "event_sim.hpp"
#include "parallel.hpp"

namespace matchmarket {
namespace {

void add(std::vector<RateEntry>& out, State from, int dk, int dj, double rate) {
  const State to{from.k + dk, from.j + dj};
  if (rate > 0.0 && to.k >= 0 && to.j >= 0) out.push_back({from, to, rate});
}

void require_grid(Grid grid) {
  if (grid.a_max < 1 || grid.b_max < 1) {
    std::ostringstream msg;
    msg << "grid bounds must be at least 1, got " << grid.a_max << "x" << grid.b_max;
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
}

/// Outgoing in-grid transitions for every state, in grid order.
struct CensoredGenerator {
  Grid grid;
  std::vector<std::size_t> offsets;  // CSR offsets into targets/rates
  std::vector<std::size_t> targets;
  std::vector<double> rates;
  std::vector<double> outflow;  // total censored outflow per state

  CensoredGenerator(Policy policy, const MarketParams& params, Grid g) : grid(g) {
    const std::size_t n = grid.states();
    offsets.reserve(n + 1);
    outflow.assign(n, 0.0);
    offsets.push_back(0);
    for (int k = 0; k <= grid.a_max; ++k) {
      for (int j = 0; j <= grid.b_max; ++j) {
        for (const RateEntry& e : transition_rates(policy, params, {k, j})) {
          if (!grid.contains(e.to)) continue;
          targets.push_back(grid.index(e.to.k, e.to.j));
          rates.push_back(e.rate);
          outflow[grid.index(k, j)] += e.rate;
        }
        offsets.push_back(targets.size());
      }
    }
  }

  /// y = pi Q
  void apply(const std::vector<double>& pi, std::vector<double>& y) const {
    const std::size_t n = pi.size();
    for (std::size_t s = 0; s < n; ++s) y[s] = -outflow[s] * pi[s];
    for (std::size_t s = 0; s < n; ++s) {
      const double m = pi[s];
      if (m == 0.0) continue;
      for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) y[targets[e]] += m * rates[e];
    }
  }
};

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void clamp_and_normalize(std::vector<double>& pi) {
  double total = 0.0;
  for (double& x : pi) {
    if (x < 0.0) x = 0.0;
    total += x;
  }
  for (double& x : pi) x /= total;
}

std::vector<double> solve_direct(const CensoredGenerator& gen) {
  using SpMat = Eigen::SparseMatrix<double>;
  const std::size_t n = gen.grid.states();
  // Q^T pi = 0 with the equation of state 0 replaced by sum(pi) = 1.
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(gen.targets.size() + 2 * n);
  for (std::size_t s = 0; s < n; ++s) {
    if (s != 0) triplets.emplace_back(s, s, -gen.outflow[s]);
    for (std::size_t e = gen.offsets[s]; e < gen.offsets[s + 1]; ++e) {
      if (gen.targets[e] != 0) triplets.emplace_back(gen.targets[e], s, gen.rates[e]);
    }
    triplets.emplace_back(0, s, 1.0);
  }
  SpMat a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) {
    throw Error(ErrorCode::SolverDiverged, "sparse LU factorization failed: " + lu.lastErrorMessage());
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  rhs[0] = 1.0;
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) {
    throw Error(ErrorCode::SolverDiverged, "sparse LU solve failed");
  }
  // One step of iterative refinement against the same factorization.
  Eigen::VectorXd r = rhs - a * x;
  x += lu.solve(r);
  return std::vector<double>(x.data(), x.data() + x.size());
}

std::vector<double> solve_power(const CensoredGenerator& gen, const SolveOptions& options) {
  const std::size_t n = gen.grid.states();
  const double uniform_rate = 1.05 * (*std::max_element(gen.outflow.begin(), gen.outflow.end()));
  std::vector<double> pi(n, 0.0), flux(n);
  pi[0] = 1.0;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    gen.apply(pi, flux);
    double step = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double delta = flux[s] / uniform_rate;
      pi[s] += delta;
      step += std::abs(delta);
    }
    if (0.5 * step < options.step_tolerance && max_abs(flux) < options.residual_tolerance) {
      return pi;
    }
  }
  std::ostringstream msg;
  msg << "power iteration did not converge within " << options.max_iterations << " iterations";
  throw Error(ErrorCode::SolverDiverged, msg.str());
}

double boundary_mass(const PoolDistribution& d) {
  double leak = 0.0;
  for (int k = 0; k <= d.grid.a_max; ++k) {
    for (int j = 0; j <= d.grid.b_max; ++j) {
      if (k == d.grid.a_max || j == d.grid.b_max) leak += d.at(k, j);
    }
  }
  return leak;
}

std::vector<double> survival_table(double p, int n) {
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) t[i] = survival_pow(p, i);
  return t;
}

}  // namespace

std::vector<RateEntry> transition_rates(Policy policy, const MarketParams& params, State s) {
  if (s.k < 0 || s.j < 0) throw Error(ErrorCode::InvalidArgument, "pool sizes must be nonnegative");
  const double la = params.lambda_a();
  const double lb = params.lambda_b();
  const double p = params.p();
  const double k = s.k;
  const double j = s.j;
  const double qk = survival_pow(p, k);  // (1-p)^k
  const double qj = survival_pow(p, j);  // (1-p)^j

  std::vector<RateEntry> out;
  out.reserve(5);
  switch (policy) {
    case Policy::Greedy2:
      add(out, s, +1, 0, la * qj);
      add(out, s, 0, +1, lb * qk);
      add(out, s, -1, 0, k + lb * (1.0 - qk));
      add(out, s, 0, -1, j + la * (1.0 - qj));
      break;
    case Policy::Patient2:
      add(out, s, +1, 0, la);
      add(out, s, 0, +1, lb);
      add(out, s, -1, 0, k * qj);
      add(out, s, 0, -1, j * qk);
      add(out, s, -1, -1, k * (1.0 - qj) + j * (1.0 - qk));
      break;
    case Policy::Greedy1:
      add(out, s, +1, 0, la);
      add(out, s, 0, +1, lb * qk);
      add(out, s, -1, 0, k + lb * (1.0 - qk));
      add(out, s, 0, -1, j);
      break;
    case Policy::Patient1:
      add(out, s, +1, 0, la);
      add(out, s, 0, +1, lb);
      add(out, s, -1, 0, k);
      add(out, s, -1, -1, j * (1.0 - qk));
      add(out, s, 0, -1, j * qk);
      break;
    case Policy::Inactive:
      add(out, s, +1, 0, la);
      add(out, s, 0, +1, lb);
      add(out, s, -1, 0, k);
      add(out, s, 0, -1, j);
      break;
  }
  return out;
}

Grid default_grid(const MarketParams& params) noexcept {
  auto bound = [](double lambda) {
    return static_cast<int>(std::ceil(lambda + 10.0 * std::sqrt(lambda + 1.0)));
  };
  return {bound(params.lambda_a()), bound(params.lambda_b())};
}

double PoolDistribution::total() const noexcept {
  double s = 0.0;
  for (double m : mass) s += m;
  return s;
}

PoolDistribution PoolDistribution::zeros(Grid grid) {
  PoolDistribution d;
  d.grid = grid;
  d.mass.assign(grid.states(), 0.0);
  return d;
}

PoolDistribution PoolDistribution::point_mass(Grid grid, State s) {
  if (!grid.contains(s)) throw Error(ErrorCode::InvalidArgument, "point mass outside grid");
  PoolDistribution d = zeros(grid);
  d.at(s.k, s.j) = 1.0;
  return d;
}

PoolDistribution stationary_distribution(Policy policy, const MarketParams& params, Grid grid,
                                         const SolveOptions& options) {
  require_grid(grid);
  const CensoredGenerator gen(policy, params, grid);

  const bool direct = options.method == SolveMethod::Direct ||
                      (options.method == SolveMethod::Auto &&
                       grid.states() <= options.direct_max_states);
  std::vector<double> pi = direct ? solve_direct(gen) : solve_power(gen, options);
  clamp_and_normalize(pi);

  std::vector<double> flux(pi.size());
  gen.apply(pi, flux);
  const double residual = max_abs(flux);
  if (!(residual < options.residual_tolerance)) {
    std::ostringstream msg;
    msg << "stationary residual " << residual << " exceeds " << options.residual_tolerance;
    throw Error(ErrorCode::SolverDiverged, msg.str());
  }

  PoolDistribution d;
  d.grid = grid;
  d.mass = std::move(pi);
  d.policy = policy;
  d.params = params;
  d.leak = boundary_mass(d);
  if (d.leak > options.leak_threshold) {
    const Grid bigger{2 * grid.a_max, 2 * grid.b_max};
    std::ostringstream msg;
    msg << "grid " << grid.a_max << "x" << grid.b_max << " too small: boundary mass " << d.leak
        << " exceeds " << options.leak_threshold << "; try --grid " << bigger.a_max << "x"
        << bigger.b_max;
    throw Error(ErrorCode::GridTooSmall, msg.str());
  }
  return d;
}

double generator_residual(Policy policy, const MarketParams& params, const PoolDistribution& dist) {
  const CensoredGenerator gen(policy, params, dist.grid);
  std::vector<double> flux(dist.mass.size());
  gen.apply(dist.mass, flux);
  return max_abs(flux);
}

StationaryFunctionals stationary_loss(Policy policy, const MarketParams& params,
                                      const PoolDistribution& dist) {
  if (dist.policy && *dist.policy != policy) {
    std::ostringstream msg;
    msg << "distribution solved for " << to_string(*dist.policy) << ", requested "
        << to_string(policy);
    throw Error(ErrorCode::PolicyMismatch, msg.str());
  }
  if (dist.params && !(*dist.params == params)) {
    throw Error(ErrorCode::PolicyMismatch, "distribution solved for different market parameters");
  }
  const Grid g = dist.grid;
  const auto qa = survival_table(params.p(), g.a_max);
  const auto qb = survival_table(params.p(), g.b_max);
  StationaryFunctionals f;
  for (int k = 0; k <= g.a_max; ++k) {
    for (int j = 0; j <= g.b_max; ++j) {
      const double m = dist.at(k, j);
      if (m == 0.0) continue;
      f.e_a += m * k;
      f.e_b += m * j;
      f.e_a_geo += m * k * qb[j];
      f.e_b_geo += m * j * qa[k];
    }
  }
  const double la = params.lambda_a();
  const double lb = params.lambda_b();
  auto patient = [&](Side side) { return behaviour(policy, side) == Behaviour::Patient; };
  f.loss_a = (patient(Side::U) ? f.e_a_geo : f.e_a) / la;
  f.loss_b = (patient(Side::V) ? f.e_b_geo : f.e_b) / lb;
  f.loss_total = (la * f.loss_a + lb * f.loss_b) / (la + lb);
  return f;
}

namespace {

PoolDistribution histogram(const std::vector<PoolSnapshot>& samples, Grid grid) {
  PoolDistribution d = PoolDistribution::zeros(grid);
  std::size_t outside = 0;
  for (const PoolSnapshot& s : samples) {
    const State st{static_cast<int>(s.a), static_cast<int>(s.b)};
    if (grid.contains(st)) {
      d.at(st.k, st.j) += 1.0;
    } else {
      ++outside;
    }
  }
  const double inside = static_cast<double>(samples.size() - outside);
  if (inside > 0.0) {
    for (double& m : d.mass) m /= inside;
  }
  d.leak = samples.empty() ? 0.0 : static_cast<double>(outside) / static_cast<double>(samples.size());
  return d;
}

}  // namespace

PoolDistribution empirical_distribution(const MarketParams& params, Policy policy, double t,
                                        std::size_t n_reps, std::uint64_t seed, Grid grid) {
  require_grid(grid);
  if (!(t > 0.0)) throw Error(ErrorCode::HorizonNonPositive, "sampling time must be positive");
  if (n_reps == 0) throw Error(ErrorCode::InvalidArgument, "n_reps must be at least 1");
  std::vector<PoolSnapshot> samples(n_reps);
  SimOptions options;
  options.record_edges = false;
  const double at[] = {t};
  parallel_for(n_reps, [&](std::size_t rep) {
    const Realization r = generate_realization(params, t, {seed, rep});
    samples[rep] = pool_size_timeseries(run_policy(r, policy, options), at).front();
  });
  PoolDistribution d = histogram(samples, grid);
  d.policy = policy;
  d.params = params;
  return d;
}

double tv_distance(const PoolDistribution& d1, const PoolDistribution& d2, TvConvention convention) {
  if (!(d1.grid == d2.grid)) {
    std::ostringstream msg;
    msg << "grid mismatch: " << d1.grid.a_max << "x" << d1.grid.b_max << " vs " << d2.grid.a_max
        << "x" << d2.grid.b_max;
    throw Error(ErrorCode::GridMismatch, msg.str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < d1.mass.size(); ++i) s += std::abs(d1.mass[i] - d2.mass[i]);
  return convention == TvConvention::Half ? 0.5 * s : s;
}

MixingCurve mixing_curve(const MarketParams& params, Policy policy, std::size_t n_reps,
                         std::uint64_t seed, Grid grid, const MixingOptions& options) {
  if (n_reps == 0) throw Error(ErrorCode::InvalidArgument, "n_reps must be at least 1");
  if (!(options.first_time > 0.0 && options.ratio > 1.0 && options.max_time >= options.first_time)) {
    throw Error(ErrorCode::InvalidArgument, "invalid mixing time grid");
  }
  SolveOptions solve;
  solve.leak_threshold = std::numeric_limits<double>::infinity();
  const PoolDistribution target = stationary_distribution(policy, params, grid, solve);

  MixingCurve curve;
  curve.times.push_back(0.0);
  for (double t = options.first_time; t <= options.max_time * (1.0 + 1e-12); t *= options.ratio) {
    curve.times.push_back(t);
  }
  const std::span<const double> sampled(curve.times.begin() + 1, curve.times.end());
  std::vector<std::vector<PoolSnapshot>> samples(n_reps);
  SimOptions sim;
  sim.record_edges = false;
  parallel_for(n_reps, [&](std::size_t rep) {
    const Realization r = generate_realization(params, sampled.back(), {seed, rep});
    samples[rep] = pool_size_timeseries(run_policy(r, policy, sim), sampled);
  });

  // Every trajectory starts empty.
  curve.tv.push_back(tv_distance(PoolDistribution::point_mass(grid, {0, 0}), target));
  std::vector<PoolSnapshot> column(n_reps);
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    for (std::size_t rep = 0; rep < n_reps; ++rep) column[rep] = samples[rep][i];
    curve.tv.push_back(tv_distance(histogram(column, grid), target));
  }
  return curve;
}

MixingEstimate first_time_below(const MixingCurve& curve, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1]");
  }
  for (std::size_t i = 0; i < curve.times.size(); ++i) {
    if (curve.tv[i] <= epsilon) {
      const double next = i + 1 < curve.times.size() ? curve.times[i + 1] : curve.times[i];
      return {curve.times[i], next - curve.times[i], i, curve.tv[i]};
    }
  }
  std::ostringstream msg;
  msg << "TV distance stayed above " << epsilon << " up to t=" << curve.times.back();
  throw Error(ErrorCode::NotConvergedWithinBudget, msg.str());
}

MixingEstimate estimate_mixing_time(const MarketParams& params, Policy policy, double epsilon,
                                    std::size_t n_reps, std::uint64_t seed, Grid grid,
                                    const MixingOptions& options) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1]");
  }
  return first_time_below(mixing_curve(params, policy, n_reps, seed, grid, options), epsilon);
}

std::string to_csv(const PoolDistribution& dist) {
  std::string out = "i,j,prob\n";
  char buf[64];
  for (int k = 0; k <= dist.grid.a_max; ++k) {
    for (int j = 0; j <= dist.grid.b_max; ++j) {
      auto res = std::to_chars(buf, buf + sizeof buf, dist.at(k, j));
      out += std::to_string(k);
      out += ',';
      out += std::to_string(j);
      out += ',';
      out.append(buf, res.ptr);
      out += '\n';
    }
  }
  auto res = std::to_chars(buf, buf + sizeof buf, dist.leak);
  out += "# leak=";
  out.append(buf, res.ptr);
  out += '\n';
  return out;
}

}  // namespace matchmarket
