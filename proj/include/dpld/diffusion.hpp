// Copyright 2026 The dpld Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Discretized projected Langevin diffusion chains, the calibrated output
// rules (last iterate, exponentially weighted average, smooth strongly convex
// last iterate), and samplers for the stationary Gibbs distribution
// proportional to exp(-beta * L(theta; D)) on the constraint set.

#ifndef DPLD_DIFFUSION_HPP
#define DPLD_DIFFUSION_HPP

#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dpld/common.hpp"
#include "dpld/model.hpp"

namespace dpld {

// The discretized chain {theta_k} together with its timestamps and the
// randomness metadata needed to reproduce it bit-for-bit.
struct Trajectory {
  std::vector<Vec> thetas;  // includes theta_0; size steps + 1
  std::vector<double> times;
  TemperatureSchedule schedule = TemperatureSchedule::constant(0.0);
  double step = 0.0;  // eta
  std::uint64_t seed = 0;

  const Vec& initial() const { return thetas.front(); }
  const Vec& final() const { return thetas.back(); }
};

struct DiffusionConfig {
  TemperatureSchedule schedule = TemperatureSchedule::constant(1.0);
  double horizon_T = 1.0;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  std::optional<Vec> theta0;   // defaults to the set centroid
  bool zero_noise_hook = false;  // test hook: reduces the chain to projected GD

  void validate() const {
    if (!(horizon_T > 0.0)) throw ValidationError("horizon_T must be positive");
    if (steps < 1) throw ValidationError("steps must be >= 1");
  }
};

// Default discretization granularity; the halving-eta stability self-test
// guards this choice.
inline std::size_t default_step_count(double horizon_T, std::size_t p) {
  const double fine = std::ceil(horizon_T * static_cast<double>(p) * 100.0);
  return static_cast<std::size_t>(std::max(1000.0, fine));
}

// One chain of the projected discretization: per step k over [k*eta,(k+1)*eta],
//   theta_{k+1} = Proj_C(theta_k - (int beta_t dt) * grad L(theta_k; D) + xi_k),
// with xi_k ~ N(0, 2*eta*I). The drift uses the exact segment integral of
// beta_t rather than a left-endpoint rule, so time-varying schedules are
// handled without additional discretization error in the temperature.
inline Trajectory run_pld(const EmpiricalLoss& loss, const ConstraintSet& set,
                          const DiffusionConfig& config) {
  config.validate();
  const std::size_t p = set.dim();
  Vec theta = config.theta0 ? *config.theta0 : set.centroid();
  if (theta.size() != p) throw ValidationError("theta0 dimension mismatch");
  theta = set.project(std::move(theta));

  const double eta = config.horizon_T / static_cast<double>(config.steps);
  const double noise_sd = config.zero_noise_hook ? 0.0 : std::sqrt(2.0 * eta);
  CounterRng rng(config.seed);

  Trajectory traj;
  traj.schedule = config.schedule;
  traj.step = eta;
  traj.seed = config.seed;
  traj.thetas.reserve(config.steps + 1);
  traj.times.reserve(config.steps + 1);
  traj.thetas.push_back(theta);
  traj.times.push_back(0.0);

  for (std::size_t k = 0; k < config.steps; ++k) {
    const double t0 = eta * static_cast<double>(k);
    const double t1 = (k + 1 == config.steps) ? config.horizon_T : t0 + eta;
    const double drift = config.schedule.segment_integral(t0, t1);
    Vec g = loss.gradient(theta);
    if (!all_finite(g))
      throw NumericError("run_pld: non-finite gradient at step " + std::to_string(k));
    for (std::size_t i = 0; i < p; ++i)
      theta[i] += -drift * g[i] + noise_sd * rng.next_gaussian();
    theta = set.project(std::move(theta));
    traj.thetas.push_back(theta);
    traj.times.push_back(t1);
  }
  return traj;
}

// Optional CSV dump (step, time, coordinates), behind the CLI verbosity flag.
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  out.precision(17);
  out << "step,time";
  for (std::size_t i = 0; i < traj.thetas.front().size(); ++i) out << ",theta" << i;
  out << '\n';
  for (std::size_t k = 0; k < traj.thetas.size(); ++k) {
    out << k << ',' << traj.times[k];
    for (double x : traj.thetas[k]) out << ',' << x;
    out << '\n';
  }
}

// A calibrated private run: the released point plus the realized schedule and
// horizon, so the accountant can certify the actual privacy of the release.
struct PrivateRunResult {
  Vec theta_priv;
  TemperatureSchedule schedule = TemperatureSchedule::constant(0.0);
  double horizon_T = 0.0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void require_eps_delta(double eps, double delta) {
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
  if (2.0 * std::log(1.0 / delta) / eps < 1.0)
    throw ValidationError(
        "calibration requires 2*log(1/delta)/eps >= 1; increase delta's strength or lower eps");
}

}  // namespace detail

// Last iterate of the constant-temperature chain, calibrated so the release
// is (eps, delta)-DP: T = |C|^2 / (2p) and beta = eps*n / (L*sqrt(8*T*log(1/delta))).
inline PrivateRunResult convex_last_iterate(const EmpiricalLoss& loss, const ConstraintSet& set,
                                            double eps, double delta, std::uint64_t seed,
                                            std::optional<std::size_t> steps = std::nullopt) {
  detail::require_eps_delta(eps, delta);
  const std::size_t p = set.dim();
  const double diam = set.diameter();
  const double L = loss.loss().lipschitz_L;
  const double T = diam * diam / (2.0 * static_cast<double>(p));
  const double beta = eps * static_cast<double>(loss.n()) /
                      (L * std::sqrt(8.0 * T * std::log(1.0 / delta)));

  DiffusionConfig config;
  config.schedule = TemperatureSchedule::constant(beta);
  config.horizon_T = T;
  config.steps = steps ? *steps : default_step_count(T, p);
  config.seed = seed;
  Trajectory traj = run_pld(loss, set, config);
  return PrivateRunResult{traj.final(), config.schedule, T, config.steps, seed};
}

// Calibration of the power-law schedule beta_t = t^a used by the
// exponentially weighted average: a and T solve the coupled system
//   a(T) = log_{max(2,T)}(eps*n / (2L*sqrt(log(1/delta)))) - 1/2,
//   T    = log^2(R + 1) / c(T)^2,  c(T) = m*eps*n / (2(a+1)L*sqrt(log(1/delta))),
// with R = m^2 eps^2 n^2 p phi0 / (2 L^2 log(1/delta)) and phi0 = |C|^2.
// The map T -> log^2(R+1)/c(T)^2 is nonincreasing, so the fixed point is
// unique and found by bisection.
struct PowerScheduleCalibration {
  double a = 0.0;
  double T = 0.0;
  double R = 0.0;
};

inline PowerScheduleCalibration calibrate_power_schedule(double m, double eps, double delta,
                                                         double L, double n, double p,
                                                         double phi0) {
  if (!(m > 0.0)) throw ValidationError("strong convexity parameter m must be positive");
  detail::require_eps_delta(eps, delta);
  const double log1d = std::log(1.0 / delta);
  const double K = eps * n / (2.0 * L * std::sqrt(log1d));
  const double R = m * m * eps * eps * n * n * p * phi0 / (2.0 * L * L * log1d);
  auto exponent_at = [&](double T) { return std::log(K) / std::log(std::max(2.0, T)) - 0.5; };
  auto target = [&](double T) {
    const double a = exponent_at(T);
    const double c = m * eps * n / (2.0 * (a + 1.0) * L * std::sqrt(log1d));
    const double lr = std::log(R + 1.0);
    return lr * lr / (c * c);
  };

  double lo = 1e-12, hi = std::max(4.0, 2.0 * target(1e-12));
  while (target(hi) > hi) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (target(mid) > mid)
      lo = mid;
    else
      hi = mid;
  }
  PowerScheduleCalibration cal;
  cal.T = 0.5 * (lo + hi);
  cal.a = exponent_at(cal.T);
  cal.R = R;
  if (!(cal.a >= 0.0))
    throw ValidationError("power-schedule calibration gives a < 0; n is too small for (eps, delta)");
  return cal;
}

// Weights of the discrete exponentially weighted average
//   w_k = (e^{m B_{t_{k+1}}} - e^{m B_{t_k}}) / (e^{m B_T} - 1),
// B_t the primitive of beta_t, rewritten against the shared maximum z = mB_T
// as e^{m B_{k+1} - z} * (1 - e^{-m dB_k}) / (1 - e^{-z}). Every factor lies
// in [0, 1], so the form neither overflows at large m B_T nor cancels at
// tiny m; the weights are nonnegative and telescope to 1.
inline std::vector<double> weighted_average_weights(const Trajectory& traj, double m) {
  const std::size_t steps = traj.thetas.size() - 1;
  const auto& sched = traj.schedule;
  std::vector<double> mB(steps + 1), w(steps);
  for (std::size_t k = 0; k <= steps; ++k) mB[k] = m * sched.integral(traj.times[k], 1);
  const double z = mB.back();
  const double denom = -std::expm1(-z);
  if (!(denom > 0.0)) throw NumericError("weighted average: degenerate weight normalization");
  for (std::size_t k = 0; k < steps; ++k) {
    const double dB = m * sched.segment_integral(traj.times[k], traj.times[k + 1]);
    w[k] = std::exp(mB[k + 1] - z) * (-std::expm1(-dB)) / denom;
  }
  return w;
}

// The released point sum_k theta_k * w_k over the left endpoints.
inline Vec weighted_average_output(const Trajectory& traj, double m) {
  const std::vector<double> w = weighted_average_weights(traj, m);
  Vec out(traj.thetas.front().size(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) axpy(w[k], traj.thetas[k], out);
  return out;
}

// Exponentially weighted average release for strongly convex losses. The m
// parameter assumes the empirical loss is 2m-strongly convex: a loss
// declaring strong convexity s is run with m = s/2.
inline PrivateRunResult sc_weighted_average(const EmpiricalLoss& loss, const ConstraintSet& set,
                                            double m, double eps, double delta,
                                            std::uint64_t seed,
                                            std::optional<std::size_t> steps = std::nullopt) {
  const std::size_t p = set.dim();
  const double diam = set.diameter();
  const double phi0 = diam * diam;
  const PowerScheduleCalibration cal =
      calibrate_power_schedule(m, eps, delta, loss.loss().lipschitz_L,
                               static_cast<double>(loss.n()), static_cast<double>(p), phi0);

  DiffusionConfig config;
  config.schedule = TemperatureSchedule::power(cal.a);
  config.horizon_T = cal.T;
  config.steps = steps ? *steps : default_step_count(cal.T, p);
  config.seed = seed;
  Trajectory traj = run_pld(loss, set, config);
  return PrivateRunResult{weighted_average_output(traj, m), config.schedule, cal.T, config.steps,
                          seed};
}

// Last iterate for smooth strongly convex losses at constant temperature:
// T = 2*lambda*log(1/delta)*L^2*log^2(R) / (m^2 eps^2 n^2) with
// R = min(m^2 eps^2 n^2 |C|^2 / (p L^2 log(1/delta)), eps^2 n^2 / (p log(1/delta))),
// beta = eps*n / (L*sqrt(8*T*log(1/delta))).
inline PrivateRunResult smooth_sc_last_iterate(const EmpiricalLoss& loss,
                                               const ConstraintSet& set, double m, double M,
                                               double eps, double delta, double lambda_const,
                                               std::uint64_t seed,
                                               std::optional<std::size_t> steps = std::nullopt) {
  if (!(m > 0.0)) throw ValidationError("m must be positive");
  if (!(M >= m)) throw ValidationError("smoothness M must be >= m");
  if (!loss.loss().smoothness_M)
    throw ValidationError("smooth_sc_last_iterate requires a declared smoothness constant");
  if (!(lambda_const > 0.0)) throw ValidationError("lambda must be positive");
  detail::require_eps_delta(eps, delta);

  const double n = static_cast<double>(loss.n());
  const double p = static_cast<double>(set.dim());
  const double L = loss.loss().lipschitz_L;
  const double diam = set.diameter();
  const double log1d = std::log(1.0 / delta);
  const double R = std::min(m * m * eps * eps * n * n * diam * diam / (p * L * L * log1d),
                            eps * eps * n * n / (p * log1d));
  if (!(R > 1.0)) throw ValidationError("smooth_sc calibration needs R > 1; n is too small");
  const double logR = std::log(R);
  const double T = 2.0 * lambda_const * log1d * L * L * logR * logR / (m * m * eps * eps * n * n);
  const double beta = eps * n / (L * std::sqrt(8.0 * T * log1d));

  DiffusionConfig config;
  config.schedule = TemperatureSchedule::constant(beta);
  config.horizon_T = T;
  config.steps = steps ? *steps : default_step_count(T, set.dim());
  config.seed = seed;
  Trajectory traj = run_pld(loss, set, config);
  return PrivateRunResult{traj.final(), config.schedule, T, config.steps, seed};
}

// ---------------------------------------------------------------------------
// Gibbs samplers

// Approximate sampler for the stationary law of the constant-temperature
// chain: one independent chain per sample (seeds derived from the master
// seed), burned in for burn_in_T; the final iterates are returned. Chains are
// independent, so they may run on several threads without changing output.
inline std::vector<Vec> gibbs_sample_langevin(const EmpiricalLoss& loss,
                                              const ConstraintSet& set, double beta,
                                              double burn_in_T, std::size_t steps,
                                              std::size_t count, std::uint64_t seed,
                                              std::size_t threads = 0) {
  if (!(beta >= 0.0)) throw ValidationError("beta must be >= 0");
  std::vector<Vec> out(count);
  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      DiffusionConfig config;
      config.schedule = TemperatureSchedule::constant(beta);
      config.horizon_T = burn_in_T;
      config.steps = steps;
      config.seed = derive_seed(seed, i);
      out[i] = run_pld(loss, set, config).final();
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<std::size_t>(threads, count == 0 ? 1 : count);
  if (threads <= 1) {
    run_range(0, count);
    return out;
  }
  std::vector<std::future<void>> tasks;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk, hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    tasks.push_back(std::async(std::launch::async, run_range, lo, hi));
  }
  for (auto& f : tasks) f.get();
  return out;
}

// Brute-force oracle for the Gibbs distribution exp(-beta*L) on a set of
// dimension <= 2: tabulates the density on a grid and samples by inverse CDF
// (1-D) or categorical cell plus uniform jitter (2-D). Exact up to grid
// resolution; serves as the independent reference for the Langevin sampler.
class GibbsGridOracle {
 public:
  GibbsGridOracle(const EmpiricalLoss& loss, const ConstraintSet& set, double beta,
                  std::size_t grid_points)
      : GibbsGridOracle(
            [&loss](const Vec& x) { return loss.value(x); }, set, beta, grid_points) {}

  // Also accepts a bare objective plus an extra feasibility mask, which is
  // what the iterated mechanism's intersected sets need.
  GibbsGridOracle(std::function<double(const Vec&)> objective, const ConstraintSet& set,
                  double beta, std::size_t grid_points,
                  std::function<bool(const Vec&)> extra_mask = nullptr)
      : set_(set), beta_(beta), grid_(grid_points), mask_(std::move(extra_mask)) {
    if (set.dim() > 2) throw ValidationError("grid oracle supports dimension <= 2 only");
    if (grid_points < 256) throw ValidationError("grid oracle needs >= 256 points per axis");
    if (!(beta >= 0.0)) throw ValidationError("beta must be >= 0");
    bounding_box(set, lo_, hi_);
    const std::size_t cells = set.dim() == 1 ? grid_ : grid_ * grid_;
    objective_values_.assign(cells, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < cells; ++i) {
      const Vec x = cell_center(i);
      if (set_.contains(x, 0.0)) objective_values_[i] = objective(x);
    }
    build();
  }

  // A new oracle over the same tabulated objective, with a different
  // temperature and feasibility mask; skips re-evaluating the objective.
  GibbsGridOracle retempered(double beta, std::function<bool(const Vec&)> extra_mask) const {
    GibbsGridOracle out = *this;
    if (!(beta >= 0.0)) throw ValidationError("beta must be >= 0");
    out.beta_ = beta;
    out.mask_ = std::move(extra_mask);
    out.build();
    return out;
  }

  std::vector<Vec> sample(std::size_t count, std::uint64_t seed) const {
    CounterRng rng(seed);
    std::vector<Vec> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_one(rng));
    return out;
  }

  // CDF of the first coordinate (1-D sets only); used for KS comparisons.
  double cdf(double x) const {
    if (set_.dim() != 1) throw ValidationError("cdf is defined for 1-D oracles only");
    if (x <= lo_[0]) return 0.0;
    if (x >= hi_[0]) return 1.0;
    const double w = (hi_[0] - lo_[0]) / static_cast<double>(grid_);
    const double pos = (x - lo_[0]) / w;
    const std::size_t cell = std::min<std::size_t>(static_cast<std::size_t>(pos), grid_ - 1);
    const double before = cell == 0 ? 0.0 : cum_[cell - 1];
    const double frac = pos - static_cast<double>(cell);
    return before + (cum_[cell] - before) * frac;
  }

  // Expectation of f under the grid density (cell-center rule).
  double expectation(const std::function<double(const Vec&)>& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < mass_.size(); ++i) s += mass_[i] * f(cell_center(i));
    return s;
  }

  // Probability mass of {x : predicate(x)} under the grid density.
  double mass_where(const std::function<bool(const Vec&)>& predicate) const {
    double s = 0.0;
    for (std::size_t i = 0; i < mass_.size(); ++i)
      if (predicate(cell_center(i))) s += mass_[i];
    return s;
  }

 private:
  static void bounding_box(const ConstraintSet& set, Vec& lo, Vec& hi) {
    if (set.kind() == ConstraintSet::Kind::box) {
      lo = set.box_lo();
      hi = set.box_hi();
    } else {
      lo = set.ball_center();
      hi = set.ball_center();
      for (std::size_t i = 0; i < lo.size(); ++i) {
        lo[i] -= set.ball_radius();
        hi[i] += set.ball_radius();
      }
    }
  }

  Vec cell_center(std::size_t flat) const {
    if (set_.dim() == 1) {
      const double w = (hi_[0] - lo_[0]) / static_cast<double>(grid_);
      return Vec{lo_[0] + (static_cast<double>(flat) + 0.5) * w};
    }
    const std::size_t ix = flat / grid_, iy = flat % grid_;
    const double wx = (hi_[0] - lo_[0]) / static_cast<double>(grid_);
    const double wy = (hi_[1] - lo_[1]) / static_cast<double>(grid_);
    return Vec{lo_[0] + (static_cast<double>(ix) + 0.5) * wx,
               lo_[1] + (static_cast<double>(iy) + 0.5) * wy};
  }

  void build() {
    const std::size_t cells = objective_values_.size();
    std::vector<double> log_w(cells, -std::numeric_limits<double>::infinity());
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cells; ++i) {
      if (!std::isfinite(objective_values_[i])) continue;  // outside the base set
      if (mask_ && !mask_(cell_center(i))) continue;
      log_w[i] = -beta_ * objective_values_[i];
      max_log = std::max(max_log, log_w[i]);
    }
    if (!std::isfinite(max_log))
      throw NumericError("grid oracle: no feasible grid cell (empty intersection?)");
    mass_.assign(cells, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      if (std::isfinite(log_w[i])) mass_[i] = std::exp(log_w[i] - max_log);
      total += mass_[i];
    }
    cum_.assign(cells, 0.0);
    double run = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      mass_[i] /= total;
      run += mass_[i];
      cum_[i] = run;
    }
    cum_.back() = 1.0;
  }

  Vec sample_one(CounterRng& rng) const {
    const double u = rng.next_double();
    const std::size_t cell =
        std::lower_bound(cum_.begin(), cum_.end(), u) - cum_.begin();
    const std::size_t flat = std::min(cell, cum_.size() - 1);
    // Jitter uniformly within the cell; retry if the jittered point falls
    // outside the feasible region (possible in boundary cells), so samples
    // always respect the set.
    for (int attempt = 0; attempt < 64; ++attempt) {
      Vec x;
      if (set_.dim() == 1) {
        const double w = (hi_[0] - lo_[0]) / static_cast<double>(grid_);
        x = Vec{lo_[0] + (static_cast<double>(flat) + rng.next_double()) * w};
      } else {
        const std::size_t ix = flat / grid_, iy = flat % grid_;
        const double wx = (hi_[0] - lo_[0]) / static_cast<double>(grid_);
        const double wy = (hi_[1] - lo_[1]) / static_cast<double>(grid_);
        x = Vec{lo_[0] + (static_cast<double>(ix) + rng.next_double()) * wx,
                lo_[1] + (static_cast<double>(iy) + rng.next_double()) * wy};
      }
      if (set_.contains(x, 0.0) && (!mask_ || mask_(x))) return x;
    }
    return cell_center(flat);
  }

  ConstraintSet set_;
  double beta_;
  std::size_t grid_;
  std::function<bool(const Vec&)> mask_;
  Vec lo_, hi_;
  std::vector<double> objective_values_;  // NaN outside the base set
  std::vector<double> mass_;              // normalized cell masses
  std::vector<double> cum_;               // cumulative masses
};

inline std::vector<Vec> gibbs_oracle_sample(const EmpiricalLoss& loss, const ConstraintSet& set,
                                            double beta, std::size_t grid_points,
                                            std::size_t count, std::uint64_t seed) {
  return GibbsGridOracle(loss, set, beta, grid_points).sample(count, seed);
}

}  // namespace dpld

#endif  // DPLD_DIFFUSION_HPP
