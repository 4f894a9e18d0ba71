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
// End-to-end private optimizers: the exponential mechanism, its iterated
// variant for strongly convex losses, a DP-SGD baseline, regularized SCO
// wrappers, and the non-convex pure-DP risk bound.

#ifndef DPLD_MECHANISMS_HPP
#define DPLD_MECHANISMS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dpld/accountant.hpp"
#include "dpld/common.hpp"
#include "dpld/diffusion.hpp"
#include "dpld/model.hpp"

namespace dpld {

enum class Sampler { grid_oracle, langevin };

inline Sampler sampler_from_string(const std::string& s) {
  if (s == "grid_oracle" || s == "grid") return Sampler::grid_oracle;
  if (s == "langevin") return Sampler::langevin;
  throw ValidationError("unknown sampler: " + s);
}

struct SamplerOptions {
  std::size_t grid_points = 512;  // per axis, grid oracle
  double burn_in_T = 5.0;         // Langevin chains
  std::size_t langevin_steps = 0;  // 0 -> default_step_count
};

// Per-round record of the iterated mechanism.
struct IemRound {
  Vec theta;
  double eps_i = 0.0;
  double temperature = 0.0;
  double radius = 0.0;         // ball radius added after this round
  double set_bound = 0.0;      // |C_{i-1}| bound used by this round
};

struct MechanismReport {
  Vec theta_priv;
  double claimed_eps = 0.0;
  double claimed_delta = 0.0;
  nlohmann::json params;  // temperature or schedule record
  std::vector<IemRound> trace;
  std::uint64_t seed = 0;
  double wall_time_sec = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["theta_priv"] = theta_priv;
    j["eps"] = claimed_eps;
    j["delta"] = claimed_delta;
    j["params"] = params;
    j["seed"] = seed;
    j["wall_time_sec"] = wall_time_sec;
    j["trace"] = nlohmann::json::array();
    for (const IemRound& r : trace) {
      j["trace"].push_back({{"theta", r.theta},
                            {"eps_i", r.eps_i},
                            {"temperature", r.temperature},
                            {"radius", r.radius},
                            {"set_bound", r.set_bound}});
    }
    return j;
  }
};

namespace detail {

class WallClock {
 public:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// The base set intersected with a list of balls; projection by alternating
// projections (at most 100 sweeps).
struct IntersectedSet {
  ConstraintSet base;
  std::vector<std::pair<Vec, double>> balls;  // (center, radius)

  bool contains(const Vec& x, double tol = 1e-9) const {
    if (!base.contains(x, tol)) return false;
    for (const auto& [c, r] : balls)
      if (distance(x, c) > r + tol) return false;
    return true;
  }

  Vec project(Vec x) const {
    for (int sweep = 0; sweep < 100; ++sweep) {
      x = base.project(std::move(x));
      for (const auto& [c, r] : balls) {
        const double d = distance(x, c);
        if (d > r) {
          const double s = r / d;
          for (std::size_t i = 0; i < x.size(); ++i) x[i] = c[i] + s * (x[i] - c[i]);
        }
      }
      if (contains(x, 1e-12)) break;
    }
    return x;
  }

  Vec interior_point() const {
    Vec x = base.centroid();
    return project(std::move(x));
  }
};

// Langevin chain targeting exp(-beta * L) restricted to an intersected set.
inline Vec langevin_sample_intersected(const EmpiricalLoss& loss, const IntersectedSet& set,
                                       double beta, double burn_in_T, std::size_t steps,
                                       std::uint64_t seed, const Vec& start) {
  CounterRng rng(seed);
  Vec theta = set.project(start);
  const double eta = burn_in_T / static_cast<double>(steps);
  const double sd = std::sqrt(2.0 * eta);
  for (std::size_t k = 0; k < steps; ++k) {
    Vec g = loss.gradient(theta);
    if (!all_finite(g))
      throw NumericError("langevin sampler: non-finite gradient at step " + std::to_string(k));
    for (std::size_t i = 0; i < theta.size(); ++i)
      theta[i] += -beta * eta * g[i] + sd * rng.next_gaussian();
    theta = set.project(std::move(theta));
  }
  return theta;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exponential mechanism

// Samples theta with density proportional to
// exp(-(eps*n / (2 L |C|)) * L(theta; D)) over C. The sensitivity constant
// defaults to the loss's Lipschitz constant; a data-independent regularizer
// does not change the sensitivity, so wrappers may pass the base constant.
inline MechanismReport exponential_mechanism(const LossModel& loss, const Dataset& data,
                                             const ConstraintSet& set, double eps,
                                             Sampler sampler, std::uint64_t seed,
                                             const SamplerOptions& options = {},
                                             std::optional<double> sensitivity_L = std::nullopt) {
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  detail::WallClock clock;
  const double L = sensitivity_L.value_or(loss.lipschitz_L);
  const double n = static_cast<double>(data.n());
  const double temperature = eps * n / (2.0 * L * set.diameter());
  const EmpiricalLoss empirical(loss, data);

  Vec theta;
  if (sampler == Sampler::grid_oracle) {
    if (set.dim() > 2)
      throw ValidationError("grid oracle sampler requires dimension <= 2");
    GibbsGridOracle oracle(empirical, set, temperature, options.grid_points);
    theta = oracle.sample(1, seed).front();
  } else {
    const std::size_t steps = options.langevin_steps
                                  ? options.langevin_steps
                                  : default_step_count(options.burn_in_T, set.dim());
    theta = gibbs_sample_langevin(empirical, set, temperature, options.burn_in_T, steps, 1, seed)
                .front();
  }

  MechanismReport report;
  report.theta_priv = std::move(theta);
  report.claimed_eps = eps;
  report.claimed_delta = 0.0;
  report.params = {{"mechanism", "exponential"},
                   {"temperature", temperature},
                   {"sensitivity_L", L},
                   {"diameter", set.diameter()}};
  report.seed = seed;
  report.wall_time_sec = clock.elapsed();
  return report;
}

// ---------------------------------------------------------------------------
// Iterated exponential mechanism

// k rounds of the exponential mechanism over a shrinking family of sets:
// round i samples theta_i from C_{i-1} at temperature eps_i*n/(2L|C_{i-1}|),
// then C_i = C_{i-1} intersected with a ball around theta_i of radius
// sqrt(c L (p + 3 log n) |C_{i-1}| / (m eps_i n)). The |C_i| bound used by
// the next round is that radius (the recurrence value). The privacy schedule
// is eps_i = eps / 2^{k-i+1} with k = 1 + ceil(log log(eps*n/(p + log n))),
// natural logs, so sum_i eps_i = eps*(1 - 2^{-k}) < eps.
struct IemSchedule {
  std::size_t k = 0;
  std::vector<double> eps_rounds;
};

inline IemSchedule iem_schedule(double eps, double n, double p) {
  const double x = eps * n / (p + std::log(n));
  if (!(x > std::exp(1.0)))
    throw ValidationError("iterated mechanism needs eps*n/(p + log n) > e");
  const std::size_t k =
      1 + static_cast<std::size_t>(std::ceil(std::log(std::log(x))));
  IemSchedule schedule;
  schedule.k = k;
  for (std::size_t i = 1; i <= k; ++i)
    schedule.eps_rounds.push_back(eps / std::pow(2.0, static_cast<double>(k - i + 1)));
  return schedule;
}

inline MechanismReport iterated_exponential_mechanism(const LossModel& loss, const Dataset& data,
                                                      const ConstraintSet& set0, double m,
                                                      double eps, double c_const,
                                                      Sampler sampler, std::uint64_t seed,
                                                      const SamplerOptions& options = {}) {
  if (!(m > 0.0)) throw ValidationError("m must be positive");
  if (!(c_const > 0.0)) throw ValidationError("c_const must be positive");
  detail::WallClock clock;
  const double n = static_cast<double>(data.n());
  const double p = static_cast<double>(set0.dim());
  const double L = loss.lipschitz_L;
  const IemSchedule schedule = iem_schedule(eps, n, p);
  const EmpiricalLoss empirical(loss, data);

  detail::IntersectedSet current{set0, {}};
  double set_bound = set0.diameter();

  // The empirical loss tabulation on the grid is shared across rounds; only
  // the temperature and the feasibility mask change.
  std::optional<GibbsGridOracle> base_oracle;
  if (sampler == Sampler::grid_oracle) {
    if (set0.dim() > 2) throw ValidationError("grid oracle sampler requires dimension <= 2");
    base_oracle.emplace(empirical, set0, 0.0, options.grid_points);
  }

  MechanismReport report;
  report.seed = seed;
  Vec theta = current.interior_point();
  for (std::size_t i = 0; i < schedule.k; ++i) {
    const double eps_i = schedule.eps_rounds[i];
    const double temperature = eps_i * n / (2.0 * L * set_bound);

    const std::uint64_t round_seed = derive_seed(seed, i);
    if (sampler == Sampler::grid_oracle) {
      auto mask = [&current](const Vec& x) { return current.contains(x, 0.0); };
      theta = base_oracle->retempered(temperature, mask).sample(1, round_seed).front();
    } else {
      const std::size_t steps = options.langevin_steps
                                    ? options.langevin_steps
                                    : default_step_count(options.burn_in_T, set0.dim());
      theta = detail::langevin_sample_intersected(empirical, current, temperature,
                                                  options.burn_in_T, steps, round_seed, theta);
    }

    const double radius =
        std::sqrt(c_const * L * (p + 3.0 * std::log(n)) * set_bound / (m * eps_i * n));
    if (!std::isfinite(radius) || radius <= 0.0) {
      std::string trace = "iterated mechanism: degenerate radius at round " + std::to_string(i) +
                          "; radii so far:";
      for (const IemRound& round : report.trace) trace += " " + std::to_string(round.radius);
      throw NumericError(trace);
    }
    report.trace.push_back(IemRound{theta, eps_i, temperature, radius, set_bound});
    current.balls.emplace_back(theta, radius);
    set_bound = radius;
  }

  report.theta_priv = theta;
  report.claimed_eps = eps;
  report.claimed_delta = 0.0;
  report.params = {{"mechanism", "iterated_exponential"},
                   {"k", schedule.k},
                   {"c_const", c_const},
                   {"m", m},
                   {"eps_rounds", schedule.eps_rounds}};
  // Report-only population-risk figure from the black-box ERM-to-SCO
  // reduction: L^2 (p + sqrt(p log n)) / (m eps n), up to constants.
  report.params["sco_risk_bound"] =
      L * L * (p + std::sqrt(p * std::log(n))) / (m * eps * n);
  report.wall_time_sec = clock.elapsed();
  return report;
}

// ---------------------------------------------------------------------------
// DP-SGD baseline

// Per step: sample a record uniformly with replacement and descend on its
// noisy gradient, sigma^2 = 8 T L^2 log(1/delta) / eps^2, projecting back
// onto the set. Returns the final iterate.
inline MechanismReport dp_sgd(const LossModel& loss, const Dataset& data,
                              const ConstraintSet& set, double eps, double delta,
                              std::size_t steps_T, double eta, std::uint64_t seed,
                              std::optional<Vec> theta0 = std::nullopt) {
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
  if (!(eta >= 0.0)) throw ValidationError("eta must be >= 0");
  detail::WallClock clock;
  const double L = loss.lipschitz_L;
  const double sigma2 = 8.0 * static_cast<double>(steps_T) * L * L * std::log(1.0 / delta) /
                        (eps * eps);
  const double sigma = std::sqrt(sigma2);

  CounterRng rng(seed);
  Vec theta = set.project(theta0 ? *theta0 : set.centroid());
  for (std::size_t t = 0; t < steps_T; ++t) {
    const Vec& d = data.points[rng.next_index(data.n())];
    Vec g = loss.gradient(theta, d);
    if (!all_finite(g))
      throw NumericError("dp_sgd: non-finite gradient at step " + std::to_string(t));
    for (std::size_t i = 0; i < theta.size(); ++i)
      theta[i] -= eta * (g[i] + sigma * rng.next_gaussian());
    theta = set.project(std::move(theta));
  }

  MechanismReport report;
  report.theta_priv = std::move(theta);
  report.claimed_eps = eps;
  report.claimed_delta = delta;
  report.params = {{"mechanism", "dp_sgd"},
                   {"sigma2", sigma2},
                   {"eta", eta},
                   {"steps", steps_T}};
  report.seed = seed;
  report.wall_time_sec = clock.elapsed();
  return report;
}

// ---------------------------------------------------------------------------
// Regularized SCO (pure DP)

// Adds the data-independent regularizer (m/2)|theta|^2 to a loss model. The
// declared Lipschitz constant grows by m * max |theta| over the set.
inline LossModel regularize_loss(const LossModel& base, double m, const ConstraintSet& set) {
  LossModel out = base;
  auto value = base.value;
  auto gradient = base.gradient;
  out.value = [value, m](const Vec& theta, const Vec& d) {
    return value(theta, d) + 0.5 * m * squared_norm(theta);
  };
  out.gradient = [gradient, m](const Vec& theta, const Vec& d) {
    Vec g = gradient(theta, d);
    axpy(m, theta, g);
    return g;
  };
  double max_norm;
  if (set.kind() == ConstraintSet::Kind::l2_ball)
    max_norm = norm(set.ball_center()) + set.ball_radius();
  else {
    Vec corner(set.dim());
    for (std::size_t i = 0; i < corner.size(); ++i)
      corner[i] = std::max(std::abs(set.box_lo()[i]), std::abs(set.box_hi()[i]));
    max_norm = norm(corner);
  }
  out.lipschitz_L = base.lipschitz_L + m * max_norm;
  out.strong_convexity_m = base.strong_convexity_m.value_or(0.0) + m;
  if (base.smoothness_M) out.smoothness_M = *base.smoothness_M + m;
  out.name = base.name + "+l2reg";
  return out;
}

// Exponential mechanism on L_m(theta; D) = L(theta; D) + (m/2)|theta|^2 with
// m = L / (|C| sqrt(n)). The regularizer is data independent, so the
// temperature keeps the base loss's sensitivity, and the release carries the
// 2L^2/(m n) uniform-stability certificate.
inline MechanismReport regularized_sco_pure(const LossModel& loss, const Dataset& data,
                                            const ConstraintSet& set, double eps,
                                            Sampler sampler, std::uint64_t seed,
                                            const SamplerOptions& options = {}) {
  if (!set.contains(Vec(set.dim(), 0.0)))
    throw ValidationError("regularized SCO assumes the origin lies in the constraint set");
  const double L = loss.lipschitz_L;
  const double n = static_cast<double>(data.n());
  const double m = L / (set.diameter() * std::sqrt(n));
  const LossModel regularized = regularize_loss(loss, m, set);
  MechanismReport report =
      exponential_mechanism(regularized, data, set, eps, sampler, seed, options, L);
  report.params["mechanism"] = "regularized_sco_pure";
  report.params["regularizer_m"] = m;
  report.params["stability_certificate"] = 2.0 * L * L / (m * n);
  return report;
}

// ---------------------------------------------------------------------------
// (eps, delta) SCO

struct ScoVariant {
  enum class Kind { convex, strongly_convex };
  Kind kind = Kind::convex;
  double m = 0.0;  // strongly convex only

  static ScoVariant convex() { return ScoVariant{Kind::convex, 0.0}; }
  static ScoVariant strongly_convex(double m) { return ScoVariant{Kind::strongly_convex, m}; }
};

// Convex: constant temperature as in the last-iterate calibration but with
// T = min(|C|^2/p, log(1/delta) |C|^2 / (eps^2 n)) to balance optimization
// and generalization. Strongly convex: delegates to the exponentially
// weighted average. The report carries the uniform-stability bound mu of the
// realized schedule alongside (eps, delta).
inline MechanismReport sco_approx_dp(const LossModel& loss, const Dataset& data,
                                     const ConstraintSet& set, double eps, double delta,
                                     const ScoVariant& variant, std::uint64_t seed,
                                     std::optional<std::size_t> steps = std::nullopt) {
  detail::WallClock clock;
  const EmpiricalLoss empirical(loss, data);
  const double n = static_cast<double>(data.n());
  const double L = loss.lipschitz_L;
  const double diam = set.diameter();
  const double log1d = std::log(1.0 / delta);

  MechanismReport report;
  report.seed = seed;
  report.claimed_eps = eps;
  report.claimed_delta = delta;

  if (variant.kind == ScoVariant::Kind::convex) {
    detail::require_eps_delta(eps, delta);
    const double p = static_cast<double>(set.dim());
    const double T = std::min(diam * diam / p, log1d * diam * diam / (eps * eps * n));
    const double beta = eps * n / (L * std::sqrt(8.0 * T * log1d));
    DiffusionConfig config;
    config.schedule = TemperatureSchedule::constant(beta);
    config.horizon_T = T;
    config.steps = steps ? *steps : default_step_count(T, set.dim());
    config.seed = seed;
    report.theta_priv = run_pld(empirical, set, config).final();
    report.params = {{"mechanism", "sco_convex"},
                     {"beta", beta},
                     {"T", T},
                     {"stability_mu", stability_bound(L, n, config.schedule, T)}};
  } else {
    PrivateRunResult run = sc_weighted_average(empirical, set, variant.m, eps, delta, seed, steps);
    report.theta_priv = run.theta_priv;
    report.params = {{"mechanism", "sco_strongly_convex"},
                     {"m", variant.m},
                     {"schedule", run.schedule.describe()},
                     {"T", run.horizon_T},
                     {"stability_mu", stability_bound(L, n, run.schedule, run.horizon_T)}};
  }
  report.wall_time_sec = clock.elapsed();
  return report;
}

// ---------------------------------------------------------------------------
// Non-convex pure-DP risk bound

// Expected excess empirical risk of the exponential mechanism on an
// L-Lipschitz (possibly non-convex) loss, up to constants:
// L*|C| * ((p/(eps n)) log(eps n / p) + p/(eps n)) for p <= eps*n/2, and the
// Lipschitz fallback 2 L |C| otherwise.
inline double nonconvex_erm_bound(double L, double diameter, double p, double eps, double n) {
  if (!(L >= 0.0 && diameter >= 0.0 && p > 0.0 && eps > 0.0 && n > 0.0))
    throw ValidationError("nonconvex_erm_bound needs nonnegative L, diameter and positive p, eps, n");
  if (p > eps * n / 2.0) return 2.0 * L * diameter;
  const double r = p / (eps * n);
  return L * diameter * (r * std::log(1.0 / r) + r);
}

}  // namespace dpld

#endif  // DPLD_MECHANISMS_HPP
