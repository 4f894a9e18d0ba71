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
// Renyi-divergence privacy curves for the diffusion (finite-time, short-term
// strongly convex, long-term stationary-approach), conversion to (eps, delta)
// differential privacy, the exponential-mechanism temperature relation,
// uniform-stability bounds, and the short/long phase-transition solver.

#ifndef DPLD_ACCOUNTANT_HPP
#define DPLD_ACCOUNTANT_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dpld/common.hpp"
#include "dpld/model.hpp"

namespace dpld {

// A map alpha -> Renyi divergence bound. Curves that are linear in alpha
// carry their slope so the conversion can add the analytic optimum to the
// search grid.
struct RenyiCurve {
  std::function<double(double)> eval_fn;
  double valid_alpha_min = 1.0;
  std::string description;
  std::optional<double> linear_slope;

  double operator()(double alpha) const {
    if (!(alpha >= valid_alpha_min))
      throw ValidationError("curve evaluated below valid_alpha_min (" + description + ")");
    return eval_fn(alpha);
  }
};

// Finite-time trajectory bound: alpha * Delta^2 / 4 * int_0^T beta_t^2 dt.
// Valid for every alpha >= 1 and covers any function of the whole trajectory.
inline RenyiCurve rdp_finite_time(double delta_grad, const TemperatureSchedule& schedule,
                                  double T) {
  if (!(delta_grad >= 0.0)) throw ValidationError("gradient sensitivity must be >= 0");
  if (!(T >= 0.0)) throw ValidationError("horizon must be >= 0");
  const double slope = delta_grad * delta_grad / 4.0 * schedule.integral(T, 2);
  RenyiCurve curve;
  curve.eval_fn = [slope](double alpha) { return slope * alpha; };
  curve.valid_alpha_min = 1.0;
  curve.linear_slope = slope;
  curve.description = "finite-time trajectory bound, " + schedule.describe() +
                      ", T=" + std::to_string(T) + "; any initial distribution";
  return curve;
}

// Short-term strongly convex bound at constant temperature:
// alpha * beta * Delta^2 / m * (1 - e^{-beta*m*T/2}). Assumes both chains
// start from N(0, (beta*m)^{-1} I).
inline RenyiCurve rdp_short_term_sc(double delta_grad, double beta, double m, double T) {
  if (!(m > 0.0)) throw ValidationError("m must be positive");
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  if (!(delta_grad >= 0.0)) throw ValidationError("gradient sensitivity must be >= 0");
  if (!(T >= 0.0)) throw ValidationError("horizon must be >= 0");
  const double slope = beta * delta_grad * delta_grad / m * (-std::expm1(-beta * m * T / 2.0));
  RenyiCurve curve;
  curve.eval_fn = [slope](double alpha) { return slope * alpha; };
  curve.valid_alpha_min = 1.0;
  curve.linear_slope = slope;
  curve.description = "short-term strongly convex bound, beta=" + std::to_string(beta) +
                      ", T=" + std::to_string(T) +
                      "; requires theta_0 ~ N(0, (beta*m)^-1 I)";
  return curve;
}

// Parameters of the long-term strongly convex bound.
struct ScBoundParams {
  double m = 0.0;           // strong convexity
  double M = 0.0;           // smoothness
  double R = 0.0;           // bound on the minimizer norms
  double beta = 0.0;        // inverse temperature
  double delta_grad = 0.0;  // gradient sensitivity Delta
  double p = 0.0;           // dimension

  void validate() const {
    if (!(m > 0.0 && M > 0.0 && R > 0.0 && beta > 0.0 && p > 0.0))
      throw ValidationError("ScBoundParams must be positive");
    if (!(m <= M)) throw ValidationError("ScBoundParams requires m <= M");
    if (!(delta_grad >= 0.0)) throw ValidationError("gradient sensitivity must be >= 0");
  }
};

inline double sc_bound_t0(const ScBoundParams& params, double alpha) {
  return 2.0 * std::log((alpha - 1.0) * std::max(2.0, params.M));
}

// Coefficient of the decaying term, with fully explicit constants:
// beta*m*R^2 * (max(30, 5M^2 + 10M) + 18*alpha - 3)/6 + (5Mp + 3p)/6 * log(M/m).
inline double sc_bound_decay_coefficient(const ScBoundParams& params, double alpha) {
  const double head = std::max(30.0, 5.0 * params.M * params.M + 10.0 * params.M);
  return params.beta * params.m * params.R * params.R * (head + 18.0 * alpha - 3.0) / 6.0 +
         (5.0 * params.M * params.p + 3.0 * params.p) / 6.0 * std::log(params.M / params.m);
}

// Long-term bound: decay term with exponent -(T - t0)*beta*m/(3*alpha) plus
// (4/3) * stationary_divergence(3*alpha). Defined for alpha >= 2 and
// T >= t0(alpha); evaluation before the transition time is an error. (The
// sharper variant approaching R_alpha of the stationary pair instead of
// (4/3) R_{3 alpha} is not implemented.)
inline RenyiCurve rdp_long_term_sc(const ScBoundParams& params,
                                   std::function<double(double)> stationary_divergence,
                                   double T) {
  params.validate();
  if (!stationary_divergence) throw ValidationError("stationary divergence callback required");
  RenyiCurve curve;
  curve.valid_alpha_min = 2.0;
  curve.description =
      "long-term strongly convex bound, T=" + std::to_string(T) +
      "; requires theta_0 ~ N(0, (beta*m)^-1 I); converges to (4/3) R_{3a} of the "
      "stationary pair";
  curve.eval_fn = [params, stationary_divergence, T](double alpha) {
    const double t0 = sc_bound_t0(params, alpha);
    if (T < t0)
      throw ValidationError("long-term bound is pre-transition: T < t0(alpha) = " +
                            std::to_string(t0));
    const double decay =
        std::exp(-(T - t0) * params.beta * params.m / (3.0 * alpha));
    return sc_bound_decay_coefficient(params, alpha) * decay +
           4.0 / 3.0 * stationary_divergence(3.0 * alpha);
  };
  return curve;
}

// ---------------------------------------------------------------------------
// Conversion to (eps, delta)

// Geometric alpha grid {1.25, 1.5, 2, 3, 4, 6, ..., 1024}.
inline std::vector<double> default_alpha_grid() {
  std::vector<double> grid = {1.25, 1.5};
  for (double base = 2.0; base <= 1024.0; base *= 2.0) {
    grid.push_back(base);
    if (1.5 * base <= 1024.0) grid.push_back(1.5 * base);
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

// Named preset for converting a linear curve at a target eps:
// alpha = 1 + 2 log(1/delta) / eps. The grid minimum is never worse.
inline double preset_alpha(double eps_target, double delta) {
  return 1.0 + 2.0 * std::log(1.0 / delta) / eps_target;
}

struct DpConversion {
  double eps = 0.0;
  double alpha_star = 0.0;
};

// min over the grid of curve(alpha) + log(1/delta)/(alpha - 1). For curves
// linear in alpha the analytic optimum alpha* = 1 + sqrt(log(1/delta)/slope)
// joins the candidate set. Grid points below the curve's validity threshold
// (or rejected by the curve itself) are skipped.
inline DpConversion rdp_to_approx_dp(const RenyiCurve& curve, double delta,
                                     std::vector<double> alpha_grid = default_alpha_grid()) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
  if (alpha_grid.empty()) throw ValidationError("alpha grid must be nonempty");
  const double log1d = std::log(1.0 / delta);
  if (curve.linear_slope && *curve.linear_slope > 0.0) {
    const double opt = 1.0 + std::sqrt(log1d / *curve.linear_slope);
    if (opt > 1.0) alpha_grid.push_back(opt);
  }
  std::optional<DpConversion> best;
  for (double alpha : alpha_grid) {
    if (!(alpha > 1.0) || alpha < curve.valid_alpha_min) continue;
    double value;
    try {
      value = curve(alpha);
    } catch (const ValidationError&) {
      continue;  // e.g. pre-transition alphas of the long-term curve
    }
    const double eps = value + log1d / (alpha - 1.0);
    if (!best || eps < best->eps) best = DpConversion{eps, alpha};
  }
  if (!best) throw ValidationError("no valid alpha in the grid for this curve");
  return *best;
}

inline void write_curve_csv(const RenyiCurve& curve, const std::vector<double>& alphas,
                            std::ostream& out) {
  out.precision(17);
  out << "alpha,bound\n";
  for (double alpha : alphas) {
    if (alpha < curve.valid_alpha_min) continue;
    try {
      out << alpha << ',' << curve(alpha) << '\n';
    } catch (const ValidationError&) {
    }
  }
}

// ---------------------------------------------------------------------------
// Pure DP and stability

// Inverts the exponential-mechanism calibration: a sampler with density
// proportional to exp(-temperature * L(theta; D)) over a set of the given
// diameter is eps-DP for eps = temperature * 2 L * diameter / n.
inline double pure_dp_expmech_epsilon(double L, double diameter, double n, double temperature) {
  if (!(L > 0.0 && diameter > 0.0 && n > 0.0))
    throw ValidationError("L, diameter, n must be positive");
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  return temperature * 2.0 * L * diameter / n;
}

// Uniform stability of releasing theta_T: mu = 4 L^2 / n * int_0^T beta_t dt.
inline double stability_bound(double L, double n, const TemperatureSchedule& schedule,
                              double T) {
  if (!(L >= 0.0 && n > 0.0 && T >= 0.0))
    throw ValidationError("stability bound needs L >= 0, n > 0, T >= 0");
  return 4.0 * L * L / n * schedule.integral(T, 1);
}

// ---------------------------------------------------------------------------
// Phase transition

struct PhaseTransition {
  double T_star = 0.0;          // first T >= t0 with long-term <= short-term
  double analytic_estimate = 0.0;  // closed-form estimate for comparison
};

// Crossover between the short-term and long-term bounds at a fixed alpha.
// Exists iff (4/3) * stationary(3 alpha) < alpha*beta*Delta^2/m (the
// short-term asymptote); otherwise returns nullopt. The long-term bound
// decays and the short-term bound grows in T, so the first crossing is found
// by bisection to 1e-6 in T.
inline std::optional<PhaseTransition> phase_transition_time(
    const ScBoundParams& params, const std::function<double(double)>& stationary_divergence,
    double alpha) {
  params.validate();
  if (!(alpha >= 2.0)) throw ValidationError("phase transition needs alpha >= 2");

  const double short_asymptote =
      alpha * params.beta * params.delta_grad * params.delta_grad / params.m;
  const double long_asymptote = 4.0 / 3.0 * stationary_divergence(3.0 * alpha);
  if (long_asymptote >= short_asymptote) return std::nullopt;

  const double t0 = sc_bound_t0(params, alpha);
  const double coeff = sc_bound_decay_coefficient(params, alpha);
  auto long_bound = [&](double T) {
    return coeff * std::exp(-(T - t0) * params.beta * params.m / (3.0 * alpha)) + long_asymptote;
  };
  auto short_bound = [&](double T) {
    return alpha * params.beta * params.delta_grad * params.delta_grad / params.m *
           (-std::expm1(-params.beta * params.m * T / 2.0));
  };

  PhaseTransition result;
  const double gap = short_asymptote - long_asymptote;
  result.analytic_estimate =
      coeff <= gap ? t0 : t0 + 3.0 * alpha / (params.beta * params.m) * std::log(coeff / gap);

  if (long_bound(t0) <= short_bound(t0)) {
    result.T_star = t0;
    return result;
  }
  double lo = t0, hi = std::max(t0 + 1.0, result.analytic_estimate);
  while (long_bound(hi) > short_bound(hi)) hi = t0 + 2.0 * (hi - t0);
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (long_bound(mid) > short_bound(mid))
      lo = mid;
    else
      hi = mid;
  }
  result.T_star = hi;
  return result;
}

// ---------------------------------------------------------------------------
// Trajectory coupling check

// Paired projected noisy gradient descent on two quadratics
// f(x) = q/2 |x - b|^2 and f'(x) = q/2 |x - b'|^2 with a shared noise
// realization; returns the maximum trajectory gap, which stays within
// Delta/m = q|b - b'| / q = |b - b'| whenever q <= 1/eta.
struct CoupledQuadratics {
  double curvature = 1.0;  // m = M = curvature
  Vec center_f;
  Vec center_f_prime;

  double gradient_gap() const { return curvature * distance(center_f, center_f_prime); }
};

inline double pgd_trajectory_stability_check(const CoupledQuadratics& pair,
                                             const ConstraintSet& set, std::uint64_t noise_seed,
                                             double eta, std::size_t steps) {
  if (!(pair.curvature > 0.0)) throw ValidationError("curvature must be positive");
  if (!(eta > 0.0)) throw ValidationError("eta must be positive");
  if (pair.curvature > 1.0 / eta)
    throw ValidationError("requires smoothness M <= 1/eta for the coupling bound");
  const std::size_t p = set.dim();
  CounterRng rng(noise_seed);
  Vec theta = set.project(set.centroid());
  Vec theta_prime = theta;
  const double sd = std::sqrt(2.0 * eta);
  double max_gap = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    Vec xi(p);
    for (double& x : xi) x = sd * rng.next_gaussian();
    for (std::size_t i = 0; i < p; ++i) {
      theta[i] += -eta * pair.curvature * (theta[i] - pair.center_f[i]) + xi[i];
      theta_prime[i] += -eta * pair.curvature * (theta_prime[i] - pair.center_f_prime[i]) + xi[i];
    }
    theta = set.project(std::move(theta));
    theta_prime = set.project(std::move(theta_prime));
    max_gap = std::max(max_gap, distance(theta, theta_prime));
  }
  return max_gap;
}

}  // namespace dpld

#endif  // DPLD_ACCOUNTANT_HPP
