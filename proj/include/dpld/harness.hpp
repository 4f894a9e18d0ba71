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
// Experiment harness: excess-risk estimation, uniform-stability measurement,
// the non-convergence diagnostic, grid experiments with seeded reproducible
// cells, and CSV/JSON report emission.
//
// Seed scheme: the master seed is mixed with the flat cell index through a
// fixed 64-bit hash (derive_seed), each trial mixes the cell seed with the
// trial index, and dataset/mechanism randomness use further fixed streams of
// the trial seed. Cells are therefore independent and reproducible in
// isolation. Paired mode derives trial seeds without the n index so that
// n-scaling comparisons share randomness.

#ifndef DPLD_HARNESS_HPP
#define DPLD_HARNESS_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dpld/accountant.hpp"
#include "dpld/common.hpp"
#include "dpld/diffusion.hpp"
#include "dpld/mechanisms.hpp"
#include "dpld/model.hpp"

namespace dpld {

// ---------------------------------------------------------------------------
// Risk estimation

// Projected gradient descent with backtracking, run until the projected
// gradient residual |theta - Proj(theta - s*grad)| / s falls under tol.
inline Vec solve_erm_minimizer(const EmpiricalLoss& loss, const ConstraintSet& set,
                               double tol = 1e-8, std::size_t max_iters = 200000) {
  Vec theta = set.project(set.centroid());
  double step = 1.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Vec g = loss.gradient(theta);
    if (!all_finite(g)) throw NumericError("minimizer solve: non-finite gradient");
    Vec cand = set.project(sub(theta, scale(Vec(g), step)));
    const double residual = distance(theta, cand) / step;
    if (residual <= tol) return theta;
    const double f = loss.value(theta);
    // Backtrack until sufficient decrease; grow the step gently otherwise.
    std::size_t guard = 0;
    while (loss.value(cand) > f - 0.25 / step * squared_norm(sub(cand, theta)) && guard++ < 60) {
      step *= 0.5;
      cand = set.project(sub(theta, scale(Vec(g), step)));
    }
    theta = std::move(cand);
    step = std::min(step * 1.3, 1e6);
  }
  throw NumericError("minimizer solve did not reach the requested residual");
}

// L(theta) - min over the set. The hint short-circuits the numeric solve
// when a closed form exists (quadratic: projected data mean).
inline double excess_empirical_risk(const Vec& theta, const EmpiricalLoss& loss,
                                    const ConstraintSet& set,
                                    const std::optional<Vec>& minimizer_hint = std::nullopt) {
  const Vec minimizer = minimizer_hint ? *minimizer_hint : solve_erm_minimizer(loss, set);
  return loss.value(theta) - loss.value(minimizer);
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo excess population risk against a seeded record sampler. The
// population minimizer comes from a closed form when available, otherwise
// from a numeric solve on a large sample.
inline MonteCarloEstimate excess_population_risk(
    const Vec& theta, const LossModel& loss,
    const std::function<Vec(CounterRng&)>& record_sampler, std::size_t holdout_m,
    const std::optional<Vec>& minimizer_hint, std::uint64_t seed,
    const std::optional<ConstraintSet>& solve_set = std::nullopt) {
  if (holdout_m == 0) throw ValidationError("holdout size must be positive");
  Vec pop_minimizer;
  if (minimizer_hint) {
    pop_minimizer = *minimizer_hint;
  } else {
    if (!solve_set)
      throw ValidationError("population minimizer solve needs the constraint set");
    CounterRng solver_rng(derive_seed(seed, 0x50f7));
    std::vector<Vec> records;
    records.reserve(holdout_m);
    for (std::size_t i = 0; i < holdout_m; ++i) records.push_back(record_sampler(solver_rng));
    EmpiricalLoss surrogate(loss, Dataset::from_records(std::move(records)));
    pop_minimizer = solve_erm_minimizer(surrogate, *solve_set);
  }

  CounterRng rng(derive_seed(seed, 0x4e57));
  std::vector<double> gaps;
  gaps.reserve(holdout_m);
  for (std::size_t i = 0; i < holdout_m; ++i) {
    const Vec d = record_sampler(rng);
    gaps.push_back(loss.value(theta, d) - loss.value(pop_minimizer, d));
  }
  return MonteCarloEstimate{mean(gaps), std_error(gaps)};
}

// ---------------------------------------------------------------------------
// Uniform stability measurement

struct StabilityEstimate {
  double estimate = 0.0;   // max over probes of the expectation gap
  double std_error = 0.0;  // standard error at the maximizing probe
  std::vector<double> per_probe_gap;
};

// Estimates sup_d E[ell(M(D), d)] - E[ell(M(D'), d)] where D' replaces
// record 0 with the given adversarial record. Trials are paired by seed
// across D and D' to cut variance; the estimate is a lower witness for the
// uniform-stability constant, asserted against the certified bound.
inline StabilityEstimate measure_uniform_stability(
    const std::function<Vec(const Dataset&, std::uint64_t)>& mechanism, const Dataset& data,
    const Vec& adversarial_record, const LossModel& probe_loss,
    const std::vector<Vec>& probe_records, std::size_t trials, std::uint64_t seed) {
  if (probe_records.empty()) throw ValidationError("need at least one probe record");
  if (trials == 0) throw ValidationError("trials must be positive");
  const Dataset neighbor = data.neighbor(0, adversarial_record);

  std::vector<std::vector<double>> gap_samples(probe_records.size());
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t s = derive_seed(seed, t);
    const Vec theta = mechanism(data, s);
    const Vec theta_prime = mechanism(neighbor, derive_seed(s, 1));
    for (std::size_t j = 0; j < probe_records.size(); ++j)
      gap_samples[j].push_back(probe_loss.value(theta, probe_records[j]) -
                               probe_loss.value(theta_prime, probe_records[j]));
  }

  StabilityEstimate out;
  out.estimate = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < probe_records.size(); ++j) {
    const double gap = mean(gap_samples[j]);
    out.per_probe_gap.push_back(gap);
    if (gap > out.estimate) {
      out.estimate = gap;
      out.std_error = std_error(gap_samples[j]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Non-convergence diagnostic

struct NonconvergenceReport {
  double path_length = 0.0;       // sum of per-step displacements
  double net_displacement = 0.0;  // |theta_T - theta_0|
  std::optional<double> stationary_mass;  // dim <= 2 only
  std::string mass_note;
};

// Total movement of a chain versus the stationary mass near its start: in
// dimension <= 2 the mass of Ball(theta_0, net displacement) under
// exp(-beta*L) is integrated on a grid; in higher dimension the mass
// estimate is reported as unavailable.
inline NonconvergenceReport nonconvergence_diagnostic(const Trajectory& traj,
                                                      const EmpiricalLoss& loss,
                                                      const ConstraintSet& set, double beta,
                                                      std::size_t grid_points = 512) {
  NonconvergenceReport report;
  for (std::size_t k = 0; k + 1 < traj.thetas.size(); ++k)
    report.path_length += distance(traj.thetas[k], traj.thetas[k + 1]);
  report.net_displacement = distance(traj.initial(), traj.final());
  if (set.dim() <= 2) {
    GibbsGridOracle oracle(loss, set, beta, grid_points);
    const Vec start = traj.initial();
    const double r = report.net_displacement;
    report.stationary_mass =
        oracle.mass_where([&](const Vec& x) { return distance(x, start) <= r; });
  } else {
    report.mass_note = "unavailable: stationary-mass grid estimate requires dimension <= 2";
  }
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic tasks

// A ready-to-run instance: loss family, dataset, constraint set, closed-form
// minimizers when they exist, and a population sampler.
struct TaskInstance {
  LossModel loss;
  Dataset data;
  ConstraintSet set = ConstraintSet::l2_ball(Vec{0.0}, 1.0);
  std::optional<Vec> erm_minimizer;
  std::function<Vec(CounterRng&)> record_sampler;
  std::optional<Vec> population_minimizer;
};

// quadratic: ell = 1/2 |theta - d|^2 on the unit ball, records uniform in a
// concentric ball of radius 0.5, so L = 1.5 covers sup |theta - d| and the
// empirical minimizer is the projected data mean.
// abs_linear: ell = |<theta, d>| on the unit ball, records on the unit
// sphere; the minimum 0 is attained at the origin.
// norm: data-independent L(theta) = |theta| on the unit ball.
inline TaskInstance make_task(const std::string& loss_name, std::size_t n, std::size_t p,
                              std::uint64_t data_seed) {
  CounterRng rng(data_seed);
  TaskInstance task;
  task.set = ConstraintSet::l2_ball(Vec(p, 0.0), 1.0);
  if (loss_name == "quadratic") {
    const double data_radius = 0.5;
    std::vector<Vec> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      records.push_back(scale(rng.next_in_unit_ball(p), data_radius));
    task.loss = make_quadratic_loss(p, 1.0 + data_radius);
    task.data = Dataset::from_records(std::move(records));
    Vec mean_record(p, 0.0);
    for (const Vec& d : task.data.points) axpy(1.0 / static_cast<double>(n), d, mean_record);
    task.erm_minimizer = task.set.project(mean_record);
    task.record_sampler = [p, data_radius](CounterRng& r) {
      return scale(r.next_in_unit_ball(p), data_radius);
    };
    task.population_minimizer = Vec(p, 0.0);
  } else if (loss_name == "abs_linear") {
    std::vector<Vec> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec d = rng.next_gaussian_vec(p);
      const double nrm = norm(d);
      records.push_back(nrm > 0 ? scale(std::move(d), 1.0 / nrm) : Vec(p, 0.0));
    }
    task.loss = make_abs_linear_loss(p);
    task.data = Dataset::from_records(std::move(records));
    task.erm_minimizer = Vec(p, 0.0);  // loss >= 0 with equality at the origin
    task.record_sampler = [p](CounterRng& r) {
      Vec d = r.next_gaussian_vec(p);
      const double nrm = norm(d);
      return nrm > 0 ? scale(std::move(d), 1.0 / nrm) : Vec(p, 0.0);
    };
    task.population_minimizer = Vec(p, 0.0);
  } else if (loss_name == "norm") {
    task.loss = make_norm_loss(p);
    task.data = Dataset::from_records({Vec(p, 0.0)});
    task.erm_minimizer = Vec(p, 0.0);
    task.record_sampler = [p](CounterRng&) { return Vec(p, 0.0); };
    task.population_minimizer = Vec(p, 0.0);
  } else {
    throw ValidationError("unknown loss task: " + loss_name);
  }
  return task;
}

// ---------------------------------------------------------------------------
// Grid experiments

struct ExperimentSpec {
  std::string mechanism = "expmech";
  std::string loss = "quadratic";
  std::vector<std::size_t> n_grid = {100};
  std::vector<std::size_t> p_grid = {2};
  std::vector<double> eps_grid = {1.0};
  double delta = 1e-5;
  std::size_t trials = 50;
  std::uint64_t seed = 0;
  std::string output_path;  // base path; ".csv" / ".json" appended when set
  bool population_risk = false;
  std::size_t holdout_m = 10000;
  bool pair_across_n = false;
  // Mechanism knobs (used where meaningful).
  double m_param = 0.5;
  double c_const = 4.0;
  double lambda_const = 1.0;
  std::size_t dpsgd_steps = 500;
  double dpsgd_eta = 0.05;
  std::string sampler = "grid_oracle";

  void validate() const {
    if (n_grid.empty() || p_grid.empty() || eps_grid.empty())
      throw ValidationError("experiment grids must be nonempty");
    if (trials < 1) throw ValidationError("trials must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
  }
};

struct CellResult {
  std::size_t n = 0, p = 0;
  double eps = 0.0;
  std::size_t trials = 0, failures = 0;
  double mean_erm = 0.0, median_erm = 0.0, se_erm = 0.0;
  std::optional<double> mean_sco, se_sco;
};

struct RiskReport {
  ExperimentSpec spec;
  std::vector<CellResult> cells;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mechanism"] = spec.mechanism;
    j["loss"] = spec.loss;
    j["delta"] = spec.delta;
    j["trials"] = spec.trials;
    j["seed"] = spec.seed;
    j["cells"] = nlohmann::json::array();
    for (const CellResult& c : cells) {
      nlohmann::json cell = {{"n", c.n},
                             {"p", c.p},
                             {"eps", c.eps},
                             {"trials", c.trials},
                             {"failures", c.failures},
                             {"mean_excess_erm", c.mean_erm},
                             {"median_excess_erm", c.median_erm},
                             {"se_erm", c.se_erm}};
      if (c.mean_sco) {
        cell["mean_excess_sco"] = *c.mean_sco;
        cell["se_sco"] = *c.se_sco;
      }
      j["cells"].push_back(cell);
    }
    return j;
  }

  // Fixed column schema; population columns are left empty when absent.
  void write_csv(std::ostream& out) const {
    out.precision(17);
    out << "n,p,eps,trials,failures,mean_excess_erm,median_excess_erm,se_erm,"
           "mean_excess_sco,se_sco\n";
    for (const CellResult& c : cells) {
      out << c.n << ',' << c.p << ',' << c.eps << ',' << c.trials << ',' << c.failures << ','
          << c.mean_erm << ',' << c.median_erm << ',' << c.se_erm << ',';
      if (c.mean_sco)
        out << *c.mean_sco << ',' << *c.se_sco;
      else
        out << ',';
      out << '\n';
    }
  }
};

// One mechanism invocation on a prepared task.
inline Vec run_named_mechanism(const ExperimentSpec& spec, const TaskInstance& task, double eps,
                               std::uint64_t seed) {
  const Sampler sampler = task.set.dim() <= 2 ? sampler_from_string(spec.sampler)
                                              : Sampler::langevin;
  const EmpiricalLoss empirical(task.loss, task.data);
  if (spec.mechanism == "expmech")
    return exponential_mechanism(task.loss, task.data, task.set, eps, sampler, seed).theta_priv;
  if (spec.mechanism == "iem")
    return iterated_exponential_mechanism(task.loss, task.data, task.set, spec.m_param, eps,
                                          spec.c_const, sampler, seed)
        .theta_priv;
  if (spec.mechanism == "dpsgd")
    return dp_sgd(task.loss, task.data, task.set, eps, spec.delta, spec.dpsgd_steps,
                  spec.dpsgd_eta, seed)
        .theta_priv;
  if (spec.mechanism == "convex_last")
    return convex_last_iterate(empirical, task.set, eps, spec.delta, seed).theta_priv;
  if (spec.mechanism == "sc_avg")
    return sc_weighted_average(empirical, task.set, spec.m_param, eps, spec.delta, seed)
        .theta_priv;
  if (spec.mechanism == "smooth_sc") {
    const double m = task.loss.strong_convexity_m.value_or(spec.m_param);
    const double M = task.loss.smoothness_M.value_or(m);
    return smooth_sc_last_iterate(empirical, task.set, m, M, eps, spec.delta, spec.lambda_const,
                                  seed)
        .theta_priv;
  }
  if (spec.mechanism == "reg_sco")
    return regularized_sco_pure(task.loss, task.data, task.set, eps, sampler, seed).theta_priv;
  if (spec.mechanism == "sco_convex")
    return sco_approx_dp(task.loss, task.data, task.set, eps, spec.delta, ScoVariant::convex(),
                         seed)
        .theta_priv;
  if (spec.mechanism == "sco_sc")
    return sco_approx_dp(task.loss, task.data, task.set, eps, spec.delta,
                         ScoVariant::strongly_convex(spec.m_param), seed)
        .theta_priv;
  throw ValidationError("unknown mechanism: " + spec.mechanism);
}

namespace detail_harness {

struct CellAddress {
  std::size_t n = 0, p = 0;
  double eps = 0.0;
  std::size_t pi = 0, ei = 0, index = 0;
};

inline CellResult run_cell(const ExperimentSpec& spec, const CellAddress& at) {
  const std::uint64_t cell_seed = derive_seed(spec.seed, at.index);
  CellResult cell;
  cell.n = at.n;
  cell.p = at.p;
  cell.eps = at.eps;
  std::vector<double> erm, sco;
  for (std::size_t t = 0; t < spec.trials; ++t) {
    const std::uint64_t trial_seed =
        spec.pair_across_n
            ? derive_seed(spec.seed, splitmix64((at.pi * 0x10001 + at.ei) * 0x3FF + t))
            : derive_seed(cell_seed, t);
    try {
      const TaskInstance task = make_task(spec.loss, at.n, at.p, derive_seed(trial_seed, 1));
      const EmpiricalLoss empirical(task.loss, task.data);
      const Vec theta = run_named_mechanism(spec, task, at.eps, derive_seed(trial_seed, 2));
      erm.push_back(excess_empirical_risk(theta, empirical, task.set, task.erm_minimizer));
      if (spec.population_risk) {
        const MonteCarloEstimate est = excess_population_risk(
            theta, task.loss, task.record_sampler, spec.holdout_m, task.population_minimizer,
            derive_seed(trial_seed, 3), task.set);
        sco.push_back(est.estimate);
      }
    } catch (const std::exception&) {
      ++cell.failures;
    }
  }
  cell.trials = spec.trials;
  cell.mean_erm = mean(erm);
  cell.median_erm = median(erm);
  cell.se_erm = std_error(erm);
  if (spec.population_risk && !sco.empty()) {
    cell.mean_sco = mean(sco);
    cell.se_sco = std_error(sco);
  }
  return cell;
}

}  // namespace detail_harness

// Cells run in parallel; each cell is internally sequential and seeded by
// its flat index, so the report does not depend on scheduling. Assembly is
// single-writer, in grid order.
inline RiskReport run_experiment(const ExperimentSpec& spec, std::size_t threads = 0) {
  spec.validate();
  RiskReport report;
  report.spec = spec;

  std::vector<detail_harness::CellAddress> cells;
  std::size_t index = 0;
  for (std::size_t pi = 0; pi < spec.p_grid.size(); ++pi)
    for (std::size_t ei = 0; ei < spec.eps_grid.size(); ++ei)
      for (std::size_t ni = 0; ni < spec.n_grid.size(); ++ni, ++index)
        cells.push_back({spec.n_grid[ni], spec.p_grid[pi], spec.eps_grid[ei], pi, ei, index});

  report.cells.resize(cells.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cells.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      report.cells[i] = detail_harness::run_cell(spec, cells[i]);
    return report;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1))
        report.cells[i] = detail_harness::run_cell(spec, cells[i]);
    });
  }
  for (std::thread& worker : workers) worker.join();
  return report;
}

// ---------------------------------------------------------------------------
// Config files: "key = value" lines, '#' comments.

inline std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) out[key] = value;
  }
  return out;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  return parse_config(in);
}

namespace config {

inline std::string get(const std::map<std::string, std::string>& cfg, const std::string& key,
                       const std::string& fallback) {
  const auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

inline double get_double(const std::map<std::string, std::string>& cfg, const std::string& key,
                         double fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not a number: " + it->second);
  }
}

inline std::uint64_t get_u64(const std::map<std::string, std::string>& cfg,
                             const std::string& key, std::uint64_t fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not an integer: " + it->second);
  }
}

inline std::vector<double> get_doubles(const std::map<std::string, std::string>& cfg,
                                       const std::string& key, std::vector<double> fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string cell;
  while (std::getline(ss, cell, ','))
    if (!cell.empty()) out.push_back(std::stod(cell));
  if (out.empty()) throw ValidationError("config key '" + key + "' lists no values");
  return out;
}

inline std::vector<std::size_t> get_sizes(const std::map<std::string, std::string>& cfg,
                                          const std::string& key,
                                          std::vector<std::size_t> fallback) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::vector<std::size_t> out;
  for (double v : get_doubles(cfg, key, {}))
    out.push_back(static_cast<std::size_t>(v));
  return out;
}

}  // namespace config

// ---------------------------------------------------------------------------
// Minimal JSON schema validation (type / properties / required / items),
// enough to check reports against the shipped schema file.

inline bool validate_json_schema(const nlohmann::json& value, const nlohmann::json& schema,
                                 std::string* error = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (error) *error = msg;
    return false;
  };
  if (schema.contains("type")) {
    const std::string type = schema["type"];
    const bool ok = (type == "object" && value.is_object()) ||
                    (type == "array" && value.is_array()) ||
                    (type == "number" && value.is_number()) ||
                    (type == "integer" && value.is_number_integer()) ||
                    (type == "string" && value.is_string()) ||
                    (type == "boolean" && value.is_boolean());
    if (!ok) return fail("expected type " + type + " at " + value.dump().substr(0, 40));
  }
  if (schema.contains("required")) {
    for (const auto& key : schema["required"])
      if (!value.contains(key.get<std::string>()))
        return fail("missing required key: " + key.get<std::string>());
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema["properties"].items())
      if (value.contains(key) && !validate_json_schema(value.at(key), sub, error)) return false;
  }
  if (schema.contains("items") && value.is_array()) {
    for (const auto& item : value)
      if (!validate_json_schema(item, schema["items"], error)) return false;
  }
  return true;
}

}  // namespace dpld

#endif  // DPLD_HARNESS_HPP
