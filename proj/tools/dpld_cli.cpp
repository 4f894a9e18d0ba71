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
// Command-line driver. Subcommands: erm, sco, expmech, accountant, phase,
// diagnose, stability, lowerbound-loss. Exit codes: 0 success, 1 validation
// error, 2 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "dpld/harness.hpp"

namespace {

using dpld::Vec;

struct GlobalOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string format = "csv";
  std::size_t trials = 0;  // 0: keep the config/default value
  bool verbose = false;

  std::map<std::string, std::string> config() const {
    if (config_path.empty()) return {};
    return dpld::parse_config_file(config_path);
  }
};

std::ofstream open_out(const GlobalOptions& global, const std::string& filename) {
  std::filesystem::create_directories(global.out_dir);
  const auto path = std::filesystem::path(global.out_dir) / filename;
  std::ofstream out(path);
  if (!out) throw dpld::ValidationError("cannot open output file: " + path.string());
  std::cout << "writing " << path.string() << "\n";
  return out;
}

dpld::ExperimentSpec spec_from_config(const GlobalOptions& global, bool population_risk) {
  const auto cfg = global.config();
  dpld::ExperimentSpec spec;
  spec.mechanism = dpld::config::get(cfg, "mechanism", population_risk ? "reg_sco" : "expmech");
  spec.loss = dpld::config::get(cfg, "loss", "quadratic");
  spec.n_grid = dpld::config::get_sizes(cfg, "n_grid", {100, 200});
  spec.p_grid = dpld::config::get_sizes(cfg, "p_grid", {2});
  spec.eps_grid = dpld::config::get_doubles(cfg, "eps_grid", {1.0});
  spec.delta = dpld::config::get_double(cfg, "delta", 1e-5);
  spec.trials = static_cast<std::size_t>(dpld::config::get_double(cfg, "trials", 50));
  spec.m_param = dpld::config::get_double(cfg, "m", 0.5);
  spec.c_const = dpld::config::get_double(cfg, "c_const", 4.0);
  spec.lambda_const = dpld::config::get_double(cfg, "lambda", 1.0);
  spec.dpsgd_steps = static_cast<std::size_t>(dpld::config::get_double(cfg, "dpsgd_steps", 500));
  spec.dpsgd_eta = dpld::config::get_double(cfg, "dpsgd_eta", 0.05);
  spec.sampler = dpld::config::get(cfg, "sampler", "grid_oracle");
  spec.pair_across_n = dpld::config::get_double(cfg, "pair_across_n", 0) != 0;
  spec.holdout_m = static_cast<std::size_t>(dpld::config::get_double(cfg, "holdout_m", 10000));
  spec.population_risk = population_risk;
  spec.seed = global.seed;
  if (global.trials > 0) spec.trials = global.trials;
  return spec;
}

void emit_report(const GlobalOptions& global, const dpld::RiskReport& report) {
  if (global.out_dir.empty()) {
    if (global.format == "json")
      std::cout << report.to_json().dump(2) << "\n";
    else
      report.write_csv(std::cout);
    return;
  }
  if (global.format == "json") {
    auto out = open_out(global, "report.json");
    out << report.to_json().dump(2) << "\n";
  } else {
    auto out = open_out(global, "report.csv");
    report.write_csv(out);
  }
}

int run_grid_experiment(const GlobalOptions& global, bool population_risk) {
  const dpld::ExperimentSpec spec = spec_from_config(global, population_risk);
  const dpld::RiskReport report = dpld::run_experiment(spec);
  emit_report(global, report);
  return 0;
}

int run_expmech(const GlobalOptions& global) {
  const auto cfg = global.config();
  const std::string loss_name = dpld::config::get(cfg, "loss", "quadratic");
  const std::size_t p = static_cast<std::size_t>(dpld::config::get_double(cfg, "p", 2));
  const double eps = dpld::config::get_double(cfg, "eps", 1.0);
  const std::string dataset_path = dpld::config::get(cfg, "dataset", "");
  const std::string sampler_name =
      dpld::config::get(cfg, "sampler", p <= 2 ? "grid_oracle" : "langevin");

  dpld::TaskInstance task;
  if (dataset_path.empty()) {
    const std::size_t n = static_cast<std::size_t>(dpld::config::get_double(cfg, "n", 200));
    task = dpld::make_task(loss_name, n, p, dpld::derive_seed(global.seed, 1));
  } else {
    task = dpld::make_task(loss_name, 1, p, 0);
    task.data = dpld::read_dataset_file(dataset_path);
  }
  const auto report = dpld::exponential_mechanism(
      task.loss, task.data, task.set, eps, dpld::sampler_from_string(sampler_name),
      dpld::derive_seed(global.seed, 2));
  std::cout << report.to_json().dump(2) << "\n";
  if (!global.out_dir.empty()) {
    auto out = open_out(global, "mechanism_report.json");
    out << report.to_json().dump(2) << "\n";
  }
  return 0;
}

int run_accountant(const GlobalOptions& global) {
  const auto cfg = global.config();
  const std::string kind = dpld::config::get(cfg, "curve", "finite_time");
  const double delta = dpld::config::get_double(cfg, "delta", 1e-5);
  const double T = dpld::config::get_double(cfg, "T", 1.0);
  const double delta_grad = dpld::config::get_double(cfg, "delta_grad", 0.01);

  dpld::RenyiCurve curve;
  if (kind == "finite_time") {
    const std::string sched_kind = dpld::config::get(cfg, "schedule", "constant");
    const dpld::TemperatureSchedule sched =
        sched_kind == "power"
            ? dpld::TemperatureSchedule::power(dpld::config::get_double(cfg, "a", 1.0))
            : dpld::TemperatureSchedule::constant(dpld::config::get_double(cfg, "beta", 1.0));
    curve = dpld::rdp_finite_time(delta_grad, sched, T);
  } else if (kind == "short_sc") {
    curve = dpld::rdp_short_term_sc(delta_grad, dpld::config::get_double(cfg, "beta", 1.0),
                                    dpld::config::get_double(cfg, "m", 1.0), T);
  } else if (kind == "long_sc") {
    dpld::ScBoundParams prm;
    prm.m = dpld::config::get_double(cfg, "m", 1.0);
    prm.M = dpld::config::get_double(cfg, "M", 1.0);
    prm.R = dpld::config::get_double(cfg, "R", 1.0);
    prm.beta = dpld::config::get_double(cfg, "beta", 1.0);
    prm.delta_grad = delta_grad;
    prm.p = dpld::config::get_double(cfg, "p", 1.0);
    const double stationary = dpld::config::get_double(cfg, "stationary", 0.0);
    curve = dpld::rdp_long_term_sc(prm, [stationary](double) { return stationary; }, T);
  } else {
    throw dpld::ValidationError("unknown curve kind: " + kind);
  }

  const auto grid = dpld::default_alpha_grid();
  std::cout << "# " << curve.description << "\n";
  std::cout << "alpha,bound\n";
  for (double alpha : grid) {
    if (alpha < curve.valid_alpha_min) continue;
    try {
      std::cout << alpha << "," << curve(alpha) << "\n";
    } catch (const dpld::ValidationError&) {
    }
  }
  const dpld::DpConversion conv = dpld::rdp_to_approx_dp(curve, delta);
  std::cout << "# (eps, delta) = (" << conv.eps << ", " << delta << ") at alpha = "
            << conv.alpha_star << "\n";
  if (!global.out_dir.empty()) {
    auto out = open_out(global, "curve.csv");
    dpld::write_curve_csv(curve, grid, out);
  }
  return 0;
}

int run_phase(const GlobalOptions& global) {
  const auto cfg = global.config();
  dpld::ScBoundParams prm;
  prm.m = dpld::config::get_double(cfg, "m", 1.0);
  prm.M = dpld::config::get_double(cfg, "M", 1.0);
  prm.R = dpld::config::get_double(cfg, "R", 1.0);
  prm.beta = dpld::config::get_double(cfg, "beta", 1.0);
  prm.delta_grad = dpld::config::get_double(cfg, "delta_grad", 1.0);
  prm.p = dpld::config::get_double(cfg, "p", 1.0);
  const double alpha = dpld::config::get_double(cfg, "alpha", 2.0);
  const double stationary = dpld::config::get_double(cfg, "stationary", 0.0);
  const auto result =
      dpld::phase_transition_time(prm, [stationary](double) { return stationary; }, alpha);
  if (!result) {
    std::cout << "no phase transition: the long-term asymptote dominates the short-term one\n";
  } else {
    std::cout << "T_star = " << result->T_star << "\n";
    std::cout << "analytic_estimate = " << result->analytic_estimate << "\n";
    std::cout << "t0 = " << dpld::sc_bound_t0(prm, alpha) << "\n";
  }
  return 0;
}

int run_diagnose(const GlobalOptions& global) {
  const auto cfg = global.config();
  const std::size_t p = static_cast<std::size_t>(dpld::config::get_double(cfg, "p", 16));
  const double T = dpld::config::get_double(cfg, "T", 1.0 / (100.0 * static_cast<double>(p)));
  const double beta = dpld::config::get_double(cfg, "beta", 4.0 / std::sqrt(T));
  const std::size_t steps =
      static_cast<std::size_t>(dpld::config::get_double(cfg, "steps", 1000));

  dpld::TaskInstance task = dpld::make_task(dpld::config::get(cfg, "loss", "norm"),
                                            static_cast<std::size_t>(
                                                dpld::config::get_double(cfg, "n", 1)),
                                            p, dpld::derive_seed(global.seed, 1));
  dpld::EmpiricalLoss emp(task.loss, task.data);
  dpld::DiffusionConfig dcfg;
  dcfg.schedule = dpld::TemperatureSchedule::constant(beta);
  dcfg.horizon_T = T;
  dcfg.steps = steps;
  dcfg.seed = dpld::derive_seed(global.seed, 2);
  Vec theta0(p, 0.0);
  theta0[0] = 1.0;
  dcfg.theta0 = theta0;
  const dpld::Trajectory traj = dpld::run_pld(emp, task.set, dcfg);
  const auto report = dpld::nonconvergence_diagnostic(traj, emp, task.set, beta);
  std::cout << "p = " << p << ", T = " << T << ", beta = " << beta << "\n";
  std::cout << "path_length = " << report.path_length << "\n";
  std::cout << "net_displacement = " << report.net_displacement << "\n";
  if (report.stationary_mass)
    std::cout << "stationary_mass_within_net_ball = " << *report.stationary_mass << "\n";
  else
    std::cout << "stationary_mass_within_net_ball = " << report.mass_note << "\n";
  if (global.verbose && !global.out_dir.empty()) {
    auto out = open_out(global, "trajectory.csv");
    dpld::write_trajectory_csv(traj, out);
  }
  return 0;
}

int run_stability(const GlobalOptions& global) {
  const auto cfg = global.config();
  const std::size_t n = static_cast<std::size_t>(dpld::config::get_double(cfg, "n", 50));
  const std::size_t trials =
      global.trials > 0 ? global.trials
                        : static_cast<std::size_t>(dpld::config::get_double(cfg, "trials", 2000));
  const double m = dpld::config::get_double(cfg, "m", 0.5);
  const double eps = dpld::config::get_double(cfg, "eps", 1.0);
  const double L = 1.0;

  dpld::ConstraintSet box = dpld::ConstraintSet::box(Vec{-1.0}, Vec{1.0});
  dpld::LossModel base = dpld::make_abs_linear_loss(1);
  dpld::LossModel reg = dpld::regularize_loss(base, m, box);
  dpld::CounterRng rng(dpld::derive_seed(global.seed, 1));
  std::vector<Vec> records;
  records.push_back(Vec{0.0});
  for (std::size_t i = 1; i < n; ++i) records.push_back(Vec{rng.next_uniform(-1.0, 1.0)});
  dpld::Dataset data = dpld::Dataset::from_records(std::move(records));
  auto mech = [&](const dpld::Dataset& d, std::uint64_t s) {
    return dpld::exponential_mechanism(reg, d, box, eps, dpld::Sampler::grid_oracle, s,
                                       dpld::SamplerOptions{1024, 5.0, 0}, L)
        .theta_priv;
  };
  const auto est = dpld::measure_uniform_stability(mech, data, Vec{1.0}, base,
                                                   {Vec{1.0}, Vec{-1.0}, Vec{0.5}}, trials,
                                                   dpld::derive_seed(global.seed, 2));
  std::cout << "n = " << n << ", trials = " << trials << "\n";
  std::cout << "estimated_gap = " << est.estimate << "\n";
  std::cout << "std_error = " << est.std_error << "\n";
  std::cout << "certified_bound_2L2_over_mn = " << 2.0 * L * L / (m * static_cast<double>(n))
            << "\n";
  return 0;
}

int run_lowerbound_loss(const GlobalOptions& global) {
  const auto cfg = global.config();
  const std::size_t p = static_cast<std::size_t>(dpld::config::get_double(cfg, "p", 3));
  const double alpha = dpld::config::get_double(cfg, "alpha", 0.25);
  const std::size_t max_centers =
      static_cast<std::size_t>(dpld::config::get_double(cfg, "max_centers", 16));
  const std::size_t n = static_cast<std::size_t>(dpld::config::get_double(cfg, "n", 100));

  const auto centers =
      dpld::greedy_packing_centers(p, alpha, max_centers, dpld::derive_seed(global.seed, 1));
  dpld::CounterRng rng(dpld::derive_seed(global.seed, 2));
  std::vector<double> probs(centers.size());
  for (double& q : probs) q = rng.next_double();
  std::vector<Vec> bits;
  for (std::size_t i = 0; i < n; ++i) {
    Vec rec(centers.size());
    for (std::size_t j = 0; j < rec.size(); ++j)
      rec[j] = rng.next_double() < probs[j] ? 1.0 : 0.0;
    bits.push_back(rec);
  }
  dpld::Dataset data = dpld::Dataset::from_records(bits);
  dpld::LossModel loss = dpld::make_packing_loss(alpha, centers, data);
  dpld::EmpiricalLoss emp(loss, data);

  std::cout << "centers = " << centers.size() << ", lipschitz_L = " << loss.lipschitz_L << "\n";
  std::cout << "center_index,frequency,empirical_loss_at_center\n";
  for (std::size_t j = 0; j < centers.size(); ++j) {
    double freq = 0.0;
    for (const Vec& d : data.points) freq += d[j];
    freq /= static_cast<double>(n);
    std::cout << j << "," << freq << "," << emp.value(centers[j]) << "\n";
  }
  if (!global.out_dir.empty()) {
    auto cfile = open_out(global, "packing_centers.csv");
    for (const Vec& c : centers) {
      for (std::size_t i = 0; i < c.size(); ++i) cfile << (i ? "," : "") << c[i];
      cfile << "\n";
    }
    auto dfile = open_out(global, "packing_bits.csv");
    dpld::write_dataset(data, dfile);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpld: differentially private optimization via Langevin diffusion"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--config", global.config_path, "key = value config file");
  app.add_option("--seed", global.seed, "master seed");
  app.add_option("--out", global.out_dir, "output directory");
  app.add_option("--format", global.format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--trials", global.trials, "override trial count");
  app.add_flag("--verbose", global.verbose, "extra output (trajectory dumps)");

  auto* erm = app.add_subcommand("erm", "grid experiment over excess empirical risk");
  auto* sco = app.add_subcommand("sco", "grid experiment incl. excess population risk");
  auto* expmech = app.add_subcommand("expmech", "one-shot exponential mechanism");
  auto* accountant = app.add_subcommand("accountant", "print a Renyi curve and (eps, delta)");
  auto* phase = app.add_subcommand("phase", "short/long-term phase transition time");
  auto* diagnose = app.add_subcommand("diagnose", "non-convergence diagnostic");
  auto* stability = app.add_subcommand("stability", "uniform stability measurement");
  auto* lowerbound = app.add_subcommand("lowerbound-loss", "packing loss construction");
  for (CLI::App* sub : {erm, sco, expmech, accountant, phase, diagnose, stability, lowerbound})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (erm->parsed()) return run_grid_experiment(global, false);
    if (sco->parsed()) return run_grid_experiment(global, true);
    if (expmech->parsed()) return run_expmech(global);
    if (accountant->parsed()) return run_accountant(global);
    if (phase->parsed()) return run_phase(global);
    if (diagnose->parsed()) return run_diagnose(global);
    if (stability->parsed()) return run_stability(global);
    if (lowerbound->parsed()) return run_lowerbound_loss(global);
  } catch (const dpld::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const dpld::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
