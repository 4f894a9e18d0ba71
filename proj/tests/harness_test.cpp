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

#include "dpld/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace dpld {
namespace {

TEST(ExcessEmpiricalRisk, ZeroAtTheMinimizerAndQuadraticClosedForm) {
  TaskInstance task = make_task("quadratic", 50, 2, 7);
  EmpiricalLoss emp(task.loss, task.data);
  EXPECT_DOUBLE_EQ(excess_empirical_risk(*task.erm_minimizer, emp, task.set, task.erm_minimizer),
                   0.0);

  // theta = mu + v has excess |v|^2/2 when mu is interior.
  const Vec v{0.05, -0.02};
  const Vec theta = add(Vec(*task.erm_minimizer), v);
  EXPECT_NEAR(excess_empirical_risk(theta, emp, task.set, task.erm_minimizer),
              0.5 * squared_norm(v), 1e-12);
}

TEST(ExcessEmpiricalRisk, NumericSolverMatchesClosedForm) {
  TaskInstance task = make_task("quadratic", 80, 3, 9);
  EmpiricalLoss emp(task.loss, task.data);
  const Vec numeric = solve_erm_minimizer(emp, task.set);
  EXPECT_LE(distance(numeric, *task.erm_minimizer), 1e-6);
}

TEST(ExcessPopulationRisk, ZeroAtThePopulationMinimizer) {
  TaskInstance task = make_task("quadratic", 30, 2, 11);
  const MonteCarloEstimate est =
      excess_population_risk(*task.population_minimizer, task.loss, task.record_sampler, 20000,
                             task.population_minimizer, 13);
  EXPECT_LE(std::abs(est.estimate), 3.0 * est.std_error + 1e-12);
}

TEST(ExcessPopulationRisk, GaussianMeanEstimationClosedForm) {
  // Records ~ N(mu, 0.01 I) with mu outside the set: the population
  // minimizer of the quadratic loss is the projection of mu. The numeric
  // large-sample solve agrees.
  const Vec mu{1.2, 0.0};
  auto sampler = [mu](CounterRng& rng) {
    Vec d = mu;
    for (double& x : d) x += 0.1 * rng.next_gaussian();
    return d;
  };
  ConstraintSet ball = ConstraintSet::l2_ball(Vec{0.0, 0.0}, 1.0);
  const Vec projected = ball.project(mu);

  LossModel quad = make_quadratic_loss(2, 3.0);
  CounterRng rng(21);
  std::vector<Vec> sample;
  for (int i = 0; i < 20000; ++i) sample.push_back(sampler(rng));
  EmpiricalLoss surrogate(quad, Dataset::from_records(std::move(sample)));
  const Vec numeric = solve_erm_minimizer(surrogate, ball);
  EXPECT_LE(distance(numeric, projected), 5e-3);

  const MonteCarloEstimate at_projection =
      excess_population_risk(projected, quad, sampler, 10000, projected, 31);
  EXPECT_LE(std::abs(at_projection.estimate), 3.0 * at_projection.std_error + 1e-12);
}

TEST(ExcessPopulationRisk, HoldoutGrowthIsConsistent) {
  TaskInstance task = make_task("quadratic", 30, 2, 11);
  const Vec theta{0.3, 0.1};
  const MonteCarloEstimate small = excess_population_risk(
      theta, task.loss, task.record_sampler, 10000, task.population_minimizer, 51);
  const MonteCarloEstimate large = excess_population_risk(
      theta, task.loss, task.record_sampler, 40000, task.population_minimizer, 52);
  const double combined = std::sqrt(small.std_error * small.std_error +
                                    large.std_error * large.std_error);
  EXPECT_LE(std::abs(small.estimate - large.estimate), 3.0 * combined);
}

TEST(MeasureUniformStability, DataIgnoringMechanismHasZeroGap) {
  Dataset data = Dataset::from_records({Vec{0.5}, Vec{-0.5}, Vec{0.1}});
  LossModel abs = make_abs_linear_loss(1);
  auto constant_mech = [](const Dataset&, std::uint64_t seed) {
    CounterRng rng(seed);
    return Vec{0.3 + 0.01 * rng.next_gaussian()};
  };
  const StabilityEstimate est = measure_uniform_stability(
      constant_mech, data, Vec{1.0}, abs, {Vec{1.0}, Vec{-0.7}}, 4000, 3);
  EXPECT_LE(std::abs(est.estimate), 3.0 * est.std_error + 1e-9);
}

TEST(NonconvergenceDiagnostic, DegenerateAndBasicProperties) {
  TaskInstance task = make_task("norm", 1, 2, 3);
  EmpiricalLoss emp(task.loss, task.data);
  Trajectory still;
  still.thetas = {Vec{0.2, 0.2}};
  still.times = {0.0};
  still.schedule = TemperatureSchedule::constant(1.0);
  const auto report = nonconvergence_diagnostic(still, emp, task.set, 4.0, 256);
  EXPECT_DOUBLE_EQ(report.path_length, 0.0);
  EXPECT_DOUBLE_EQ(report.net_displacement, 0.0);
  ASSERT_TRUE(report.stationary_mass.has_value());
  EXPECT_GE(*report.stationary_mass, 0.0);
  EXPECT_LE(*report.stationary_mass, 1.0);
}

TEST(NonconvergenceDiagnostic, MassUnavailableAboveTwoDimensions) {
  TaskInstance task = make_task("norm", 1, 3, 3);
  EmpiricalLoss emp(task.loss, task.data);
  DiffusionConfig cfg;
  cfg.schedule = TemperatureSchedule::constant(2.0);
  cfg.horizon_T = 0.01;
  cfg.steps = 64;
  cfg.seed = 5;
  const Trajectory traj = run_pld(emp, task.set, cfg);
  const auto report = nonconvergence_diagnostic(traj, emp, task.set, 2.0);
  EXPECT_FALSE(report.stationary_mass.has_value());
  EXPECT_FALSE(report.mass_note.empty());
  EXPECT_GE(report.path_length, report.net_displacement);
}

ExperimentSpec tiny_spec() {
  ExperimentSpec spec;
  spec.mechanism = "dpsgd";
  spec.loss = "quadratic";
  spec.n_grid = {40};
  spec.p_grid = {2};
  spec.eps_grid = {1.0};
  spec.delta = 1e-5;
  spec.trials = 1;
  spec.seed = 99;
  spec.dpsgd_steps = 50;
  return spec;
}

TEST(RunExperiment, SingleCellSingleTrial) {
  const RiskReport report = run_experiment(tiny_spec());
  ASSERT_EQ(report.cells.size(), 1u);
  EXPECT_EQ(report.cells[0].n, 40u);
  EXPECT_EQ(report.cells[0].failures, 0u);
}

TEST(RunExperiment, ReportIsByteIdenticalAcrossReruns) {
  ExperimentSpec spec = tiny_spec();
  spec.trials = 3;
  spec.n_grid = {30, 60};
  std::stringstream a, b;
  run_experiment(spec).write_csv(a);
  run_experiment(spec).write_csv(b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find("n,p,eps,trials,failures,mean_excess_erm,median_excess_erm,se_erm,"
                         "mean_excess_sco,se_sco"),
            std::string::npos);
}

TEST(RunExperiment, CellFailuresAreRecordedAndTheRunContinues) {
  ExperimentSpec spec = tiny_spec();
  spec.mechanism = "convex_last";
  spec.eps_grid = {50.0, 1.0};  // 50 violates the calibration precondition
  spec.trials = 2;
  const RiskReport report = run_experiment(spec);
  ASSERT_EQ(report.cells.size(), 2u);
  EXPECT_EQ(report.cells[0].failures, 2u);
  EXPECT_EQ(report.cells[1].failures, 0u);
}

TEST(RunExperiment, StronglyConvexMeanRiskScalesAcrossN) {
  // n vs 2n cells of the weighted-average mechanism with paired seeds: the
  // mean excess risk ratio tracks the 1/n^2 rate damped by its log factors
  // (the acceptance band [2, 8]).
  ExperimentSpec spec;
  spec.mechanism = "sc_avg";
  spec.loss = "quadratic";
  spec.n_grid = {250, 500};
  spec.p_grid = {2};
  spec.eps_grid = {1.0};
  spec.delta = 1e-5;
  spec.trials = 50;
  spec.seed = 3;
  spec.m_param = 0.5;
  spec.pair_across_n = true;
  const RiskReport report = run_experiment(spec);
  ASSERT_EQ(report.cells.size(), 2u);
  const double ratio = report.cells[0].mean_erm / report.cells[1].mean_erm;
  EXPECT_GE(ratio, 2.0);
  EXPECT_LE(ratio, 8.0);
}

TEST(RunExperiment, RiskNonnegativeUpToNoise) {
  ExperimentSpec spec = tiny_spec();
  spec.trials = 10;
  spec.population_risk = true;
  spec.holdout_m = 2000;
  const RiskReport report = run_experiment(spec);
  for (const CellResult& cell : report.cells) {
    EXPECT_GE(cell.mean_erm, -3.0 * cell.se_erm);
    ASSERT_TRUE(cell.mean_sco.has_value());
    EXPECT_GE(*cell.mean_sco, -3.0 * *cell.se_sco);
  }
}

TEST(ConfigParser, KeyValueLinesWithComments) {
  std::stringstream ss;
  ss << "# experiment setup\n"
     << "mechanism = expmech\n"
     << "eps_grid = 0.5, 1, 2  # three cells\n"
     << "trials=25\n"
     << "\n"
     << "bad line without equals\n";
  const auto cfg = parse_config(ss);
  EXPECT_EQ(config::get(cfg, "mechanism", ""), "expmech");
  EXPECT_EQ(config::get_double(cfg, "trials", 0), 25.0);
  const auto eps = config::get_doubles(cfg, "eps_grid", {});
  ASSERT_EQ(eps.size(), 3u);
  EXPECT_DOUBLE_EQ(eps[1], 1.0);
  EXPECT_EQ(config::get(cfg, "missing", "fallback"), "fallback");
  EXPECT_THROW(config::get_double(cfg, "mechanism", 0), ValidationError);
}

TEST(JsonSchema, ReportValidatesAndBrokenReportFails) {
  const nlohmann::json schema = {
      {"type", "object"},
      {"required", {"mechanism", "cells"}},
      {"properties",
       {{"mechanism", {{"type", "string"}}},
        {"cells",
         {{"type", "array"},
          {"items",
           {{"type", "object"},
            {"required", {"n", "mean_excess_erm"}},
            {"properties",
             {{"n", {{"type", "integer"}}}, {"mean_excess_erm", {{"type", "number"}}}}}}}}}}}};
  const RiskReport report = run_experiment(tiny_spec());
  std::string error;
  EXPECT_TRUE(validate_json_schema(report.to_json(), schema, &error)) << error;

  nlohmann::json broken = report.to_json();
  broken.erase("cells");
  EXPECT_FALSE(validate_json_schema(broken, schema, &error));
}

TEST(JsonSchema, ShippedSchemaFileAcceptsReports) {
  // The schema shipped with the project validates generated reports.
  std::ifstream in(std::string(DPLD_SOURCE_DIR) + "/schemas/risk_report.schema.json");
  ASSERT_TRUE(in.good());
  nlohmann::json schema;
  in >> schema;
  ExperimentSpec spec = tiny_spec();
  spec.population_risk = true;
  spec.holdout_m = 1000;
  std::string error;
  EXPECT_TRUE(validate_json_schema(run_experiment(spec).to_json(), schema, &error)) << error;
}

}  // namespace
}  // namespace dpld
