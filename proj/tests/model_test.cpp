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

#include "dpld/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace dpld {
namespace {

// Gauss-Legendre quadrature on geometrically refined panels toward 0; the
// independent reference for the closed-form schedule integrals.
double quadrature_beta_power(const TemperatureSchedule& schedule, double T, int k) {
  static const double nodes[] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                 0.5384693101056831, 0.9061798459386640};
  static const double weights[] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                   0.4786286704993665, 0.2369268850561891};
  auto integrand = [&](double t) {
    const double b = schedule.beta_at(t);
    return k == 1 ? b : b * b;
  };
  double total = 0.0;
  double hi = T;
  for (int panel = 0; panel < 2000 && hi > 1e-300; ++panel) {
    const double lo = hi / 2.0;
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    double s = 0.0;
    for (int i = 0; i < 5; ++i) s += weights[i] * integrand(mid + half * nodes[i]);
    total += s * half;
    hi = lo;
  }
  return total;
}

Dataset small_dataset() {
  return Dataset::from_records({Vec{0.3, -0.2}, Vec{-0.1, 0.4}, Vec{0.2, 0.2}});
}

TEST(QuadraticLoss, MinimumAndDirectEvaluation) {
  LossModel loss = make_quadratic_loss(2, 2.0);
  const Vec d{0.4, -0.3};
  EXPECT_DOUBLE_EQ(loss.value(d, d), 0.0);
  EXPECT_EQ(loss.gradient(d, d), Vec({0.0, 0.0}));

  EXPECT_DOUBLE_EQ(loss.value(Vec{1.0, 0.0}, Vec{0.0, 0.0}), 0.5);
  EXPECT_EQ(loss.gradient(Vec{1.0, 0.0}, Vec{0.0, 0.0}), Vec({1.0, 0.0}));
}

TEST(QuadraticLoss, SampledStrongConvexity) {
  LossModel loss = make_quadratic_loss(2, 2.0);
  ConstraintSet set = ConstraintSet::l2_ball(Vec{0.0, 0.0}, 1.0);
  CounterRng rng(11);
  EXPECT_TRUE(check_strong_convexity(loss, set, rng, small_dataset().points));
}

TEST(AbsLinearLoss, Examples) {
  LossModel loss = make_abs_linear_loss(2);
  EXPECT_DOUBLE_EQ(loss.value(Vec{0.0, 1.0}, Vec{1.0, 0.0}), 0.0);  // orthogonal
  EXPECT_DOUBLE_EQ(loss.value(Vec{1.0, 0.0}, Vec{1.0, 0.0}), 1.0);
  EXPECT_EQ(loss.gradient(Vec{1.0, 0.0}, Vec{1.0, 0.0}), Vec({1.0, 0.0}));
  // Canonical subgradient at the kink.
  EXPECT_EQ(loss.gradient(Vec{0.0, 1.0}, Vec{1.0, 0.0}), Vec({0.0, 0.0}));
}

TEST(AbsLinearLoss, SampledLipschitz) {
  LossModel loss = make_abs_linear_loss(2);
  ConstraintSet set = ConstraintSet::l2_ball(Vec{0.0, 0.0}, 1.0);
  CounterRng rng(13);
  std::vector<Vec> records = {Vec{1.0, 0.0}, Vec{0.6, -0.8}, Vec{-0.707, 0.707}};
  EXPECT_TRUE(check_lipschitz(loss, set, rng, records));
}

TEST(NormLoss, SubgradientAtOrigin) {
  LossModel loss = make_norm_loss(3);
  EXPECT_EQ(loss.gradient(Vec{0.0, 0.0, 0.0}, Vec{0.0, 0.0, 0.0}), Vec({0.0, 0.0, 0.0}));
  EXPECT_NEAR(loss.value(Vec{3.0, 4.0, 0.0}, Vec{0.0, 0.0, 0.0}), 5.0, 1e-15);
  EXPECT_NEAR(norm(loss.gradient(Vec{3.0, 4.0, 0.0}, Vec{0.0, 0.0, 0.0})), 1.0, 1e-15);
}

TEST(GradientFiniteDifference, BuiltInLosses) {
  ConstraintSet set = ConstraintSet::l2_ball(Vec{0.0, 0.0}, 1.0);
  const auto records = small_dataset().points;
  {
    CounterRng rng(21);
    EXPECT_TRUE(check_gradient_finite_difference(make_quadratic_loss(2, 2.0), set, rng, records));
  }
  {
    CounterRng rng(22);
    EXPECT_TRUE(check_gradient_finite_difference(make_abs_linear_loss(2), set, rng, records));
  }
  {
    CounterRng rng(23);
    EXPECT_TRUE(check_gradient_finite_difference(make_norm_loss(2), set, rng, records));
  }
}

TEST(PackingLoss, ValueAtCenterWithBitSet) {
  // ell(c_j; d) = -1 whenever the record's j-th bit is set.
  std::vector<Vec> centers = {Vec{-0.5, 0.0}, Vec{0.5, 0.0}, Vec{0.0, 0.6}};
  Dataset bits = Dataset::from_records({Vec{0.0, 1.0, 0.0}});
  LossModel loss = make_packing_loss(0.3, centers, bits);
  EXPECT_DOUBLE_EQ(loss.value(centers[1], bits.points[0]), -1.0);
  EXPECT_DOUBLE_EQ(loss.lipschitz_L, 1.0 / 0.3);
}

TEST(PackingLoss, AllBitsZeroGivesZeroEverywhere) {
  std::vector<Vec> centers = {Vec{-0.5}, Vec{0.5}};
  Dataset bits = Dataset::from_records({Vec{0.0, 0.0}});
  LossModel loss = make_packing_loss(0.25, centers, bits);
  CounterRng rng(3);
  for (int i = 0; i < 32; ++i) {
    const Vec theta{rng.next_uniform(-1.0, 1.0)};
    EXPECT_DOUBLE_EQ(loss.value(theta, bits.points[0]), 0.0);
  }
}

TEST(PackingLoss, BruteForceMinExample) {
  // Centers at +-0.5, alpha = 0.25, single record (1, 0), theta = 0.25:
  // min{(0.25/0.25 - 1)*1, (0.75/0.25 - 1)*0} = 0. Independent brute force
  // evaluates every branch of the min.
  std::vector<Vec> centers = {Vec{0.5}, Vec{-0.5}};
  Dataset bits = Dataset::from_records({Vec{1.0, 0.0}});
  LossModel loss = make_packing_loss(0.25, centers, bits);
  const Vec theta{0.25};
  double brute = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centers.size(); ++j)
    brute = std::min(brute,
                     (std::abs(theta[0] - centers[j][0]) / 0.25 - 1.0) * bits.points[0][j]);
  EXPECT_DOUBLE_EQ(brute, 0.0);
  EXPECT_DOUBLE_EQ(loss.value(theta, bits.points[0]), brute);
}

TEST(PackingLoss, TieBreaksToLowestIndex) {
  // theta equidistant from both centers, both bits set: the subgradient must
  // point away from the lower-indexed center.
  std::vector<Vec> centers = {Vec{-0.5}, Vec{0.5}};
  Dataset bits = Dataset::from_records({Vec{1.0, 1.0}});
  LossModel loss = make_packing_loss(0.25, centers, bits);
  const Vec g = loss.gradient(Vec{0.0}, bits.points[0]);
  EXPECT_GT(g[0], 0.0);  // away from -0.5
}

TEST(PackingLoss, RejectsRecordLengthMismatch) {
  std::vector<Vec> centers = {Vec{-0.5}, Vec{0.5}};
  Dataset bits = Dataset::from_records({Vec{1.0}});
  EXPECT_THROW(make_packing_loss(0.25, centers, bits), ValidationError);
}

TEST(GreedyPackingCenters, InvariantsAndDeterminism) {
  const auto centers = greedy_packing_centers(3, 0.3, 12, 99);
  EXPECT_LE(centers.size(), 12u);
  EXPECT_GE(centers.size(), 2u);
  for (const Vec& c : centers) EXPECT_LE(norm(c), 1.0 + 1e-12);
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j)
      EXPECT_GE(distance(centers[i], centers[j]), 0.3);

  EXPECT_EQ(centers, greedy_packing_centers(3, 0.3, 12, 99));

  // 1-D, alpha = 1/2 - eps: at most 5 centers can fit in [-1, 1].
  const auto line = greedy_packing_centers(1, 0.4999, 3, 7);
  EXPECT_LE(line.size(), 3u);
  for (std::size_t i = 0; i < line.size(); ++i)
    for (std::size_t j = i + 1; j < line.size(); ++j)
      EXPECT_GE(distance(line[i], line[j]), 0.4999);
}

TEST(EmpiricalLoss, ValueIsMeanAndSensitivityBound) {
  LossModel loss = make_quadratic_loss(2, 2.0);
  Dataset data = small_dataset();
  EmpiricalLoss emp(loss, data);
  const Vec theta{0.1, 0.1};
  double direct = 0.0;
  for (const Vec& d : data.points) direct += loss.value(theta, d);
  direct /= static_cast<double>(data.n());
  EXPECT_DOUBLE_EQ(emp.value(theta), direct);

  // Replacing one record moves the gradient by at most 2L/n at sampled theta.
  ConstraintSet set = ConstraintSet::l2_ball(Vec{0.0, 0.0}, 1.0);
  Dataset swapped = data.neighbor(1, Vec{-0.4, -0.4});
  EmpiricalLoss emp_prime(loss, swapped);
  CounterRng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec x = set.sample_uniform(rng);
    EXPECT_LE(distance(emp.gradient(x), emp_prime.gradient(x)),
              emp.gradient_sensitivity() + 1e-12);
  }
}

TEST(Dataset, NeighborChangesExactlyOneRecord) {
  Dataset data = small_dataset();
  Dataset nb = data.neighbor(1, Vec{9.0, 9.0});
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < data.n(); ++i)
    if (data.points[i] != nb.points[i]) ++diffs;
  EXPECT_EQ(diffs, 1u);
  EXPECT_THROW(data.neighbor(7, Vec{0.0, 0.0}), ValidationError);
}

TEST(Dataset, TextRoundTrip) {
  CounterRng rng(17);
  std::vector<Vec> records;
  for (int i = 0; i < 20; ++i) {
    Vec r(3);
    for (double& x : r) x = rng.next_gaussian();
    records.push_back(r);
  }
  Dataset data = Dataset::from_records(records);
  std::stringstream ss;
  write_dataset(data, ss);
  Dataset back = read_dataset(ss);
  ASSERT_EQ(back.n(), data.n());
  for (std::size_t i = 0; i < data.n(); ++i)
    for (std::size_t j = 0; j < data.dim_data(); ++j)
      EXPECT_DOUBLE_EQ(back.points[i][j], data.points[i][j]);
}

TEST(ConstraintSet, ProjectionIdempotentNonexpansiveFeasible) {
  const ConstraintSet ball = ConstraintSet::l2_ball(Vec{0.2, -0.1}, 0.8);
  const ConstraintSet box = ConstraintSet::box(Vec{-1.0, 0.0}, Vec{1.0, 2.0});
  for (const ConstraintSet& set : {ball, box}) {
    CounterRng rng(31);
    for (int i = 0; i < 1000; ++i) {
      Vec x(2);
      for (double& v : x) v = 3.0 * rng.next_gaussian();
      const Vec px = set.project(x);
      EXPECT_TRUE(set.contains(px));
      EXPECT_LE(distance(set.project(px), px), 1e-12);  // idempotent
      const Vec y = set.sample_uniform(rng);
      EXPECT_LE(distance(px, y), distance(x, y) + 1e-12);  // nonexpansive
    }
  }
}

TEST(ConstraintSet, DiameterMatchesSampledSupremum) {
  const ConstraintSet ball = ConstraintSet::l2_ball(Vec{0.0, 0.0}, 0.7);
  const ConstraintSet box = ConstraintSet::box(Vec{-0.5, -1.0}, Vec{0.5, 1.0});
  for (const ConstraintSet& set : {ball, box}) {
    CounterRng rng(41);
    std::vector<Vec> pts;
    for (int i = 0; i < 400; ++i) {
      pts.push_back(set.sample_uniform(rng));
      // Boundary points reached by projecting far-away draws.
      Vec far(2);
      for (double& v : far) v = 50.0 * rng.next_gaussian();
      pts.push_back(set.project(far));
    }
    double sup = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        sup = std::max(sup, distance(pts[i], pts[j]));
    EXPECT_LE(sup, set.diameter() + 1e-12);
    EXPECT_GE(sup, 0.99 * set.diameter());
  }
}

TEST(TemperatureSchedule, ClosedFormsAndQuadrature) {
  {
    const auto sched = TemperatureSchedule::constant(3.5);
    EXPECT_DOUBLE_EQ(sched.integral(2.0, 1), 7.0);
    EXPECT_DOUBLE_EQ(sched.integral(2.0, 2), 24.5);
  }
  for (double a : {0.0, 0.5, 1.0, 1.7, 2.3}) {
    const auto sched = TemperatureSchedule::power(a);
    for (double T : {0.3, 1.0, 2.7}) {
      EXPECT_NEAR(sched.integral(T, 1), std::pow(T, a + 1) / (a + 1), 1e-14);
      EXPECT_NEAR(sched.integral(T, 2), std::pow(T, 2 * a + 1) / (2 * a + 1), 1e-14);
      for (int k : {1, 2}) {
        const double closed = sched.integral(T, k);
        const double quad = quadrature_beta_power(sched, T, k);
        EXPECT_NEAR(closed, quad, 1e-8 * std::max(1.0, std::abs(closed)));
      }
    }
  }
  EXPECT_THROW(TemperatureSchedule::power(-0.1), ValidationError);
}

TEST(TemperatureSchedule, SegmentIntegralsTelescope) {
  const auto sched = TemperatureSchedule::power(1.3);
  const double T = 2.0;
  double total = 0.0;
  for (int k = 0; k < 64; ++k) total += sched.segment_integral(T * k / 64.0, T * (k + 1) / 64.0);
  EXPECT_NEAR(total, sched.integral(T, 1), 1e-12);
}

}  // namespace
}  // namespace dpld
