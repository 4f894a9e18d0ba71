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
// Domain types: datasets, per-example loss families with declared constants,
// convex constraint sets with projection, and inverse-temperature schedules
// with closed-form integrals. All types are immutable once built and safe to
// share across threads; evaluation is pure.

#ifndef DPLD_MODEL_HPP
#define DPLD_MODEL_HPP

#include <cstddef>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpld/common.hpp"

namespace dpld {

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  std::vector<Vec> points;

  std::size_t n() const { return points.size(); }
  std::size_t dim_data() const { return points.empty() ? 0 : points.front().size(); }

  static Dataset from_records(std::vector<Vec> records) {
    if (records.empty()) throw ValidationError("dataset must contain at least one record");
    const std::size_t d = records.front().size();
    for (const Vec& r : records)
      if (r.size() != d) throw ValidationError("all dataset records must share one dimension");
    return Dataset{std::move(records)};
  }

  // Neighboring dataset: exactly one record replaced.
  Dataset neighbor(std::size_t index, Vec replacement) const {
    if (index >= n()) throw ValidationError("neighbor index out of range");
    if (replacement.size() != dim_data())
      throw ValidationError("replacement record has wrong dimension");
    Dataset out = *this;
    out.points[index] = std::move(replacement);
    return out;
  }
};

// Line-oriented text format: one record per line, comma-separated reals
// (0/1 entries for packing bit datasets).
inline Dataset read_dataset(std::istream& in) {
  std::vector<Vec> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Vec rec;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        rec.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError("unparsable dataset cell: '" + cell + "'");
      }
    }
    if (!rec.empty()) records.push_back(std::move(rec));
  }
  return Dataset::from_records(std::move(records));
}

inline Dataset read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file: " + path);
  return read_dataset(in);
}

inline void write_dataset(const Dataset& data, std::ostream& out) {
  out.precision(17);
  for (const Vec& rec : data.points) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out << ',';
      out << rec[i];
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// LossModel

// A per-example loss family ell(theta; d) with value/gradient oracles and the
// declared constants L (Lipschitz), m (strong convexity, optional) and M
// (smoothness, optional). Gradients at non-differentiable points return a
// fixed canonical subgradient so evaluation is deterministic.
struct LossModel {
  std::function<double(const Vec&, const Vec&)> value;    // (theta, record)
  std::function<Vec(const Vec&, const Vec&)> gradient;    // (theta, record)
  double lipschitz_L = 0.0;
  std::optional<double> strong_convexity_m;
  std::optional<double> smoothness_M;
  std::size_t dim = 0;  // parameter dimension p
  std::string name;
};

// ell(theta; d) = 1/2 |theta - d|^2 with m = M = 1. The Lipschitz constant
// depends on the constraint set; the caller supplies sup over C of |theta-d|.
inline LossModel make_quadratic_loss(std::size_t p, double lipschitz_bound) {
  if (lipschitz_bound < 0) throw ValidationError("lipschitz bound must be >= 0");
  LossModel loss;
  loss.value = [](const Vec& theta, const Vec& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = theta[i] - d[i];
      s += g * g;
    }
    return 0.5 * s;
  };
  loss.gradient = [](const Vec& theta, const Vec& d) { return sub(theta, d); };
  loss.lipschitz_L = lipschitz_bound;
  loss.strong_convexity_m = 1.0;
  loss.smoothness_M = 1.0;
  loss.dim = p;
  loss.name = "quadratic";
  return loss;
}

// ell(theta; d) = |<theta, d>|, convex but not strongly convex; L = 1 under
// the normalization |d| <= 1. At the kink <theta,d> = 0 the subgradient is
// the zero vector (sign 0 maps to +d scaled by 0).
inline LossModel make_abs_linear_loss(std::size_t p) {
  LossModel loss;
  loss.value = [](const Vec& theta, const Vec& d) { return std::abs(dot(theta, d)); };
  loss.gradient = [](const Vec& theta, const Vec& d) {
    const double ip = dot(theta, d);
    const double s = ip > 0 ? 1.0 : (ip < 0 ? -1.0 : 0.0);
    return scale(Vec(d), s);
  };
  loss.lipschitz_L = 1.0;
  loss.dim = p;
  loss.name = "abs_linear";
  return loss;
}

// Data-independent L(theta) = |theta|, 1-Lipschitz; drives the
// non-convergence diagnostic. Subgradient at the origin is the zero vector.
inline LossModel make_norm_loss(std::size_t p) {
  LossModel loss;
  loss.value = [](const Vec& theta, const Vec&) { return norm(theta); };
  loss.gradient = [](const Vec& theta, const Vec&) {
    const double nrm = norm(theta);
    if (nrm == 0.0) return Vec(theta.size(), 0.0);
    return scale(Vec(theta), 1.0 / nrm);
  };
  loss.lipschitz_L = 1.0;
  loss.dim = p;
  loss.name = "norm";
  return loss;
}

// ell(theta; d_i) = min_j (|theta - c_j| / alpha - 1) * d_{i,j} over packing
// centers c_j, with ties in the min broken by lowest center index. Each loss
// is (1/alpha)-Lipschitz. Records are one bit per center.
inline LossModel make_packing_loss(double alpha, std::vector<Vec> centers,
                                   const Dataset& bits) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 1/2)");
  if (centers.empty()) throw ValidationError("packing needs at least one center");
  const std::size_t p = centers.front().size();
  for (const Vec& c : centers) {
    if (c.size() != p) throw ValidationError("packing centers must share one dimension");
    if (norm(c) > 1.0 + 1e-9) throw ValidationError("packing centers must lie in the unit ball");
  }
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j)
      if (distance(centers[i], centers[j]) < alpha - 1e-9)
        throw ValidationError("packing centers must be pairwise >= alpha apart");
  for (const Vec& rec : bits.points)
    if (rec.size() != centers.size())
      throw ValidationError("record length must equal the number of centers");

  LossModel loss;
  // Strict < keeps the lowest index on ties.
  loss.value = [alpha, centers](const Vec& theta, const Vec& d) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centers.size(); ++j) {
      const double v = (distance(theta, centers[j]) / alpha - 1.0) * d[j];
      if (v < best) best = v;
    }
    return best;
  };
  loss.gradient = [alpha, centers](const Vec& theta, const Vec& d) {
    std::size_t best_j = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centers.size(); ++j) {
      const double v = (distance(theta, centers[j]) / alpha - 1.0) * d[j];
      if (v < best) {
        best = v;
        best_j = j;
      }
    }
    if (d[best_j] == 0.0) return Vec(theta.size(), 0.0);
    const double dist = distance(theta, centers[best_j]);
    if (dist == 0.0) return Vec(theta.size(), 0.0);  // canonical subgradient at a center
    Vec g = sub(theta, centers[best_j]);
    return scale(std::move(g), d[best_j] / (alpha * dist));
  };
  loss.lipschitz_L = 1.0 / alpha;
  loss.dim = p;
  loss.name = "packing";
  return loss;
}

// Greedy rejection sampling for an alpha-packing of the unit ball:
// deterministic given the seed, stops after a fixed attempt budget.
inline std::vector<Vec> greedy_packing_centers(std::size_t p, double alpha,
                                               std::size_t max_count, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 1/2)");
  CounterRng rng(seed);
  std::vector<Vec> centers;
  const std::size_t budget = 200 * max_count + 1000;
  for (std::size_t attempt = 0; attempt < budget && centers.size() < max_count; ++attempt) {
    Vec cand = rng.next_in_unit_ball(p);
    bool ok = true;
    for (const Vec& c : centers)
      if (distance(cand, c) < alpha) {
        ok = false;
        break;
      }
    if (ok) centers.push_back(std::move(cand));
  }
  return centers;
}

// ---------------------------------------------------------------------------
// EmpiricalLoss

// L(theta; D) = (1/n) sum_i ell(theta; d_i). Replacing one record moves the
// gradient by at most 2L/n in l2 norm; gradient_sensitivity() is that bound.
class EmpiricalLoss {
 public:
  EmpiricalLoss(LossModel loss, Dataset data) : loss_(std::move(loss)), data_(std::move(data)) {
    if (data_.n() == 0) throw ValidationError("empirical loss needs a nonempty dataset");
  }

  double value(const Vec& theta) const {
    double s = 0.0;
    for (const Vec& d : data_.points) s += loss_.value(theta, d);
    return s / static_cast<double>(data_.n());
  }

  Vec gradient(const Vec& theta) const {
    Vec g(theta.size(), 0.0);
    for (const Vec& d : data_.points) axpy(1.0, loss_.gradient(theta, d), g);
    return scale(std::move(g), 1.0 / static_cast<double>(data_.n()));
  }

  double gradient_sensitivity() const {
    return 2.0 * loss_.lipschitz_L / static_cast<double>(data_.n());
  }

  const LossModel& loss() const { return loss_; }
  const Dataset& dataset() const { return data_; }
  std::size_t n() const { return data_.n(); }
  std::size_t dim() const { return loss_.dim; }

 private:
  LossModel loss_;
  Dataset data_;
};

// ---------------------------------------------------------------------------
// ConstraintSet

// Convex body with Euclidean projection, membership test, and l2 diameter.
// Two kinds cover every experiment here: l2 balls and axis-aligned boxes.
class ConstraintSet {
 public:
  enum class Kind { l2_ball, box };

  static ConstraintSet l2_ball(Vec center, double radius) {
    if (!(radius > 0.0)) throw ValidationError("ball radius must be positive");
    ConstraintSet s;
    s.kind_ = Kind::l2_ball;
    s.center_ = std::move(center);
    s.radius_ = radius;
    return s;
  }

  static ConstraintSet box(Vec lo, Vec hi) {
    if (lo.size() != hi.size()) throw ValidationError("box bounds must share one dimension");
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (!(lo[i] < hi[i])) throw ValidationError("box must satisfy lo < hi per coordinate");
    ConstraintSet s;
    s.kind_ = Kind::box;
    s.lo_ = std::move(lo);
    s.hi_ = std::move(hi);
    return s;
  }

  Kind kind() const { return kind_; }

  std::size_t dim() const { return kind_ == Kind::l2_ball ? center_.size() : lo_.size(); }

  Vec project(Vec x) const {
    if (kind_ == Kind::l2_ball) {
      const double d = distance(x, center_);
      if (d <= radius_) return x;
      const double c = radius_ / d;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = center_[i] + c * (x[i] - center_[i]);
      return x;
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo_[i], hi_[i]);
    return x;
  }

  bool contains(const Vec& x, double tol = 1e-9) const {
    if (kind_ == Kind::l2_ball) return distance(x, center_) <= radius_ + tol;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < lo_[i] - tol || x[i] > hi_[i] + tol) return false;
    return true;
  }

  // l2 diameter: 2r for a ball, |hi - lo| for a box.
  double diameter() const {
    if (kind_ == Kind::l2_ball) return 2.0 * radius_;
    return distance(hi_, lo_);
  }

  Vec centroid() const {
    if (kind_ == Kind::l2_ball) return center_;
    Vec c(lo_.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (lo_[i] + hi_[i]);
    return c;
  }

  // A point uniform over the set (used by samplers and sampled checks).
  Vec sample_uniform(CounterRng& rng) const {
    if (kind_ == Kind::l2_ball)
      return add(scale(rng.next_in_unit_ball(center_.size()), radius_), center_);
    Vec x(lo_.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.next_uniform(lo_[i], hi_[i]);
    return x;
  }

  const Vec& ball_center() const { return center_; }
  double ball_radius() const { return radius_; }
  const Vec& box_lo() const { return lo_; }
  const Vec& box_hi() const { return hi_; }

 private:
  ConstraintSet() = default;
  Kind kind_ = Kind::l2_ball;
  Vec center_, lo_, hi_;
  double radius_ = 0.0;
};

// ---------------------------------------------------------------------------
// TemperatureSchedule

// Inverse temperature beta_t, either constant or the power law t^a (a >= 0),
// with closed-form integrals of beta_t and beta_t^2 over [0, T] and over
// arbitrary segments. B_t = integral(t, 1) is the primitive used by the
// exponentially weighted average.
class TemperatureSchedule {
 public:
  enum class Kind { constant, power };

  static TemperatureSchedule constant(double beta) {
    if (!(beta >= 0.0)) throw ValidationError("constant beta must be >= 0");
    return TemperatureSchedule(Kind::constant, beta);
  }

  static TemperatureSchedule power(double a) {
    if (!(a >= 0.0)) throw ValidationError("power exponent a must be >= 0");
    return TemperatureSchedule(Kind::power, a);
  }

  Kind kind() const { return kind_; }
  double parameter() const { return param_; }

  double beta_at(double t) const {
    if (kind_ == Kind::constant) return param_;
    return std::pow(t, param_);
  }

  // Closed form for int_0^T beta_t^k dt, k in {1, 2}.
  double integral(double T, int k) const {
    if (T < 0) throw ValidationError("integral horizon must be >= 0");
    if (k != 1 && k != 2) throw ValidationError("integral power k must be 1 or 2");
    if (kind_ == Kind::constant) return (k == 1 ? param_ : param_ * param_) * T;
    const double e = k * param_ + 1.0;
    return std::pow(T, e) / e;
  }

  // int_{t0}^{t1} beta_t dt, the per-step drift weight of the discretization.
  double segment_integral(double t0, double t1) const {
    if (kind_ == Kind::constant) return param_ * (t1 - t0);
    const double e = param_ + 1.0;
    return (std::pow(t1, e) - std::pow(t0, e)) / e;
  }

  std::string describe() const {
    if (kind_ == Kind::constant) return "constant(beta=" + std::to_string(param_) + ")";
    return "power(a=" + std::to_string(param_) + ")";
  }

 private:
  TemperatureSchedule(Kind k, double p) : kind_(k), param_(p) {}
  Kind kind_;
  double param_;
};

// ---------------------------------------------------------------------------
// Sampled model checks. The finite-difference comparison uses only the value
// oracle, so it stays independent of the gradient implementation it audits.

struct CheckOptions {
  std::size_t pairs = 100;
  double fd_step = 1e-6;
  double fd_rel_tol = 1e-5;
  double slack = 1e-9;
};

inline bool check_lipschitz(const LossModel& loss, const ConstraintSet& set, CounterRng& rng,
                            const std::vector<Vec>& records, const CheckOptions& opt = {}) {
  for (std::size_t i = 0; i < opt.pairs; ++i) {
    const Vec a = set.sample_uniform(rng);
    const Vec b = set.sample_uniform(rng);
    const Vec& d = records[rng.next_index(records.size())];
    const double gap = std::abs(loss.value(a, d) - loss.value(b, d));
    if (gap > loss.lipschitz_L * distance(a, b) + opt.slack) return false;
  }
  return true;
}

inline bool check_gradient_finite_difference(const LossModel& loss, const ConstraintSet& set,
                                             CounterRng& rng, const std::vector<Vec>& records,
                                             const CheckOptions& opt = {}) {
  for (std::size_t i = 0; i < opt.pairs; ++i) {
    const Vec theta = set.sample_uniform(rng);
    const Vec& d = records[rng.next_index(records.size())];
    const Vec g = loss.gradient(theta, d);
    Vec fd(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
      Vec hi = theta, lo = theta;
      hi[j] += opt.fd_step;
      lo[j] -= opt.fd_step;
      fd[j] = (loss.value(hi, d) - loss.value(lo, d)) / (2.0 * opt.fd_step);
    }
    const double denom = std::max(1.0, norm(g));
    if (distance(g, fd) > opt.fd_rel_tol * denom) return false;
  }
  return true;
}

inline bool check_strong_convexity(const LossModel& loss, const ConstraintSet& set,
                                   CounterRng& rng, const std::vector<Vec>& records,
                                   const CheckOptions& opt = {}) {
  if (!loss.strong_convexity_m) return true;
  const double m = *loss.strong_convexity_m;
  for (std::size_t i = 0; i < opt.pairs; ++i) {
    const Vec a = set.sample_uniform(rng);
    const Vec b = set.sample_uniform(rng);
    const Vec& d = records[rng.next_index(records.size())];
    const Vec g = loss.gradient(a, d);
    const Vec diff = sub(b, a);
    const double lhs = loss.value(b, d);
    const double rhs = loss.value(a, d) + dot(g, diff) + 0.5 * m * squared_norm(diff);
    if (lhs < rhs - opt.slack) return false;
  }
  return true;
}

}  // namespace dpld

#endif  // DPLD_MODEL_HPP
