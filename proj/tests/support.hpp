#pragma once
// Shared oracles and instance generators for the unit tests and the acceptance run.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "ecocruise/grid_dp.hpp"
#include "ecocruise/lmpc.hpp"
#include "ecocruise/random.hpp"
#include "ecocruise/vehicle_model.hpp"

namespace testsupport {

using ecocruise::Rng;

/// Integer-lattice stage model: every transition lands on a grid node, so
/// interpolation is exact and the grid DP must agree with enumeration.
struct LatticeModel {
  std::size_t n1 = 5, n2 = 5, m = 3, horizon = 4;
  std::vector<std::vector<int>> d1, d2;      // [k][u] state shifts
  std::vector<std::vector<double>> base;     // [k][u] input cost
  std::vector<double> w1, w2;                // [k] state-dependent cost slopes
  std::vector<double> terminal;              // n1*n2
  std::vector<bool> terminal_ok;

  std::size_t stages() const { return horizon; }
  std::size_t inputs() const { return m; }

  void expand(std::size_t k, double x1, double x2, std::span<ecocruise::StepOutcome> out) const {
    for (std::size_t u = 0; u < m; ++u) {
      auto& o = out[u];
      o.x1 = x1 + d1[k][u];
      o.x2 = x2 + d2[k][u];
      o.cost = base[k][u] + w1[k] * x1 + w2[k] * x2 * x2;
      o.feasible = o.x1 >= 0 && o.x1 <= static_cast<double>(n1 - 1) && o.x2 >= 0 &&
                   o.x2 <= static_cast<double>(n2 - 1);
    }
  }

  double terminal_cost(double x1, double x2) const {
    const auto i = static_cast<std::size_t>(std::lround(x1)), j = static_cast<std::size_t>(std::lround(x2));
    if (i >= n1 || j >= n2) return penalty;
    return terminal_ok[i * n2 + j] ? terminal[i * n2 + j] : penalty;
  }

  double penalty = 1e6;
};

inline LatticeModel random_lattice(Rng& rng) {
  LatticeModel lm;
  lm.horizon = 2 + rng.below(4);  // 2..5
  lm.n1 = 3 + rng.below(5);       // 3..7
  lm.n2 = 3 + rng.below(5);
  lm.m = 2 + rng.below(3);        // 2..4
  for (std::size_t k = 0; k < lm.horizon; ++k) {
    std::vector<int> a, b;
    std::vector<double> c;
    for (std::size_t u = 0; u < lm.m; ++u) {
      a.push_back(static_cast<int>(rng.below(5)) - 2);
      b.push_back(static_cast<int>(rng.below(3)) - 1);
      c.push_back(rng.uniform(0.0, 10.0));
    }
    lm.d1.push_back(a);
    lm.d2.push_back(b);
    lm.base.push_back(c);
    lm.w1.push_back(rng.uniform(-1.0, 1.0));
    lm.w2.push_back(rng.uniform(0.0, 0.5));
  }
  for (std::size_t i = 0; i < lm.n1 * lm.n2; ++i) {
    lm.terminal.push_back(rng.uniform(0.0, 5.0));
    lm.terminal_ok.push_back(rng.uniform() < 0.7);
  }
  return lm;
}

struct BruteForce {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> inputs;
  bool feasible = false;
};

/// Exhaustive search over every input sequence from (x1, x2).
inline BruteForce enumerate(const LatticeModel& lm, double x1, double x2) {
  BruteForce best;
  std::vector<std::size_t> seq(lm.horizon, 0);
  std::vector<ecocruise::StepOutcome> out(lm.m);
  while (true) {
    double a = x1, b = x2, c = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < lm.horizon && ok; ++k) {
      lm.expand(k, a, b, out);
      const auto& o = out[seq[k]];
      ok = o.feasible;
      c += o.cost;
      a = o.x1;
      b = o.x2;
    }
    if (ok) {
      const double t = lm.terminal_cost(a, b);
      if (t < lm.penalty && c + t < best.cost) {
        best.cost = c + t;
        best.inputs = seq;
        best.feasible = true;
      }
    }
    std::size_t pos = 0;
    while (pos < lm.horizon && ++seq[pos] == lm.m) seq[pos++] = 0;
    if (pos == lm.horizon) break;
  }
  return best;
}

/// Smooth random grade window within +-max_grade.
inline std::vector<double> random_grades(Rng& rng, std::size_t n, double max_grade = 0.05) {
  std::vector<double> g(n);
  const double w1 = rng.uniform(20.0, 200.0), w2 = rng.uniform(5.0, 40.0);
  const double p1 = rng.uniform(0.0, 6.3), p2 = rng.uniform(0.0, 6.3);
  const double a1 = rng.uniform(0.0, 1.0), a2 = rng.uniform(0.0, 1.0 - a1);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(k);
    g[k] = max_grade * (a1 * std::sin(6.283185307179586 * x / w1 + p1) + a2 * std::sin(6.283185307179586 * x / w2 + p2));
  }
  return g;
}

/// True when no torque bound is within `tol` of its range and no velocity bound is met or violated.
inline bool interior(const ecocruise::MpcProblem& prob, const ecocruise::MpcSolution& sol, double tol = 1e-3) {
  const auto& b = prob.bounds;
  const double tt = tol * (b.te_hi - b.te_lo), vt = tol * (b.v_hi - b.v_lo);
  for (Eigen::Index k = 0; k < sol.te.size(); ++k)
    if (sol.te[k] <= b.te_lo + tt || sol.te[k] >= b.te_hi - tt) return false;
  for (Eigen::Index k = 1; k < sol.v.size(); ++k)
    if (sol.v[k] <= b.v_lo + vt || sol.v[k] >= b.v_hi - vt) return false;
  return sol.slack.maxCoeff() <= 0.0;
}

/// Feasible point of the condensed QP: torque inside the box, slack at least the
/// velocity violation. Half the draws are uniform over the box; the rest
/// perturb `center` (if given) by up to `radius` per coordinate.
inline Eigen::VectorXd random_feasible(Rng& rng, const ecocruise::MpcProblem& prob, const Eigen::VectorXd* center,
                                       double radius) {
  const auto n = static_cast<Eigen::Index>(prob.n);
  Eigen::VectorXd te(n);
  const bool near = center && rng.uniform() < 0.5;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double x = near ? (*center)[k] + rng.uniform(-radius, radius) : rng.uniform(prob.bounds.te_lo, prob.bounds.te_hi);
    te[k] = std::clamp(x, prob.bounds.te_lo, prob.bounds.te_hi);
  }
  const Eigen::VectorXd v = prob.v_free + prob.v_gain * te;
  Eigen::VectorXd z(2 * n);
  z.head(n) = te;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double need = std::max({0.0, v[k + 1] - prob.bounds.v_hi, prob.bounds.v_lo - v[k + 1]});
    z[n + k] = need + (rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, 0.5));
  }
  return z;
}

// RK4 in time on (s, v) until s reaches ds; returns the velocity there.
inline double fine_time_integration(const ecocruise::VehicleParams& p, double v0, double te, double phi, double ds) {
  auto f = [&](double v) { return ecocruise::accel(p, v, te, phi); };
  double s = 0.0, v = v0;
  const double dt = ds / v0 / 4000.0;
  while (true) {
    const double k1v = f(v), k1s = v;
    const double k2v = f(v + 0.5 * dt * k1v), k2s = v + 0.5 * dt * k1v;
    const double k3v = f(v + 0.5 * dt * k2v), k3s = v + 0.5 * dt * k2v;
    const double k4v = f(v + dt * k3v), k4s = v + dt * k3v;
    const double ds_step = dt / 6.0 * (k1s + 2 * k2s + 2 * k3s + k4s);
    if (s + ds_step >= ds) {
      // finish the remaining distance with a proportional partial step
      const double frac = (ds - s) / ds_step;
      return v + frac * dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    }
    s += ds_step;
    v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
}

}  // namespace testsupport
