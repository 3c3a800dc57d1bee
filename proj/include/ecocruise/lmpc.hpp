#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "ecocruise/qp_solver.hpp"
#include "ecocruise/vehicle_model.hpp"

namespace ecocruise {

/// Velocity and torque limits shifted into deviation coordinates.
struct MpcBounds {
  double v_lo = 0.0;
  double v_hi = 0.0;
  double te_lo = 0.0;
  double te_hi = 0.0;
};

struct MpcOptions {
  double soft_weight = 1e3;  // quadratic penalty on velocity-bound violation
  double v_ref_dev = 0.0;    // 0 when linearized at the set point
  double fuel_scale = 0.0;   // 0: lin.time_rate_scale()
};

/// Receding-horizon eco-cruise problem
///   min  gamma * sum_k m(k)^2 + (v_ref_dev - mean(V(0..N)))^2 + w * sum_k s(k)^2
///   s.t. V(k+1) = A V(k) + B1 Te(k) + B2 phi(k),  V(0) = v_init,
///        te_lo <= Te(k) <= te_hi,  v_lo - s(k) <= V(k+1) <= v_hi + s(k),  s >= 0,
/// with m(k) = fuel_scale * (c0 + cv V(k) + ct Te(k)). The dynamics are
/// condensed, leaving the QP in z = [Te(0..N-1), s(0..N-1)].
struct MpcProblem {
  double gamma = 0.0;
  std::size_t n = 0;
  LinearizedModel lin;
  std::vector<double> grade_window;
  double v_init = 0.0;
  double v_ref_dev = 0.0;
  MpcBounds bounds;
  double soft_weight = 1e3;
  double fuel_scale = 1.0;

  Eigen::VectorXd v_free;  // V(0..N) with zero torque deviation
  Eigen::MatrixXd v_gain;  // dV(k)/dTe(j), (N+1) x N
  QpProblem qp;
  double constant = 0.0;  // objective value not captured by the QP
};

/// Throws std::invalid_argument for gamma < 0, an empty window or soft_weight <= 0.
MpcProblem build_mpc(double gamma, const LinearizedModel& lin, std::span<const double> grade_window, double v_init,
                     const VehicleParams& params, const MpcOptions& opts = {});

struct MpcSolution {
  Eigen::VectorXd v;      // N+1 deviation velocities, v[0] == v_init
  Eigen::VectorXd te;     // N torque deviations
  Eigen::VectorXd slack;  // N velocity-bound violations
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  Eigen::VectorXd ineq_multipliers;
  Eigen::VectorXd bound_multipliers;
};

/// Objective value of an arbitrary (te, slack) pair, velocities from the dynamics.
double mpc_objective(const MpcProblem& prob, const Eigen::VectorXd& te, const Eigen::VectorXd& slack);
/// sum_k m(k)^2 for the given torque deviations (unweighted fuel term).
double mpc_fuel_term(const MpcProblem& prob, const Eigen::VectorXd& te);
/// (v_ref_dev - mean V)^2 for the given torque deviations.
double mpc_tracking_term(const MpcProblem& prob, const Eigen::VectorXd& te);

/// Stationarity residual of the condensed QP at `sol`, with multipliers
/// re-derived by nonnegative least squares over the constraints active there.
double kkt_residual(const MpcProblem& prob, const MpcSolution& sol);

/// Solves MpcProblems, warm-starting each solve from the previous solution
/// shifted by one step. One instance per thread.
class MpcSolver {
 public:
  explicit MpcSolver(QpSettings settings = {}) : qp_(settings) {}

  /// Throws SolverError when the QP fails or its certificate exceeds 1e-6.
  MpcSolution solve(const MpcProblem& prob);
  void reset() { warm_.resize(0); }

 private:
  ActiveSetQp qp_;
  Eigen::VectorXd warm_;
};

/// One-shot solve without warm start.
MpcSolution solve_mpc(const MpcProblem& prob);

}  // namespace ecocruise
