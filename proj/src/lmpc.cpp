#include "ecocruise/lmpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ecocruise/errors.hpp"
#include "ecocruise/nnls.hpp"

namespace ecocruise {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MpcProblem build_mpc(double gamma, const LinearizedModel& lin, std::span<const double> grade_window, double v_init,
                     const VehicleParams& params, const MpcOptions& opts) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("MPC fuel weight must be nonnegative");
  if (grade_window.empty()) throw std::invalid_argument("MPC horizon must be at least one step");
  if (!(opts.soft_weight > 0.0)) throw std::invalid_argument("soft constraint weight must be positive");

  MpcProblem pr;
  pr.gamma = gamma;
  pr.n = grade_window.size();
  pr.lin = lin;
  pr.grade_window.assign(grade_window.begin(), grade_window.end());
  pr.v_init = v_init;
  pr.v_ref_dev = opts.v_ref_dev;
  pr.soft_weight = opts.soft_weight;
  pr.fuel_scale = opts.fuel_scale > 0.0 ? opts.fuel_scale : lin.time_rate_scale();
  pr.bounds = {params.v_min - lin.v_lin, params.v_max - lin.v_lin, params.te_min - lin.te_lin,
               params.te_max - lin.te_lin};

  const auto n = static_cast<Index>(pr.n);
  const double a = lin.a_coef;
  pr.v_free.resize(n + 1);
  pr.v_gain = MatrixXd::Zero(n + 1, n);
  pr.v_free[0] = v_init;
  for (Index k = 0; k < n; ++k) {
    pr.v_free[k + 1] = a * pr.v_free[k] + lin.b2 * pr.grade_window[static_cast<std::size_t>(k)];
    pr.v_gain.row(k + 1) = a * pr.v_gain.row(k);
    pr.v_gain(k + 1, k) = lin.b1;
  }

  const double s = pr.fuel_scale;
  const auto& f = lin.fuel_lin;
  // m = M te + m0 over k = 0..N-1
  const MatrixXd m_mat = s * (f.cv * pr.v_gain.topRows(n) + f.ct * MatrixXd::Identity(n, n));
  const VectorXd m0 = s * (VectorXd::Constant(n, f.c0) + f.cv * pr.v_free.head(n));
  // mean V = avg' te + mean0
  const double inv = 1.0 / static_cast<double>(n + 1);
  const VectorXd avg = pr.v_gain.colwise().sum().transpose() * inv;
  const double err0 = pr.v_ref_dev - pr.v_free.sum() * inv;

  auto& qp = pr.qp;
  qp.hessian = MatrixXd::Zero(2 * n, 2 * n);
  qp.hessian.topLeftCorner(n, n) = 2.0 * gamma * m_mat.transpose() * m_mat + 2.0 * avg * avg.transpose();
  qp.hessian.bottomRightCorner(n, n).diagonal().setConstant(2.0 * pr.soft_weight);
  qp.gradient = VectorXd::Zero(2 * n);
  qp.gradient.head(n) = 2.0 * gamma * m_mat.transpose() * m0 - 2.0 * err0 * avg;
  pr.constant = gamma * m0.squaredNorm() + err0 * err0;

  constexpr double inf = std::numeric_limits<double>::infinity();
  qp.lower.resize(2 * n);
  qp.upper.resize(2 * n);
  qp.lower.head(n).setConstant(pr.bounds.te_lo);
  qp.upper.head(n).setConstant(pr.bounds.te_hi);
  qp.lower.tail(n).setZero();
  qp.upper.tail(n).setConstant(inf);

  qp.ineq = MatrixXd::Zero(2 * n, 2 * n);
  qp.ineq_rhs.resize(2 * n);
  for (Index k = 0; k < n; ++k) {
    // V(k+1) - s(k) <= v_hi ; -V(k+1) - s(k) <= -v_lo
    qp.ineq.row(k).head(n) = pr.v_gain.row(k + 1);
    qp.ineq(k, n + k) = -1.0;
    qp.ineq_rhs[k] = pr.bounds.v_hi - pr.v_free[k + 1];
    qp.ineq.row(n + k).head(n) = -pr.v_gain.row(k + 1);
    qp.ineq(n + k, n + k) = -1.0;
    qp.ineq_rhs[n + k] = pr.v_free[k + 1] - pr.bounds.v_lo;
  }
  return pr;
}

double mpc_fuel_term(const MpcProblem& prob, const VectorXd& te) {
  const auto n = static_cast<Index>(prob.n);
  const VectorXd v = prob.v_free + prob.v_gain * te;
  const auto& f = prob.lin.fuel_lin;
  double sum = 0.0;
  for (Index k = 0; k < n; ++k) {
    const double m = prob.fuel_scale * (f.c0 + f.cv * v[k] + f.ct * te[k]);
    sum += m * m;
  }
  return sum;
}

double mpc_tracking_term(const MpcProblem& prob, const VectorXd& te) {
  const VectorXd v = prob.v_free + prob.v_gain * te;
  const double e = prob.v_ref_dev - v.mean();
  return e * e;
}

double mpc_objective(const MpcProblem& prob, const VectorXd& te, const VectorXd& slack) {
  return prob.gamma * mpc_fuel_term(prob, te) + mpc_tracking_term(prob, te) + prob.soft_weight * slack.squaredNorm();
}

double kkt_residual(const MpcProblem& prob, const MpcSolution& sol) {
  const auto& qp = prob.qp;
  const auto n = static_cast<Index>(prob.n);
  if (sol.te.size() != n || sol.slack.size() != n) throw std::invalid_argument("kkt_residual: dimension mismatch");
  VectorXd z(2 * n);
  z << sol.te, sol.slack;
  const VectorXd hz = qp.hessian * z;
  const VectorXd grad = hz + qp.gradient;

  // Columns: -C_r' for active rows, +e_i at lower bounds, -e_i at upper bounds.
  std::vector<VectorXd> cols;
  const double btol = 1e-9;
  for (Index i = 0; i < 2 * n; ++i) {
    if (std::isfinite(qp.lower[i]) && z[i] - qp.lower[i] <= btol * (1.0 + std::abs(qp.lower[i])))
      cols.push_back(VectorXd::Unit(2 * n, i));
    if (std::isfinite(qp.upper[i]) && qp.upper[i] - z[i] <= btol * (1.0 + std::abs(qp.upper[i])))
      cols.push_back(-VectorXd::Unit(2 * n, i));
  }
  const VectorXd row_slack = qp.ineq_rhs - qp.ineq * z;
  for (Index r = 0; r < qp.ineq.rows(); ++r)
    if (row_slack[r] <= btol * (1.0 + std::abs(qp.ineq_rhs[r]))) cols.push_back(-qp.ineq.row(r).transpose());

  VectorXd fitted = VectorXd::Zero(2 * n);
  if (!cols.empty()) {
    MatrixXd a(2 * n, static_cast<Index>(cols.size()));
    for (Index c = 0; c < a.cols(); ++c) a.col(c) = cols[static_cast<std::size_t>(c)];
    const auto ls = bounded_least_squares(a, grad, std::vector<bool>(cols.size(), true));
    fitted = a * ls.x;
  }
  const double scale =
      std::max({hz.cwiseAbs().maxCoeff(), qp.gradient.cwiseAbs().maxCoeff(), fitted.cwiseAbs().maxCoeff()});
  if (scale == 0.0) return 0.0;
  return (grad - fitted).cwiseAbs().maxCoeff() / scale;
}

namespace {

VectorXd feasible_start(const MpcProblem& prob, const VectorXd& te_guess) {
  const auto n = static_cast<Index>(prob.n);
  VectorXd z(2 * n);
  z.head(n) = te_guess.cwiseMax(prob.bounds.te_lo).cwiseMin(prob.bounds.te_hi);
  const VectorXd v = prob.v_free + prob.v_gain * z.head(n);
  for (Index k = 0; k < n; ++k)
    z[n + k] = std::max({0.0, v[k + 1] - prob.bounds.v_hi, prob.bounds.v_lo - v[k + 1]});
  return z;
}

MpcSolution finish(const MpcProblem& prob, const QpResult& res) {
  const auto n = static_cast<Index>(prob.n);
  MpcSolution sol;
  sol.te = res.x.head(n);
  sol.slack = res.x.tail(n);
  sol.v = prob.v_free + prob.v_gain * sol.te;
  sol.objective = mpc_objective(prob, sol.te, sol.slack);
  sol.iterations = res.iterations;
  sol.ineq_multipliers = res.ineq_multipliers;
  sol.bound_multipliers = res.bound_multipliers;
  sol.kkt_residual = stationarity_residual(prob.qp, res.x, res.ineq_multipliers, res.bound_multipliers);
  if (!(sol.kkt_residual <= 1e-6)) {
    std::ostringstream msg;
    msg << "MPC: KKT certificate " << sol.kkt_residual << " after " << res.iterations << " iterations";
    throw SolverError(msg.str());
  }
  return sol;
}

}  // namespace

MpcSolution MpcSolver::solve(const MpcProblem& prob) {
  const auto n = static_cast<Index>(prob.n);
  VectorXd guess = VectorXd::Zero(n);
  if (warm_.size() == n && n > 0) {
    guess.head(n - 1) = warm_.tail(n - 1);
    guess[n - 1] = warm_[n - 1];
  }
  const auto res = qp_.solve(prob.qp, feasible_start(prob, guess));
  auto sol = finish(prob, res);
  warm_ = sol.te;
  return sol;
}

MpcSolution solve_mpc(const MpcProblem& prob) {
  MpcSolver solver;
  return solver.solve(prob);
}

}  // namespace ecocruise
