#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>

namespace ecocruise {

/// min 0.5 x'Hx + g'x  s.t.  lower <= x <= upper,  C x <= d.
/// Infinite bounds are allowed; H must be symmetric positive semidefinite.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd ineq;
  Eigen::VectorXd ineq_rhs;

  Eigen::Index size() const { return gradient.size(); }
  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(hessian * x) + gradient.dot(x); }

  /// Largest bound or inequality violation at x.
  double max_violation(const Eigen::VectorXd& x) const;
};

struct QpSettings {
  /// Diagonal Tikhonov term relative to each Hessian diagonal entry; keeps
  /// the reduced systems definite when H is only semidefinite.
  double regularization = 1e-10;
  double feasibility_tol = 1e-9;
  int max_iterations = 0;  // 0: 20*(n+m)+100
};

/// Stationarity: H x + g + C' ineq_multipliers + bound_multipliers = 0, with
/// ineq_multipliers >= 0 and bound_multipliers <= 0 at lower, >= 0 at upper bounds.
struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd bound_multipliers;
  Eigen::VectorXd ineq_multipliers;
  int iterations = 0;
  double objective = 0.0;
};

/// Primal active-set method for convex QPs. Deterministic; accepts a warm
/// start that is projected onto the bounds but must satisfy C x <= d.
class ActiveSetQp {
 public:
  explicit ActiveSetQp(QpSettings settings = {}) : settings_(settings) {}

  /// Throws SolverError on an infeasible start, a failed factorization or the
  /// iteration limit.
  QpResult solve(const QpProblem& qp, const Eigen::VectorXd& start) const;

 private:
  QpSettings settings_;
};

/// Relative stationarity residual ||Hx + g + C'mu + z||_inf divided by the
/// largest of ||Hx||, ||g||, ||C'mu||, ||z|| (0 when all terms vanish).
double stationarity_residual(const QpProblem& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& ineq_mult,
                             const Eigen::VectorXd& bound_mult);

/// Plain-text dump: `n m`, then sections `H`, `g`, `lower`, `upper`, `C`, `d`,
/// each written row by row with 17 significant digits.
void write_qp_text(std::ostream& out, const QpProblem& qp);

}  // namespace ecocruise
