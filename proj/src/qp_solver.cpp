#include "ecocruise/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

#include "ecocruise/errors.hpp"

namespace ecocruise {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double QpProblem::max_violation(const VectorXd& x) const {
  double v = 0.0;
  for (Index i = 0; i < x.size(); ++i) v = std::max({v, lower[i] - x[i], x[i] - upper[i]});
  if (ineq.rows() > 0) v = std::max(v, (ineq * x - ineq_rhs).maxCoeff());
  return v;
}

namespace {

enum class VarState : unsigned char { Free, AtLower, AtUpper };

}  // namespace

QpResult ActiveSetQp::solve(const QpProblem& qp, const VectorXd& start) const {
  const Index n = qp.size();
  const Index m = qp.ineq.rows();
  if (qp.hessian.rows() != n || qp.hessian.cols() != n || qp.lower.size() != n || qp.upper.size() != n ||
      (m > 0 && qp.ineq.cols() != n) || qp.ineq_rhs.size() != m || start.size() != n)
    throw SolverError("QP: inconsistent dimensions");

  const double max_diag = n > 0 ? qp.hessian.diagonal().cwiseAbs().maxCoeff() : 0.0;
  MatrixXd h = qp.hessian;
  for (Index i = 0; i < n; ++i)
    h(i, i) += settings_.regularization * std::max(std::abs(qp.hessian(i, i)), 1e-12 * max_diag + 1e-300);

  const double ftol = settings_.feasibility_tol;
  std::vector<VarState> state(static_cast<std::size_t>(n), VarState::Free);
  VectorXd x = start;
  for (Index i = 0; i < n; ++i) {
    if (qp.lower[i] > qp.upper[i]) throw SolverError("QP: lower bound above upper bound");
    if (x[i] <= qp.lower[i]) {
      x[i] = qp.lower[i];
      state[i] = VarState::AtLower;
    } else if (x[i] >= qp.upper[i]) {
      x[i] = qp.upper[i];
      state[i] = VarState::AtUpper;
    }
  }
  if (m > 0) {
    const double viol = (qp.ineq * x - qp.ineq_rhs).maxCoeff();
    if (viol > ftol * (1.0 + qp.ineq_rhs.cwiseAbs().maxCoeff()))
      throw SolverError("QP: start point violates inequality constraints by " + std::to_string(viol));
  }

  std::vector<Index> work;  // active general inequalities
  std::vector<char> in_work(static_cast<std::size_t>(m), 0);
  const int max_iter = settings_.max_iterations > 0 ? settings_.max_iterations : static_cast<int>(20 * (n + m) + 100);

  VectorXd lambda;
  VectorXd p(n);
  bool at_minimizer = false;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    std::vector<Index> free;
    free.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
      if (state[i] == VarState::Free) free.push_back(i);
    const Index nf = static_cast<Index>(free.size());
    const Index nw = static_cast<Index>(work.size());
    const VectorXd grad = h * x + qp.gradient;

    // Equality-constrained subproblem on the free variables.
    p.setZero();
    lambda = VectorXd::Zero(nw);
    if (nf > 0) {
      MatrixXd k(nf, nf);
      VectorXd gf(nf);
      for (Index a = 0; a < nf; ++a) {
        gf[a] = grad[free[a]];
        for (Index b = 0; b < nf; ++b) k(a, b) = h(free[a], free[b]);
      }
      Eigen::LLT<MatrixXd> llt(k);
      if (llt.info() != Eigen::Success) throw SolverError("QP: reduced Hessian not positive definite");
      VectorXd y = llt.solve(gf);
      VectorXd pf = -y;
      if (nw > 0) {
        MatrixXd cw(nw, nf);
        for (Index r = 0; r < nw; ++r)
          for (Index a = 0; a < nf; ++a) cw(r, a) = qp.ineq(work[r], free[a]);
        const MatrixXd z = llt.solve(cw.transpose());
        const MatrixXd s = cw * z;
        Eigen::LDLT<MatrixXd> ldlt(s);
        lambda = ldlt.solve(-cw * y);
        pf -= z * lambda;
      }
      for (Index a = 0; a < nf; ++a) p[free[a]] = pf[a];
    } else if (nw > 0) {
      // every variable fixed: general multipliers cannot act, keep them at zero
      lambda.setZero();
    }

    const double pnorm = p.cwiseAbs().maxCoeff();
    const double xscale = 1.0 + x.cwiseAbs().maxCoeff();
    if (at_minimizer || pnorm <= 1e-14 * xscale) {
      if (at_minimizer && pnorm <= 1e-6 * xscale) {
        // polish: absorb the residual Newton step when it stays feasible
        bool ok = true;
        for (Index a = 0; a < nf && ok; ++a) {
          const Index i = free[a];
          ok = x[i] + p[i] >= qp.lower[i] - ftol && x[i] + p[i] <= qp.upper[i] + ftol;
        }
        if (ok) x += p;
      }
      // Multiplier sign check.
      VectorXd r = h * x + qp.gradient;
      for (Index w = 0; w < nw; ++w) r += lambda[w] * qp.ineq.row(work[w]).transpose();
      const double scale = std::max({1e-300, qp.gradient.cwiseAbs().maxCoeff(), (h * x).cwiseAbs().maxCoeff()});
      const double mtol = 1e-11 * scale;
      double worst = -mtol;
      Index drop_var = -1, drop_row = -1;
      for (Index w = 0; w < nw; ++w)
        if (lambda[w] < worst) {
          worst = lambda[w];
          drop_row = w;
          drop_var = -1;
        }
      for (Index i = 0; i < n; ++i) {
        double nu = 0.0;
        if (state[i] == VarState::AtLower) nu = r[i];
        else if (state[i] == VarState::AtUpper) nu = -r[i];
        else continue;
        if (nu < worst) {
          worst = nu;
          drop_var = i;
          drop_row = -1;
        }
      }
      if (drop_var < 0 && drop_row < 0) {
        QpResult res;
        res.x = x;
        res.iterations = iter + 1;
        res.ineq_multipliers = VectorXd::Zero(m);
        for (Index w = 0; w < nw; ++w) res.ineq_multipliers[work[w]] = std::max(0.0, lambda[w]);
        VectorXd rr = qp.hessian * x + qp.gradient + qp.ineq.transpose() * res.ineq_multipliers;
        res.bound_multipliers = VectorXd::Zero(n);
        for (Index i = 0; i < n; ++i) {
          if (state[i] == VarState::AtLower) res.bound_multipliers[i] = -std::max(0.0, rr[i]);
          else if (state[i] == VarState::AtUpper) res.bound_multipliers[i] = std::max(0.0, -rr[i]);
        }
        res.objective = qp.objective(x);
        return res;
      }
      if (drop_var >= 0) {
        state[drop_var] = VarState::Free;
      } else {
        in_work[work[drop_row]] = 0;
        work.erase(work.begin() + drop_row);
      }
      at_minimizer = false;
      continue;
    }

    // Ratio test against inactive constraints.
    double alpha = 1.0;
    Index block_var = -1, block_row = -1;
    bool block_upper = false;
    for (Index i = 0; i < n; ++i) {
      if (state[i] != VarState::Free || p[i] == 0.0) continue;
      if (p[i] < 0.0 && std::isfinite(qp.lower[i])) {
        const double t = std::max(0.0, (qp.lower[i] - x[i]) / p[i]);
        if (t < alpha) {
          alpha = t;
          block_var = i;
          block_upper = false;
          block_row = -1;
        }
      } else if (p[i] > 0.0 && std::isfinite(qp.upper[i])) {
        const double t = std::max(0.0, (qp.upper[i] - x[i]) / p[i]);
        if (t < alpha) {
          alpha = t;
          block_var = i;
          block_upper = true;
          block_row = -1;
        }
      }
    }
    if (m > 0) {
      const VectorXd cp = qp.ineq * p;
      const VectorXd slack = qp.ineq_rhs - qp.ineq * x;
      const double cscale = 1e-14 * (1.0 + pnorm);
      for (Index r = 0; r < m; ++r) {
        if (in_work[r] || cp[r] <= cscale * qp.ineq.row(r).cwiseAbs().maxCoeff()) continue;
        const double t = std::max(0.0, slack[r] / cp[r]);
        if (t < alpha) {
          alpha = t;
          block_row = r;
          block_var = -1;
        }
      }
    }
    x += alpha * p;
    if (block_var >= 0) {
      x[block_var] = block_upper ? qp.upper[block_var] : qp.lower[block_var];
      state[block_var] = block_upper ? VarState::AtUpper : VarState::AtLower;
      at_minimizer = false;
    } else if (block_row >= 0) {
      work.push_back(block_row);
      in_work[block_row] = 1;
      at_minimizer = false;
    } else {
      at_minimizer = true;
    }
  }
  std::ostringstream msg;
  msg << "QP: iteration limit " << max_iter << " reached (n=" << n << ", m=" << m << ", active rows=" << work.size()
      << ")";
  throw SolverError(msg.str());
}

double stationarity_residual(const QpProblem& qp, const VectorXd& x, const VectorXd& ineq_mult,
                             const VectorXd& bound_mult) {
  const VectorXd hx = qp.hessian * x;
  const VectorXd cmu = qp.ineq.rows() > 0 ? VectorXd(qp.ineq.transpose() * ineq_mult) : VectorXd::Zero(x.size());
  const VectorXd r = hx + qp.gradient + cmu + bound_mult;
  const double scale = std::max({hx.cwiseAbs().maxCoeff(), qp.gradient.cwiseAbs().maxCoeff(),
                                 cmu.cwiseAbs().maxCoeff(), bound_mult.cwiseAbs().maxCoeff()});
  if (scale == 0.0) return 0.0;
  return r.cwiseAbs().maxCoeff() / scale;
}

void write_qp_text(std::ostream& out, const QpProblem& qp) {
  const auto old = out.precision(17);
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, " ", "\n");
  out << qp.size() << ' ' << qp.ineq.rows() << '\n';
  out << "H\n" << qp.hessian.format(fmt) << '\n';
  out << "g\n" << qp.gradient.transpose().format(fmt) << '\n';
  out << "lower\n" << qp.lower.transpose().format(fmt) << '\n';
  out << "upper\n" << qp.upper.transpose().format(fmt) << '\n';
  out << "C\n";
  if (qp.ineq.rows() > 0) out << qp.ineq.format(fmt) << '\n';
  out << "d\n";
  if (qp.ineq.rows() > 0) out << qp.ineq_rhs.transpose().format(fmt) << '\n';
  out.precision(old);
}

}  // namespace ecocruise
