#include "ecocruise/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecocruise {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

/// Unconstrained least squares restricted to the columns in `passive`.
VectorXd solve_passive(const MatrixXd& a, const VectorXd& b, const std::vector<char>& passive) {
  std::vector<Index> cols;
  for (Index j = 0; j < a.cols(); ++j)
    if (passive[j]) cols.push_back(j);
  VectorXd z = VectorXd::Zero(a.cols());
  if (cols.empty()) return z;
  MatrixXd sub(a.rows(), static_cast<Index>(cols.size()));
  for (Index c = 0; c < sub.cols(); ++c) sub.col(c) = a.col(cols[c]);
  const VectorXd zs = sub.colPivHouseholderQr().solve(b);
  for (Index c = 0; c < sub.cols(); ++c) z[cols[c]] = zs[c];
  return z;
}

}  // namespace

BoundedLsResult bounded_least_squares(const MatrixXd& a_in, const VectorXd& b, const std::vector<bool>& nonneg) {
  const Index n = a_in.cols();
  if (a_in.rows() != b.size() || static_cast<Index>(nonneg.size()) != n)
    throw std::invalid_argument("bounded_least_squares: dimension mismatch");

  VectorXd scale(n);
  MatrixXd a = a_in;
  for (Index j = 0; j < n; ++j) {
    const double c = a.col(j).norm();
    scale[j] = c > 0.0 ? c : 1.0;
    a.col(j) /= scale[j];
  }

  std::vector<char> passive(static_cast<std::size_t>(n), 0);
  for (Index j = 0; j < n; ++j) passive[j] = nonneg[j] ? 0 : 1;
  VectorXd x = solve_passive(a, b, passive);

  const double tol = 1e-13 * (1.0 + b.norm()) * std::sqrt(static_cast<double>(a.rows()));
  const int max_outer = static_cast<int>(3 * n + 10);
  int iter = 0;
  std::vector<char> skip(static_cast<std::size_t>(n), 0);
  for (; iter < max_outer; ++iter) {
    const VectorXd w = a.transpose() * (b - a * x);
    Index t = -1;
    double best = tol;
    for (Index j = 0; j < n; ++j)
      if (nonneg[j] && !passive[j] && !skip[j] && w[j] > best) {
        best = w[j];
        t = j;
      }
    if (t < 0) break;
    passive[t] = 1;

    VectorXd z = solve_passive(a, b, passive);
    if (z[t] <= 0.0) {
      // entering column cannot move off zero: numerical tie, exclude it this round
      passive[t] = 0;
      skip[t] = 1;
      continue;
    }
    std::fill(skip.begin(), skip.end(), 0);
    for (int inner = 0; inner < 3 * n + 10; ++inner) {
      double alpha = 1.0;
      bool blocked = false;
      for (Index j = 0; j < n; ++j)
        if (nonneg[j] && passive[j] && z[j] <= 0.0) {
          const double denom = x[j] - z[j];
          const double step = denom > 0.0 ? x[j] / denom : 0.0;
          if (!blocked || step < alpha) alpha = step;
          blocked = true;
        }
      if (!blocked) break;
      x += alpha * (z - x);
      for (Index j = 0; j < n; ++j)
        if (nonneg[j] && passive[j] && x[j] <= 1e-15 * (1.0 + std::abs(z[j]))) {
          passive[j] = 0;
          x[j] = 0.0;
        }
      z = solve_passive(a, b, passive);
    }
    x = z;
    for (Index j = 0; j < n; ++j)
      if (!passive[j]) x[j] = 0.0;
  }

  BoundedLsResult res;
  res.iterations = iter;
  res.x = x.cwiseQuotient(scale);
  for (Index j = 0; j < n; ++j)
    if (nonneg[j]) res.x[j] = std::max(0.0, res.x[j]);
  res.residual_norm = (a_in * res.x - b).norm();
  return res;
}

}  // namespace ecocruise
