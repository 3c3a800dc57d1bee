#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ecocruise {

struct BoundedLsResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;  // ||A x - b||_2
  int iterations = 0;
};

/// min ||A x - b||_2 subject to x_i >= 0 wherever nonneg[i] is true; the
/// other entries are free. Lawson-Hanson active-set iteration on
/// column-normalized A; nonnegative entries of the result are exactly >= 0.
BoundedLsResult bounded_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                      const std::vector<bool>& nonneg);

}  // namespace ecocruise
