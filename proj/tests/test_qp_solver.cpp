#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "ecocruise/errors.hpp"
#include "ecocruise/nnls.hpp"
#include "ecocruise/qp_solver.hpp"
#include "ecocruise/random.hpp"

using namespace ecocruise;
using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

QpProblem box_qp(const MatrixXd& h, const VectorXd& g, double lo, double hi) {
  QpProblem qp;
  qp.hessian = h;
  qp.gradient = g;
  qp.lower = VectorXd::Constant(g.size(), lo);
  qp.upper = VectorXd::Constant(g.size(), hi);
  qp.ineq = MatrixXd::Zero(0, g.size());
  qp.ineq_rhs = VectorXd::Zero(0);
  return qp;
}

MatrixXd random_spd(Rng& rng, int n, double ridge) {
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1, 1);
  return a * a.transpose() + ridge * MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("unconstrained QP matches the linear solve") {
  Rng rng(1);
  const MatrixXd h = random_spd(rng, 6, 0.5);
  VectorXd g(6);
  for (int i = 0; i < 6; ++i) g[i] = rng.uniform(-1, 1);
  const auto qp = box_qp(h, g, -kInf, kInf);
  const auto res = ActiveSetQp().solve(qp, VectorXd::Zero(6));
  const VectorXd oracle = h.ldlt().solve(-g);
  CHECK((res.x - oracle).norm() < 1e-8);
  CHECK(stationarity_residual(qp, res.x, res.ineq_multipliers, res.bound_multipliers) < 1e-9);
}

TEST_CASE("box-constrained separable QP clips coordinatewise") {
  const MatrixXd h = VectorXd::LinSpaced(5, 1, 5).asDiagonal();
  VectorXd g(5);
  g << -3, 4, -20, 0.5, 10;
  const auto qp = box_qp(h, g, -1, 2);
  const auto res = ActiveSetQp().solve(qp, VectorXd::Zero(5));
  VectorXd expect(5);
  for (int i = 0; i < 5; ++i) expect[i] = std::clamp(-g[i] / h(i, i), -1.0, 2.0);
  CHECK((res.x - expect).norm() < 1e-10);
  // multiplier signs: nonpositive at lower bounds, nonnegative at upper bounds
  CHECK(res.bound_multipliers[0] == Approx(1.0).epsilon(1e-8));
  CHECK(res.bound_multipliers[1] == Approx(-2.0).epsilon(1e-8));
  CHECK(res.bound_multipliers[2] == Approx(14.0).epsilon(1e-8));
  CHECK(std::abs(res.bound_multipliers[3]) < 1e-12);
  CHECK(res.bound_multipliers[4] == Approx(-5.0).epsilon(1e-8));
}

TEST_CASE("projection onto a half-space") {
  // min 0.5||x - c||^2  s.t.  sum(x) <= 1
  VectorXd c(3);
  c << 1, 2, 0.5;
  QpProblem qp = box_qp(MatrixXd::Identity(3, 3), -c, -kInf, kInf);
  qp.ineq = MatrixXd::Ones(1, 3);
  qp.ineq_rhs = VectorXd::Ones(1);
  const auto res = ActiveSetQp().solve(qp, VectorXd::Zero(3));
  const VectorXd expect = c - VectorXd::Ones(3) * (c.sum() - 1) / 3.0;
  CHECK((res.x - expect).norm() < 1e-9);  // Tikhonov term biases the solution at the 1e-10 level
  CHECK(res.ineq_multipliers[0] == Approx((c.sum() - 1) / 3.0).epsilon(1e-10));
  CHECK(qp.max_violation(res.x) < 1e-12);
}

TEST_CASE("random QPs beat random feasible points") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(6)), m = 1 + static_cast<int>(rng.below(5));
    QpProblem qp = box_qp(random_spd(rng, n, trial % 3 == 0 ? 0.0 : 0.1), VectorXd::Zero(n), -1, 1);
    for (int i = 0; i < n; ++i) qp.gradient[i] = rng.uniform(-3, 3);
    qp.ineq.resize(m, n);
    for (int r = 0; r < m; ++r)
      for (int i = 0; i < n; ++i) qp.ineq(r, i) = rng.uniform(-1, 1);
    qp.ineq_rhs = VectorXd::Constant(m, 0.5);  // x = 0 is feasible
    const auto res = ActiveSetQp().solve(qp, VectorXd::Zero(n));
    REQUIRE(qp.max_violation(res.x) < 1e-9);
    CHECK(stationarity_residual(qp, res.x, res.ineq_multipliers, res.bound_multipliers) < 1e-8);
    CHECK(res.ineq_multipliers.minCoeff() >= 0);
    int tried = 0;
    while (tried < 300) {
      VectorXd x(n);
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(-1, 1);
      if (qp.max_violation(x) > 0) continue;
      ++tried;
      CHECK(qp.objective(res.x) <= qp.objective(x) + 1e-12);
    }
  }
}

TEST_CASE("QP solver input checks") {
  QpProblem qp = box_qp(MatrixXd::Identity(2, 2), VectorXd::Zero(2), -1, 1);
  qp.ineq = MatrixXd::Ones(1, 2);
  qp.ineq_rhs = VectorXd::Constant(1, -5);
  CHECK_THROWS_AS(ActiveSetQp().solve(qp, VectorXd::Zero(2)), SolverError);
  CHECK_THROWS(ActiveSetQp().solve(qp, VectorXd::Zero(3)));
}

TEST_CASE("solver is deterministic") {
  Rng rng(5);
  QpProblem qp = box_qp(random_spd(rng, 8, 0.01), VectorXd::Zero(8), -0.3, 0.3);
  for (int i = 0; i < 8; ++i) qp.gradient[i] = rng.uniform(-1, 1);
  const auto a = ActiveSetQp().solve(qp, VectorXd::Zero(8));
  const auto b = ActiveSetQp().solve(qp, VectorXd::Zero(8));
  CHECK(a.x == b.x);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("QP text dump") {
  QpProblem qp = box_qp(MatrixXd::Identity(2, 2), VectorXd::Ones(2), 0, kInf);
  qp.ineq = MatrixXd::Ones(1, 2);
  qp.ineq_rhs = VectorXd::Ones(1);
  std::ostringstream out;
  write_qp_text(out, qp);
  const auto s = out.str();
  CHECK(s.rfind("2 1\n", 0) == 0);
  for (const char* tag : {"H\n", "g\n", "lower\n", "upper\n", "C\n", "d\n"}) CHECK(s.find(tag) != std::string::npos);
  CHECK(s.find("inf") != std::string::npos);
}

TEST_CASE("bounded least squares") {
  SECTION("inactive bounds reduce to ordinary least squares") {
    Rng rng(3);
    MatrixXd a(10, 3);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 3; ++j) a(i, j) = rng.uniform(-1, 1);
    VectorXd xt(3);
    xt << 0.5, 1.5, 2.0;
    const VectorXd b = a * xt;
    const auto r = bounded_least_squares(a, b, {true, true, true});
    CHECK((r.x - xt).norm() < 1e-10);
    CHECK(r.residual_norm < 1e-10);
  }
  SECTION("binding bound") {
    MatrixXd a = MatrixXd::Identity(2, 2);
    VectorXd b(2);
    b << -1, 2;
    const auto r = bounded_least_squares(a, b, {true, false});
    CHECK(r.x[0] == 0.0);
    CHECK(r.x[1] == Approx(2.0));
    CHECK(r.residual_norm == Approx(1.0));
  }
  SECTION("optimality conditions on random problems") {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
      const int m = 12, n = 6;
      MatrixXd a(m, n);
      VectorXd b(m);
      for (int i = 0; i < m; ++i) {
        b[i] = rng.uniform(-2, 2);
        for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1, 1) * (j == 2 ? 1e3 : 1.0);
      }
      std::vector<bool> nn(n);
      for (int j = 0; j < n; ++j) nn[j] = rng.uniform() < 0.6;
      const auto r = bounded_least_squares(a, b, nn);
      const VectorXd grad = a.transpose() * (a * r.x - b);
      for (int j = 0; j < n; ++j) {
        const double scale = a.col(j).norm() * (1.0 + b.norm());
        if (nn[j]) REQUIRE(r.x[j] >= 0.0);
        if (!nn[j] || r.x[j] > 0) CHECK(std::abs(grad[j]) <= 1e-9 * scale);
        else CHECK(grad[j] >= -1e-9 * scale);
      }
      CHECK(r.residual_norm == Approx((a * r.x - b).norm()).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(bounded_least_squares(MatrixXd::Identity(2, 2), VectorXd::Ones(3), {true, true}),
                  std::invalid_argument);
}
