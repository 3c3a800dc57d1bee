#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ecocruise/errors.hpp"

namespace ecocruise {

/// Uniform 1-D grid lo, lo+step, ..., lo+(n-1)*step.
struct UniformGrid {
  double lo = 0.0;
  double step = 1.0;
  std::size_t n = 1;

  /// Grid from lo to hi (inclusive, hi snapped to the nearest node).
  static UniformGrid span(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw std::invalid_argument("grid: need step > 0 and hi >= lo");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    return {lo, step, n};
  }

  double at(std::size_t i) const { return lo + step * static_cast<double>(i); }
  double hi() const { return at(n - 1); }
  bool contains(double x, double tol = 1e-9) const { return x >= lo - tol && x <= hi() + tol; }

  /// Cell index and fractional weight for x clamped into the grid. Positions
  /// within 1e-9 of a node snap onto it so node-aligned lookups are exact.
  void locate(double x, std::size_t& i0, double& t) const {
    if (n == 1) {
      i0 = 0;
      t = 0.0;
      return;
    }
    double u = (x - lo) / step;
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    const double r = std::round(u);
    if (std::abs(u - r) < 1e-9) u = r;
    auto i = static_cast<std::size_t>(u);
    if (i >= n - 1) i = n - 2;
    i0 = i;
    t = u - static_cast<double>(i);
  }
};

/// Values on a 2-D tensor grid with bilinear interpolation.
class ValueTable2d {
 public:
  ValueTable2d() = default;
  ValueTable2d(UniformGrid g1, UniformGrid g2, double fill = 0.0)
      : g1_(g1), g2_(g2), data_(g1.n * g2.n, fill) {}

  double& at(std::size_t i, std::size_t j) { return data_[i * g2_.n + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * g2_.n + j]; }

  double interp(double x1, double x2) const {
    std::size_t i, j;
    double t, u;
    g1_.locate(x1, i, t);
    g2_.locate(x2, j, u);
    const std::size_t i1 = g1_.n > 1 ? i + 1 : i;
    const std::size_t j1 = g2_.n > 1 ? j + 1 : j;
    auto lerp = [](double a, double b, double w) { return w == 0.0 ? a : (w == 1.0 ? b : a + w * (b - a)); };
    return lerp(lerp(at(i, j), at(i, j1), u), lerp(at(i1, j), at(i1, j1), u), t);
  }

  const UniformGrid& grid1() const { return g1_; }
  const UniformGrid& grid2() const { return g2_; }

 private:
  UniformGrid g1_, g2_;
  std::vector<double> data_;
};

/// Result of applying one input at one stage.
struct StepOutcome {
  double cost = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  bool feasible = true;
};

/// A finite-horizon problem on two continuous states and a finite input set.
/// `expand` fills one outcome per input index.
template <typename M>
concept StageModel = requires(const M& m, std::size_t k, double x1, double x2, std::span<StepOutcome> out) {
  { m.stages() } -> std::convertible_to<std::size_t>;
  { m.inputs() } -> std::convertible_to<std::size_t>;
  m.expand(k, x1, x2, out);
  { m.terminal_cost(x1, x2) } -> std::convertible_to<double>;
};

struct GridDpPath {
  std::vector<std::size_t> inputs;
  std::vector<double> x1, x2;  // stages+1 states
  double cost = 0.0;           // realized stage costs + terminal cost, without penalties
};

/// Backward value iteration on the state grid with bilinear interpolation of
/// the cost-to-go, followed by a greedy forward rollout from a continuous
/// initial state. Infeasible transitions add `infeasible_cost`.
template <StageModel M>
class GridDp {
 public:
  GridDp(UniformGrid g1, UniformGrid g2, double infeasible_cost)
      : g1_(g1), g2_(g2), infeasible_cost_(infeasible_cost) {}

  void backward(const M& model) {
    const std::size_t stages = model.stages();
    std::vector<StepOutcome> out(model.inputs());
    tables_.assign(stages + 1, ValueTable2d(g1_, g2_));
    auto& term = tables_[stages];
    for (std::size_t i = 0; i < g1_.n; ++i)
      for (std::size_t j = 0; j < g2_.n; ++j) term.at(i, j) = model.terminal_cost(g1_.at(i), g2_.at(j));

    for (std::size_t k = stages; k-- > 0;) {
      const auto& next = tables_[k + 1];
      auto& cur = tables_[k];
      for (std::size_t i = 0; i < g1_.n; ++i)
        for (std::size_t j = 0; j < g2_.n; ++j) {
          model.expand(k, g1_.at(i), g2_.at(j), out);
          double best = std::numeric_limits<double>::infinity();
          for (const auto& o : out) best = std::min(best, total(o, next));
          cur.at(i, j) = best;
        }
    }
  }

  /// Throws InfeasibleError when every input at some stage is infeasible, or
  /// when the terminal state is penalized.
  GridDpPath rollout(const M& model, double x1, double x2) const {
    const std::size_t stages = model.stages();
    if (tables_.size() != stages + 1) throw std::logic_error("GridDp::rollout before backward");
    std::vector<StepOutcome> out(model.inputs());
    GridDpPath path;
    path.x1.push_back(x1);
    path.x2.push_back(x2);
    for (std::size_t k = 0; k < stages; ++k) {
      model.expand(k, x1, x2, out);
      std::size_t best_u = out.size();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t u = 0; u < out.size(); ++u) {
        if (!out[u].feasible) continue;
        const double v = total(out[u], tables_[k + 1]);
        if (v < best) {
          best = v;
          best_u = u;
        }
      }
      if (best_u == out.size()) throw InfeasibleError("DP rollout: no feasible input", k);
      path.inputs.push_back(best_u);
      path.cost += out[best_u].cost;
      x1 = out[best_u].x1;
      x2 = out[best_u].x2;
      path.x1.push_back(x1);
      path.x2.push_back(x2);
    }
    const double term = model.terminal_cost(x1, x2);
    if (term >= infeasible_cost_) throw InfeasibleError("DP rollout: terminal constraint violated", stages);
    path.cost += term;
    return path;
  }

  const ValueTable2d& cost_to_go(std::size_t k) const { return tables_.at(k); }
  std::vector<ValueTable2d> release_tables() { return std::move(tables_); }
  double infeasible_cost() const { return infeasible_cost_; }

 private:
  double total(const StepOutcome& o, const ValueTable2d& next) const {
    return o.cost + (o.feasible ? 0.0 : infeasible_cost_) + next.interp(o.x1, o.x2);
  }

  UniformGrid g1_, g2_;
  double infeasible_cost_;
  std::vector<ValueTable2d> tables_;
};

}  // namespace ecocruise
