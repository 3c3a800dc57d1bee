#include "ecocruise/dp_solver.hpp"

#include <algorithm>

#include <cmath>
#include <stdexcept>

#include "ecocruise/errors.hpp"

namespace ecocruise {

DpConfig DpConfig::defaults(const VehicleParams& p, double v_ref, double v_i) {
  DpConfig c;
  c.v_ref = v_ref;
  c.v_i = v_i;
  c.vavg_min = 0.93 * v_ref;
  c.vavg_max = 1.07 * v_ref;
  c.v_grid = UniformGrid::span(p.v_min, p.v_max, 0.25);
  // anchor the average-speed grid on v_ref so the terminal bound is a node
  const double step = 0.1;
  const auto below = static_cast<std::size_t>(std::floor((v_ref - c.vavg_min) / step + 1e-9));
  const auto above = static_cast<std::size_t>(std::floor((c.vavg_max - v_ref) / step + 1e-9));
  c.vavg_grid = UniformGrid{v_ref - step * static_cast<double>(below), step, below + above + 1};
  c.te_grid = UniformGrid::span(p.te_min, p.te_max, 10.0);
  return c;
}

void DpConfig::validate(const VehicleParams& p) const {
  p.validate();
  for (const auto* g : {&v_grid, &vavg_grid, &te_grid})
    if (!(g->step > 0.0) || g->n < 2) throw std::invalid_argument("DP grids need >= 2 increasing points");
  if (v_grid.lo < p.v_min - 1e-9 || v_grid.hi() > p.v_max + 1e-9)
    throw std::invalid_argument("DP velocity grid must lie within [v_min, v_max]");
  if (te_grid.lo < p.te_min - 1e-9 || te_grid.hi() > p.te_max + 1e-9)
    throw std::invalid_argument("DP torque grid must lie within [te_min, te_max]");
  if (!(vavg_min < vavg_max)) throw std::invalid_argument("DP average-speed bounds inverted");
  if (v_ref < vavg_min || v_ref > vavg_max) throw std::invalid_argument("v_ref outside average-speed bounds");
  if (!v_grid.contains(v_i) || v_i < vavg_min || v_i > vavg_max)
    throw std::invalid_argument("initial speed outside the state bounds");
  if (!(infeasible_cost > 0.0)) throw std::invalid_argument("infeasible_cost must be positive");
  if (!(v_final_min >= 0.0) || v_final_min > p.v_max) throw std::invalid_argument("terminal speed floor out of range");
}

VehicleDpModel::VehicleDpModel(const VehicleParams& p, std::span<const double> grade, const DpConfig& cfg)
    : p_(p),
      grade_(grade.begin(), grade.end()),
      vavg_min_(cfg.vavg_min),
      vavg_max_(cfg.vavg_max),
      v_ref_(cfg.v_ref),
      v_final_min_(cfg.v_final_min),
      penalty_(cfg.infeasible_cost) {
  te_.resize(cfg.te_grid.n);
  for (std::size_t u = 0; u < te_.size(); ++u) te_[u] = cfg.te_grid.at(u);
}

void VehicleDpModel::expand(std::size_t k, double v, double vavg, std::span<StepOutcome> out) const {
  constexpr double tol = 1e-9;
  const auto& a = p_.alpha;
  const auto& l = p_.lambda;
  const double ds = p_.ds;
  const double inv_v = 1.0 / v;
  const double resist = a[1] * grade_[k] + a[2] + a[3] * v + a[4] * v * v;
  const double s_k = ds * static_cast<double>(k);
  const double vavg_next = vavg_update(s_k, vavg, v, ds);
  const bool vavg_ok = vavg_next >= vavg_min_ - tol && vavg_next <= vavg_max_ + tol;
  const double fuel_v = (l[0] * inv_v + l[1] + l[5] * v) * ds / 3600.0;
  for (std::size_t u = 0; u < te_.size(); ++u) {
    const double te = te_[u];
    const double v_next = v + ds * (a[0] * te - resist) * inv_v;
    auto& o = out[u];
    o.cost = fuel_v + ((l[2] + l[3] * te) * te * inv_v + l[4] * te) * ds / 3600.0;
    o.x1 = v_next;
    o.x2 = vavg_next;
    o.feasible = vavg_ok && v_next >= p_.v_min - tol && v_next <= p_.v_max + tol;
  }
}

double VehicleDpModel::terminal_cost(double v, double vavg) const {
  constexpr double tol = 1e-9;
  const bool ok = v >= std::max(p_.v_min, v_final_min_) - tol && v <= p_.v_max + tol && vavg >= v_ref_ - tol && vavg <= vavg_max_ + tol;
  return ok ? 0.0 : penalty_;
}

DpSolution solve_dp(const VehicleParams& p, const RoadProfile& road, const DpConfig& cfg) {
  cfg.validate(p);
  if (road.steps() < 2) throw std::invalid_argument("DP needs a road of at least 2 steps");
  if (std::abs(road.ds - p.ds) > 1e-9) throw std::invalid_argument("road spacing differs from vehicle ds");

  VehicleDpModel model(p, road.grade, cfg);
  GridDp<VehicleDpModel> dp(cfg.v_grid, cfg.vavg_grid, cfg.infeasible_cost);
  dp.backward(model);
  const auto path = dp.rollout(model, cfg.v_i, cfg.v_i);

  DpSolution sol;
  sol.value_estimate = dp.cost_to_go(0).interp(cfg.v_i, cfg.v_i);
  std::vector<double> torque(path.inputs.size());
  for (std::size_t k = 0; k < torque.size(); ++k) torque[k] = model.torque(path.inputs[k]);
  sol.trajectory = replay(p, road, torque, cfg.v_i);
  sol.total_fuel = sol.trajectory.total_fuel_kg();
  if (cfg.retain_tables) sol.cost_to_go = dp.release_tables();
  return sol;
}

Trajectory replay(const VehicleParams& p, const RoadProfile& road, std::span<const double> torque, double v_i) {
  if (torque.size() != road.steps()) throw std::invalid_argument("replay: torque length must equal road steps");
  if (!(v_i > 0.0)) throw SimulationError("replay: initial speed must be positive", 0.0);
  Trajectory t;
  t.ds = p.ds;
  const std::size_t n = torque.size();
  t.position_m.reserve(n + 1);
  t.v_mps.reserve(n + 1);
  t.vavg_mps.reserve(n + 1);
  t.position_m.push_back(0.0);
  t.v_mps.push_back(v_i);
  t.vavg_mps.push_back(v_i);
  for (std::size_t k = 0; k < n; ++k) {
    const double v = t.v_mps.back();
    const double s = p.ds * static_cast<double>(k);
    double next;
    try {
      next = space_step(p, v, torque[k], road.grade[k]);
    } catch (const StepFailure& e) {
      throw SimulationError(e.what(), s);
    }
    t.te_nm.push_back(torque[k]);
    t.fuel_kg_per_m.push_back(fuel_rate_space(p, v, torque[k]));
    t.vavg_mps.push_back(vavg_update(s, t.vavg_mps.back(), v, p.ds));
    t.v_mps.push_back(next);
    t.position_m.push_back(s + p.ds);
  }
  return t;
}

}  // namespace ecocruise
