#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ecocruise/grid_dp.hpp"
#include "ecocruise/road_profile.hpp"
#include "ecocruise/trajectory.hpp"
#include "ecocruise/vehicle_model.hpp"

namespace ecocruise {

/// Grid and bound settings for the whole-road fuel minimization.
struct DpConfig {
  UniformGrid v_grid;
  UniformGrid vavg_grid;
  UniformGrid te_grid;
  double vavg_min = 0.0;
  double vavg_max = 0.0;
  double v_ref = 30.0;
  double v_i = 30.0;
  double v_final_min = 0.0;      // terminal speed floor; 0 leaves the final speed free
  double infeasible_cost = 1e4;  // kg
  bool retain_tables = false;

  /// 0.25 m/s speed grid over [v_min, v_max], 0.1 m/s average-speed grid over
  /// [0.93, 1.07]*v_ref, 10 N·m torque grid over [te_min, te_max].
  static DpConfig defaults(const VehicleParams& p, double v_ref, double v_i);

  /// Throws std::invalid_argument when a grid or bound is inconsistent with `p`.
  void validate(const VehicleParams& p) const;
};

struct DpSolution {
  Trajectory trajectory;
  double total_fuel = 0.0;      // kg, realized by the rollout through the nonlinear plant
  double value_estimate = 0.0;  // interpolated cost-to-go at the initial state
  std::optional<std::vector<ValueTable2d>> cost_to_go;
};

/// Stage model of the space-domain problem: states (V, V_avg), input index into te_grid.
class VehicleDpModel {
 public:
  VehicleDpModel(const VehicleParams& p, std::span<const double> grade, const DpConfig& cfg);

  std::size_t stages() const { return grade_.size(); }
  std::size_t inputs() const { return te_.size(); }
  void expand(std::size_t k, double v, double vavg, std::span<StepOutcome> out) const;
  double terminal_cost(double v, double vavg) const;
  double torque(std::size_t u) const { return te_[u]; }

 private:
  VehicleParams p_;
  std::vector<double> grade_;
  std::vector<double> te_;
  double vavg_min_, vavg_max_, v_ref_, v_final_min_, penalty_;
};

/// Global minimum-fuel torque trajectory over the whole road.
/// Throws InfeasibleError naming the step when the rollout gets trapped.
DpSolution solve_dp(const VehicleParams& p, const RoadProfile& road, const DpConfig& cfg);

/// Open-loop simulation of a torque sequence through the nonlinear plant.
/// Throws SimulationError when the velocity leaves (0, inf).
Trajectory replay(const VehicleParams& p, const RoadProfile& road, std::span<const double> torque, double v_i);

}  // namespace ecocruise
