#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "ecocruise/csv.hpp"
#include "ecocruise/gamma_net.hpp"
#include "ecocruise/inverse_opt.hpp"
#include "ecocruise/road_profile.hpp"
#include "ecocruise/trajectory.hpp"
#include "ecocruise/vehicle_model.hpp"

namespace ecocruise {

enum class ControllerKind { AtMpc, PtMpc, FixedLmpc, Pi, DpReplay };

std::string to_string(ControllerKind k);
/// Accepts the labels produced by to_string plus `at`, `pt`, `fixed`, `lmpc`, `pi`, `dp`.
ControllerKind parse_controller(const std::string& s);

struct ControllerSpec {
  ControllerKind kind = ControllerKind::FixedLmpc;
  double gamma = 0.003;  // FixedLmpc only
  double kp = 300.0;     // Pi only, N·m per m/s
  double ki = 30.0;      // Pi only, N·m per m (speed error integrated over time)
  double v_ref = 30.0;
  double v_i = 30.0;
  std::size_t horizon = kMpcHorizon;
  double soft_weight = 1e3;

  /// Throws std::invalid_argument for gamma < 0, non-positive PI gains or horizon 0.
  void validate() const;
};

/// Read-only inputs some controllers need; unused entries may stay null.
struct SimArtifacts {
  const MlpModel* model = nullptr;             // AtMpc
  const GammaSeries* series = nullptr;         // PtMpc
  const std::vector<double>* dp_torque = nullptr;  // DpReplay
};

struct SimMetrics {
  double total_fuel_kg = 0.0;
  double distance_km = 0.0;
  double avg_velocity_mps = 0.0;         // distance over elapsed time
  double fuel_economy_km_per_kg = 0.0;   // infinite when no fuel was burned
  bool valid = false;                    // false for empty or zero-fuel trajectories
};

/// Metrics over steps whose start position is at least `exclude_m`.
SimMetrics metrics(const Trajectory& t, double exclude_m = 0.0);

struct SimResult {
  ControllerSpec spec;
  Trajectory trajectory;
  SimMetrics raw;
  SimMetrics excluded;                // first kTransientM metres dropped
  std::vector<double> gamma_used;     // per step, MPC controllers only
  std::vector<double> step_runtimes;  // seconds per controller evaluation

  double median_step_s() const;
};

inline constexpr double kTransientM = 500.0;

/// Closed-loop run on the nonlinear plant, one road step at a time.
/// Throws SimulationError with the position when the plant fails and
/// std::invalid_argument when a required artifact is missing.
SimResult run(const ControllerSpec& spec, const RoadProfile& road, const VehicleParams& p, const SimArtifacts& art);

struct SweepRow {
  std::string controller;
  double gamma = 0.0;  // ladder value, or mean applied gamma for AT/PT, nan otherwise
  double avg_velocity_mps = 0.0;
  double fuel_economy_km_per_kg = 0.0;
  double total_fuel_kg = 0.0;
  double median_step_s = 0.0;
  std::string error;  // non-empty when the run failed
};

/// FixedLmpc at every gamma of the ascending ladder, then AtMpc, PtMpc, Pi and
/// DpReplay. Runs execute on up to `threads` workers (0: hardware concurrency);
/// failures are recorded per row.
std::vector<SweepRow> pareto_sweep(const RoadProfile& road, const VehicleParams& p,
                                   const std::vector<double>& gamma_ladder, const SimArtifacts& art,
                                   const ControllerSpec& base, unsigned threads = 0,
                                   std::vector<SimResult>* results = nullptr);

/// Relative fuel-economy distance of `point` from the piecewise-linear front
/// through the successful FixedLmpc rows, searched over average velocities
/// within `v_tol` of the point. Returns +inf when the window misses the front.
double front_gap(const std::vector<SweepRow>& rows, const SweepRow& point, double v_tol = 0.5);

/// `n` ascending values from lo to hi, evenly spaced.
std::vector<double> linear_ladder(double lo, double hi, std::size_t n);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, const Metadata& meta = {});
std::vector<SweepRow> read_sweep_csv(std::istream& in);

/// Scatter data for plotting: `series,avg_velocity_mps,fuel_economy_km_per_kg`.
void write_pareto_plot_csv(std::ostream& out, const std::vector<SweepRow>& rows, const Metadata& meta = {});

}  // namespace ecocruise
