#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ecocruise/csv.hpp"
#include "ecocruise/lmpc.hpp"
#include "ecocruise/road_profile.hpp"
#include "ecocruise/trajectory.hpp"
#include "ecocruise/vehicle_model.hpp"

namespace ecocruise {

/// Horizon segment in deviation variables: N+1 velocities, N torques, N grades.
struct KktWindow {
  Eigen::VectorXd v;
  Eigen::VectorXd te;
  Eigen::VectorXd grade;

  std::size_t horizon() const { return static_cast<std::size_t>(te.size()); }
};

/// Velocity and torque limits of `p` shifted by the linearization point.
MpcBounds deviation_bounds(const LinearizedModel& lin, const VehicleParams& p);

/// Inequality layout for a horizon N (0-based): velocity-min rows 0..N-1 for
/// V(1..N), velocity-max N..2N-1, torque-min 2N..3N-1, torque-max 3N..4N-1.
enum class BoundBlock { VelocityMin = 0, VelocityMax = 1, TorqueMin = 2, TorqueMax = 3 };

/// Indices of bounds met within `tol`, measured as a fraction of the bound range.
std::vector<std::size_t> detect_active(const KktWindow& w, const MpcBounds& bounds, double tol = 1e-6);

/// Stationarity of the full-space problem in x = [V(0..N), Te(0..N-1)] written as
/// Q Y = W, Y = [gamma, p(0..N), q(active...)].
struct KktSystem {
  Eigen::MatrixXd q_mat;
  Eigen::VectorXd w_vec;
  Eigen::VectorXd r_weights;            // one per row
  std::vector<std::size_t> active_set;  // inequality index of each q column, in order
  std::size_t horizon = 0;

  std::size_t gamma_col() const { return 0; }
  std::size_t p_col(std::size_t i) const { return 1 + i; }
  std::size_t q_col(std::size_t j) const { return horizon + 2 + j; }
};

/// Row weights decay linearly from 1 at the first velocity/torque entry to 0 at the last.
Eigen::VectorXd kkt_row_weights(std::size_t horizon);

/// Throws std::invalid_argument on inconsistent window dimensions or
/// out-of-range active indices. `fuel_scale` <= 0 selects lin.time_rate_scale().
KktSystem build_kkt(const KktWindow& w, const LinearizedModel& lin, const std::vector<std::size_t>& active_set,
                    double v_ref_dev = 0.0, double fuel_scale = 0.0);

enum GammaFlag : std::uint32_t {
  kGammaOk = 0,
  kGammaDegenerate = 1,  // gamma column dependent on the weighted multiplier columns; gamma not unique
  kGammaCapped = 2,      // recovered value above the clamp and capped
  kGammaFailed = 4,      // recovery threw; gamma set to 0
};

inline constexpr double kGammaCap = 0.05;

struct GammaRecovery {
  double gamma = 0.0;      // raw minimizer component, >= 0
  double residual = 0.0;   // ||sqrt(R)(QY - W)||_2
  Eigen::VectorXd y;       // full unknown vector
  std::uint32_t flags = kGammaOk;
};

/// Weighted least squares with gamma >= 0 and q >= 0, p free.
GammaRecovery recover_gamma(const KktSystem& kkt);

/// Per-step recovered weights; gamma is clamped to [0, kGammaCap].
struct GammaSeries {
  double ds = 30.0;
  std::vector<std::size_t> positions;
  std::vector<double> gamma;
  std::vector<double> residuals;
  std::vector<std::uint32_t> flags;

  std::size_t size() const { return positions.size(); }
};

/// Horizon window of an absolute trajectory starting at step k, shifted into
/// deviation variables. Past the road end the final speed is held with its
/// flat-road equilibrium torque and zero grade.
KktWindow trajectory_window(const Trajectory& traj, const RoadProfile& road, const LinearizedModel& lin,
                            const VehicleParams& p, std::size_t k, std::size_t horizon);

/// Recovers gamma for every step of the road. Independent steps are spread
/// over `threads` workers (0: hardware concurrency); output order is by step.
GammaSeries gamma_series(const Trajectory& traj, const RoadProfile& road, const LinearizedModel& lin,
                         const VehicleParams& p, std::size_t horizon = kMpcHorizon, unsigned threads = 0);

/// `index,position_m,gamma,residual,flags` with flags as the integer bit set.
void write_gamma_csv(std::ostream& out, const GammaSeries& s, const Metadata& meta = {});
GammaSeries read_gamma_csv(std::istream& in);

}  // namespace ecocruise
