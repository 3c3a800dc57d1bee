#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>

namespace ecocruise {

/// Longitudinal model coefficients for the cruising vehicle in its top gear.
///
/// `alpha` are the acceleration coefficients
///   a = alpha0*Te - alpha1*phi - alpha2 - alpha3*V - alpha4*V^2
/// and `lambda` the fuel-flow polynomial coefficients (kg/h)
///   mdot = l0 + l1*V + l2*Te + l3*Te^2 + l4*Te*V + l5*V^2.
struct VehicleParams {
  std::array<double, 5> alpha{0.00315, 9.81, 0.05536, 0.00229, 2.8272e-4};
  std::array<double, 6> lambda{0.5352, -0.03021, 0.00062, 5.503e-5, 0.00079, 0.00131};
  double v_min = 20.0;    // m/s
  double v_max = 40.0;    // m/s
  double te_min = 0.0;    // N·m
  double te_max = 300.0;  // N·m
  double ds = 30.0;       // m

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

/// Parses `key = value` lines (alpha0..alpha4, lambda0..lambda5, v_min, v_max,
/// te_min, te_max, ds). Missing keys keep their defaults; `#` starts a comment.
VehicleParams parse_vehicle_params(std::istream& in);
VehicleParams load_vehicle_params(const std::filesystem::path& path);
void write_vehicle_params(std::ostream& out, const VehicleParams& p);

/// Acceleration in m/s^2. Throws DomainError for v <= 0.
double accel(const VehicleParams& p, double v, double te, double phi);

/// Torque holding speed `v` constant on grade `phi`.
double equilibrium_torque(const VehicleParams& p, double v, double phi = 0.0);

/// Fuel flow in kg/h.
double fuel_rate_time(const VehicleParams& p, double v, double te);

/// Fuel per distance in kg/m, i.e. fuel_rate_time / (3600 V). Throws DomainError for v <= 0.
double fuel_rate_space(const VehicleParams& p, double v, double te);

/// One forward-Euler step of length p.ds in position. Throws DomainError for
/// v <= 0 and StepFailure when the resulting velocity is not strictly positive.
double space_step(const VehicleParams& p, double v, double te, double phi);

/// Same as space_step with an explicit step length.
double space_step(const VehicleParams& p, double v, double te, double phi, double ds);

/// m_f ~ c0 + cv*dV + ct*dTe (kg/m), deviations from the linearization point.
struct AffineFuel {
  double c0 = 0.0;
  double cv = 0.0;
  double ct = 0.0;

  double operator()(double dv, double dte) const { return c0 + cv * dv + ct * dte; }
};

/// Discrete space-domain model in deviation variables around (v_lin, te_lin):
///   dV(k+1) = a_coef*dV(k) + b1*dTe(k) + b2*phi(k)
struct LinearizedModel {
  double a_coef = 1.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double v_lin = 0.0;
  double te_lin = 0.0;
  AffineFuel fuel_lin;

  double predict(double dv, double dte, double phi) const { return a_coef * dv + b1 * dte + b2 * phi; }

  /// Converts kg/m into kg/h at the linearization speed (3600 * v_lin). The MPC
  /// fuel term is expressed in these units so its weight is O(1e-3).
  double time_rate_scale() const { return 3600.0 * v_lin; }
};

/// Linearizes space_step and fuel_rate_space at the flat-road equilibrium of v_ref.
/// Throws std::invalid_argument when v_ref or its equilibrium torque is out of bounds.
LinearizedModel linearize(const VehicleParams& p, double v_ref);

}  // namespace ecocruise
