#include "ecocruise/vehicle_model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ecocruise/errors.hpp"

namespace ecocruise {

void VehicleParams::validate() const {
  if (!(alpha[0] > 0.0)) throw std::invalid_argument("alpha0 must be positive");
  if (!(ds > 0.0)) throw std::invalid_argument("ds must be positive");
  if (!(v_min > 0.0)) throw std::invalid_argument("v_min must be positive");
  if (!(v_min < v_max)) throw std::invalid_argument("v_min must be below v_max");
  if (!(te_min < te_max)) throw std::invalid_argument("te_min must be below te_max");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::map<std::string, double*> param_slots(VehicleParams& p) {
  std::map<std::string, double*> m;
  for (int i = 0; i < 5; ++i) m["alpha" + std::to_string(i)] = &p.alpha[i];
  for (int i = 0; i < 6; ++i) m["lambda" + std::to_string(i)] = &p.lambda[i];
  m["v_min"] = &p.v_min;
  m["v_max"] = &p.v_max;
  m["te_min"] = &p.te_min;
  m["te_max"] = &p.te_max;
  m["ds"] = &p.ds;
  return m;
}

}  // namespace

VehicleParams parse_vehicle_params(std::istream& in) {
  VehicleParams p;
  auto slots = param_slots(p);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IngestError("expected key = value", lineno);
    const auto key = trim(line.substr(0, eq));
    const auto it = slots.find(key);
    if (it == slots.end()) throw IngestError("unknown vehicle parameter '" + key + "'", lineno);
    const auto text = trim(line.substr(eq + 1));
    std::size_t used = 0;
    try {
      *it->second = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) throw IngestError("bad value for '" + key + "'", lineno);
  }
  p.validate();
  return p;
}

VehicleParams load_vehicle_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return parse_vehicle_params(in);
}

void write_vehicle_params(std::ostream& out, const VehicleParams& p) {
  VehicleParams copy = p;
  const auto old = out.precision(17);
  for (const auto& [key, slot] : param_slots(copy)) out << key << " = " << *slot << '\n';
  out.precision(old);
}

double accel(const VehicleParams& p, double v, double te, double phi) {
  if (!(v > 0.0)) throw DomainError("accel: velocity must be positive");
  const auto& a = p.alpha;
  return a[0] * te - a[1] * phi - a[2] - a[3] * v - a[4] * v * v;
}

double equilibrium_torque(const VehicleParams& p, double v, double phi) {
  const auto& a = p.alpha;
  return (a[1] * phi + a[2] + a[3] * v + a[4] * v * v) / a[0];
}

double fuel_rate_time(const VehicleParams& p, double v, double te) {
  const auto& l = p.lambda;
  return l[0] + l[1] * v + l[2] * te + l[3] * te * te + l[4] * te * v + l[5] * v * v;
}

double fuel_rate_space(const VehicleParams& p, double v, double te) {
  if (!(v > 0.0)) throw DomainError("fuel_rate_space: velocity must be positive");
  const auto& l = p.lambda;
  const double per_mps = l[0] / v + l[1] + l[2] * te / v + l[3] * te * te / v + l[4] * te + l[5] * v;
  return per_mps / 3600.0;
}

double space_step(const VehicleParams& p, double v, double te, double phi) {
  return space_step(p, v, te, phi, p.ds);
}

double space_step(const VehicleParams& p, double v, double te, double phi, double ds) {
  const double next = v + ds * accel(p, v, te, phi) / v;
  if (!(next > 0.0) || !std::isfinite(next)) {
    std::ostringstream msg;
    msg << "space_step: velocity left (0, inf): " << v << " -> " << next;
    throw StepFailure(msg.str());
  }
  return next;
}

LinearizedModel linearize(const VehicleParams& p, double v_ref) {
  if (v_ref < p.v_min || v_ref > p.v_max)
    throw std::invalid_argument("linearize: v_ref outside [v_min, v_max]");
  const double te = equilibrium_torque(p, v_ref);
  if (te < p.te_min || te > p.te_max)
    throw std::invalid_argument("linearize: equilibrium torque outside [te_min, te_max]");
  const auto& a = p.alpha;
  const auto& l = p.lambda;
  const double v = v_ref;

  LinearizedModel m;
  m.v_lin = v;
  m.te_lin = te;
  // d(a/V)/dV at phi = 0
  const double dadv_over_v = -a[0] * te / (v * v) + a[2] / (v * v) - a[4];
  m.a_coef = 1.0 + p.ds * dadv_over_v;
  m.b1 = p.ds * a[0] / v;
  m.b2 = -p.ds * a[1] / v;
  m.fuel_lin.c0 = fuel_rate_space(p, v, te);
  m.fuel_lin.cv = (-(l[0] + l[2] * te + l[3] * te * te) / (v * v) + l[5]) / 3600.0;
  m.fuel_lin.ct = (l[2] / v + 2.0 * l[3] * te / v + l[4]) / 3600.0;
  return m;
}

}  // namespace ecocruise
