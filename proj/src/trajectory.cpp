#include "ecocruise/trajectory.hpp"

#include <ostream>

#include "ecocruise/errors.hpp"

namespace ecocruise {

double Trajectory::total_fuel_kg() const {
  double total = 0.0;
  for (double f : fuel_kg_per_m) total += f * ds;
  return total;
}

double vavg_update(double s_k, double vavg_k, double v_k, double ds) {
  if (!(v_k > 0.0) || !(vavg_k > 0.0) || !(ds > 0.0) || s_k < 0.0)
    throw DomainError("vavg_update: velocities and step must be positive");
  return (s_k + ds) / (s_k / vavg_k + ds / v_k);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& t, const Metadata& meta) {
  write_metadata(out, meta);
  out << "index,position_m,v_mps,vavg_mps,te_nm,fuel_kg_per_m\n";
  for (std::size_t k = 0; k < t.v_mps.size(); ++k) {
    out << k << ',' << fmt9(t.position_m[k]) << ',' << fmt9(t.v_mps[k]) << ',' << fmt9(t.vavg_mps[k]) << ',';
    if (k < t.te_nm.size()) out << fmt9(t.te_nm[k]) << ',' << fmt9(t.fuel_kg_per_m[k]);
    else out << ',';
    out << '\n';
  }
}

Trajectory read_trajectory_csv(std::istream& in) {
  const auto table = read_csv(in);
  const auto ipos = table.column("position_m");
  const auto iv = table.column("v_mps");
  const auto iavg = table.column("vavg_mps");
  const auto ite = table.column("te_nm");
  const auto ifuel = table.column("fuel_kg_per_m");
  Trajectory t;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    t.position_m.push_back(parse_double(row[ipos], line));
    t.v_mps.push_back(parse_double(row[iv], line));
    t.vavg_mps.push_back(parse_double(row[iavg], line));
    if (r + 1 < table.rows.size()) {
      t.te_nm.push_back(parse_double(row[ite], line));
      t.fuel_kg_per_m.push_back(parse_double(row[ifuel], line));
    }
  }
  if (t.position_m.size() >= 2) t.ds = t.position_m[1] - t.position_m[0];
  return t;
}

}  // namespace ecocruise
