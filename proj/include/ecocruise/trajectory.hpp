#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "ecocruise/csv.hpp"

namespace ecocruise {

/// Aligned state/input history over P position steps: states have P+1
/// entries, inputs and per-step fuel have P.
struct Trajectory {
  double ds = 30.0;
  std::vector<double> position_m;
  std::vector<double> v_mps;
  std::vector<double> vavg_mps;
  std::vector<double> te_nm;
  std::vector<double> fuel_kg_per_m;

  std::size_t steps() const { return te_nm.size(); }
  double total_fuel_kg() const;
};

/// Harmonic running-average update: total distance over total elapsed time.
/// Throws DomainError for a non-positive argument (s_k may be zero).
double vavg_update(double s_k, double vavg_k, double v_k, double ds);

/// `index,position_m,v_mps,vavg_mps,te_nm,fuel_kg_per_m`; the final state row
/// leaves the input columns empty.
void write_trajectory_csv(std::ostream& out, const Trajectory& t, const Metadata& meta = {});
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace ecocruise
