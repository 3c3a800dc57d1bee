#include "ecocruise/sim_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "ecocruise/errors.hpp"
#include "ecocruise/lmpc.hpp"

namespace ecocruise {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::AtMpc: return "AT_MPC";
    case ControllerKind::PtMpc: return "PT_MPC";
    case ControllerKind::FixedLmpc: return "FIXED_LMPC";
    case ControllerKind::Pi: return "PI";
    case ControllerKind::DpReplay: return "DP_REPLAY";
  }
  return "?";
}

ControllerKind parse_controller(const std::string& s) {
  std::string l;
  for (char c : s) l += static_cast<char>(c == '-' ? '_' : std::tolower(static_cast<unsigned char>(c)));
  if (l == "at_mpc" || l == "at") return ControllerKind::AtMpc;
  if (l == "pt_mpc" || l == "pt") return ControllerKind::PtMpc;
  if (l == "fixed_lmpc" || l == "fixed" || l == "lmpc") return ControllerKind::FixedLmpc;
  if (l == "pi") return ControllerKind::Pi;
  if (l == "dp_replay" || l == "dp") return ControllerKind::DpReplay;
  throw std::invalid_argument("unknown controller '" + s + "'");
}

void ControllerSpec::validate() const {
  if (kind == ControllerKind::FixedLmpc && !(gamma >= 0.0)) throw std::invalid_argument("LMPC gamma must be >= 0");
  if (kind == ControllerKind::Pi && !(kp > 0.0 && ki > 0.0)) throw std::invalid_argument("PI gains must be positive");
  if (horizon == 0) throw std::invalid_argument("horizon must be at least one step");
  if (!(v_ref > 0.0 && v_i > 0.0)) throw std::invalid_argument("speeds must be positive");
  if (!(soft_weight > 0.0)) throw std::invalid_argument("soft weight must be positive");
}

SimMetrics metrics(const Trajectory& t, double exclude_m) {
  SimMetrics m;
  double dist = 0.0, time = 0.0, fuel = 0.0;
  for (std::size_t k = 0; k < t.steps(); ++k) {
    if (t.position_m[k] + 1e-9 < exclude_m) continue;
    dist += t.ds;
    time += t.ds / t.v_mps[k];
    fuel += t.fuel_kg_per_m[k] * t.ds;
  }
  m.total_fuel_kg = fuel;
  m.distance_km = dist / 1000.0;
  m.avg_velocity_mps = time > 0.0 ? dist / time : 0.0;
  m.fuel_economy_km_per_kg = fuel > 0.0 ? m.distance_km / fuel : std::numeric_limits<double>::infinity();
  m.valid = dist > 0.0 && fuel > 0.0;
  return m;
}

double SimResult::median_step_s() const {
  if (step_runtimes.empty()) return 0.0;
  auto v = step_runtimes;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

SimResult run(const ControllerSpec& spec, const RoadProfile& road, const VehicleParams& p, const SimArtifacts& art) {
  spec.validate();
  if (std::abs(road.ds - p.ds) > 1e-12) throw std::invalid_argument("road spacing differs from the model step");
  const std::size_t steps = road.steps();
  if (steps == 0) throw std::invalid_argument("road has no steps");

  SimResult res;
  res.spec = spec;
  Trajectory& t = res.trajectory;
  t.ds = road.ds;
  t.position_m.push_back(0.0);
  t.v_mps.push_back(spec.v_i);
  t.vavg_mps.push_back(spec.v_i);

  const bool mpc = spec.kind == ControllerKind::AtMpc || spec.kind == ControllerKind::PtMpc ||
                   spec.kind == ControllerKind::FixedLmpc;
  if (spec.kind == ControllerKind::AtMpc && !art.model) throw std::invalid_argument("AT_MPC needs a trained model");
  if (spec.kind == ControllerKind::PtMpc && (!art.series || art.series->size() != steps))
    throw std::invalid_argument("PT_MPC needs a gamma series covering the road");
  if (spec.kind == ControllerKind::DpReplay && (!art.dp_torque || art.dp_torque->size() != steps))
    throw std::invalid_argument("DP_REPLAY needs a torque sequence covering the road");

  LinearizedModel lin;
  MpcOptions opts;
  opts.soft_weight = spec.soft_weight;
  if (mpc) lin = linearize(p, spec.v_ref);
  MpcSolver solver;
  const double te_ff = equilibrium_torque(p, spec.v_ref);
  double integ = 0.0;

  using clock = std::chrono::steady_clock;
  for (std::size_t k = 0; k < steps; ++k) {
    const double v = t.v_mps[k];
    const double pos = road.position(k);
    double te = 0.0;
    const auto t0 = clock::now();
    if (mpc) {
      double gamma = spec.gamma;
      if (spec.kind == ControllerKind::AtMpc) {
        const auto pv = preview(road, k, kNetPreviewLength);
        gamma = std::min(predict(*art.model, pv.samples, spec.v_ref), kGammaCap);
      } else if (spec.kind == ControllerKind::PtMpc) {
        gamma = art.series->gamma[k];
      }
      const auto win = preview(road, k, spec.horizon);
      MpcSolution sol;
      try {
        sol = solver.solve(build_mpc(gamma, lin, win.samples, v - lin.v_lin, p, opts));
      } catch (const SolverError& e) {
        throw SimulationError(std::string("MPC failed: ") + e.what(), pos);
      }
      te = lin.te_lin + sol.te[0];
      res.gamma_used.push_back(gamma);
    } else if (spec.kind == ControllerKind::Pi) {
      const double e = spec.v_ref - v;
      const double dt = road.ds / v;
      const double raw = te_ff + spec.kp * e + spec.ki * (integ + e * dt);
      te = std::clamp(raw, p.te_min, p.te_max);
      // conditional integration: hold the integrator while saturated in the error's direction
      if (raw == te || (raw > p.te_max && e < 0.0) || (raw < p.te_min && e > 0.0)) integ += e * dt;
    } else {
      te = (*art.dp_torque)[k];
    }
    const auto t1 = clock::now();
    if (spec.kind != ControllerKind::DpReplay) res.step_runtimes.push_back(std::chrono::duration<double>(t1 - t0).count());
    te = std::clamp(te, p.te_min, p.te_max);

    double v_next;
    try {
      v_next = space_step(p, v, te, road.grade[k]);
    } catch (const std::exception& e) {
      throw SimulationError(e.what(), pos);
    }
    t.te_nm.push_back(te);
    t.fuel_kg_per_m.push_back(fuel_rate_space(p, v, te));
    t.position_m.push_back(road.position(k + 1));
    t.v_mps.push_back(v_next);
    t.vavg_mps.push_back(vavg_update(pos, t.vavg_mps[k], v, road.ds));
  }
  res.raw = metrics(t);
  res.excluded = metrics(t, kTransientM);
  return res;
}

namespace {

SweepRow row_from(const SimResult& r) {
  SweepRow row;
  row.controller = to_string(r.spec.kind);
  if (r.spec.kind == ControllerKind::FixedLmpc) {
    row.gamma = r.spec.gamma;
  } else if (!r.gamma_used.empty()) {
    double s = 0.0;
    for (double g : r.gamma_used) s += g;
    row.gamma = s / static_cast<double>(r.gamma_used.size());
  } else {
    row.gamma = kNaN;
  }
  row.avg_velocity_mps = r.raw.avg_velocity_mps;
  row.fuel_economy_km_per_kg = r.raw.fuel_economy_km_per_kg;
  row.total_fuel_kg = r.raw.total_fuel_kg;
  row.median_step_s = r.median_step_s();
  return row;
}

}  // namespace

std::vector<SweepRow> pareto_sweep(const RoadProfile& road, const VehicleParams& p,
                                   const std::vector<double>& gamma_ladder, const SimArtifacts& art,
                                   const ControllerSpec& base, unsigned threads, std::vector<SimResult>* results) {
  if (gamma_ladder.empty()) throw std::invalid_argument("gamma ladder is empty");
  for (std::size_t i = 1; i < gamma_ladder.size(); ++i)
    if (!(gamma_ladder[i] > gamma_ladder[i - 1])) throw std::invalid_argument("gamma ladder must be ascending");

  std::vector<ControllerSpec> specs;
  for (double g : gamma_ladder) {
    auto s = base;
    s.kind = ControllerKind::FixedLmpc;
    s.gamma = g;
    specs.push_back(s);
  }
  for (auto k : {ControllerKind::AtMpc, ControllerKind::PtMpc, ControllerKind::Pi, ControllerKind::DpReplay}) {
    auto s = base;
    s.kind = k;
    specs.push_back(s);
  }

  std::vector<SweepRow> rows(specs.size());
  std::vector<SimResult> res(specs.size());
  auto work = [&](std::size_t i) {
    try {
      res[i] = run(specs[i], road, p, art);
      rows[i] = row_from(res[i]);
    } catch (const std::exception& e) {
      rows[i].controller = to_string(specs[i].kind);
      rows[i].gamma = specs[i].kind == ControllerKind::FixedLmpc ? specs[i].gamma : kNaN;
      rows[i].avg_velocity_mps = rows[i].fuel_economy_km_per_kg = rows[i].total_fuel_kg = kNaN;
      rows[i].median_step_s = kNaN;
      rows[i].error = e.what();
      res[i].spec = specs[i];
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, specs.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < specs.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) work(i);
      });
    for (auto& th : pool) th.join();
  }
  if (results) *results = std::move(res);
  return rows;
}

double front_gap(const std::vector<SweepRow>& rows, const SweepRow& point, double v_tol) {
  std::vector<std::pair<double, double>> front;
  for (const auto& r : rows)
    if (r.controller == "FIXED_LMPC" && r.error.empty() && std::isfinite(r.avg_velocity_mps) &&
        std::isfinite(r.fuel_economy_km_per_kg))
      front.emplace_back(r.avg_velocity_mps, r.fuel_economy_km_per_kg);
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (front.empty() || !std::isfinite(point.avg_velocity_mps)) return inf;
  std::sort(front.begin(), front.end());

  const double lo = std::max(point.avg_velocity_mps - v_tol, front.front().first);
  const double hi = std::min(point.avg_velocity_mps + v_tol, front.back().first);
  if (lo > hi) return inf;
  auto value = [&](double v) {
    if (front.size() == 1) return front.front().second;
    auto it = std::lower_bound(front.begin(), front.end(), std::make_pair(v, -inf));
    if (it == front.begin()) return it->second;
    if (it == front.end()) return front.back().second;
    const auto& b = *it;
    const auto& a = *(it - 1);
    if (b.first == a.first) return 0.5 * (a.second + b.second);
    return a.second + (b.second - a.second) * (v - a.first) / (b.first - a.first);
  };
  // the polyline's extremes on [lo, hi] sit at the window ends or at interior vertices
  double fmin = std::min(value(lo), value(hi));
  double fmax = std::max(value(lo), value(hi));
  for (const auto& [v, f] : front)
    if (v > lo && v < hi) {
      fmin = std::min(fmin, f);
      fmax = std::max(fmax, f);
    }
  const double e = point.fuel_economy_km_per_kg;
  if (e >= fmin && e <= fmax) return 0.0;
  return e < fmin ? (fmin - e) / fmin : (e - fmax) / fmax;
}

std::vector<double> linear_ladder(double lo, double hi, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ladder needs at least one value");
  if (n == 1) return {lo};
  if (!(hi > lo)) throw std::invalid_argument("ladder upper end must exceed the lower end");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, const Metadata& meta) {
  Metadata m = meta;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!rows[i].error.empty()) m["error." + std::to_string(i)] = rows[i].error;
  write_metadata(out, m);
  out << "controller,gamma,avg_velocity_mps,fuel_economy_km_per_kg,total_fuel_kg,median_step_s\n";
  for (const auto& r : rows)
    out << r.controller << ',' << fmt9(r.gamma) << ',' << fmt9(r.avg_velocity_mps) << ','
        << fmt9(r.fuel_economy_km_per_kg) << ',' << fmt9(r.total_fuel_kg) << ',' << fmt9(r.median_step_s) << '\n';
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  const auto t = read_csv(in);
  std::vector<SweepRow> rows;
  if (t.header.empty()) return rows;
  const auto cc = t.column("controller"), cg = t.column("gamma"), cv = t.column("avg_velocity_mps"),
             ce = t.column("fuel_economy_km_per_kg"), cf = t.column("total_fuel_kg"), cs = t.column("median_step_s");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    SweepRow s;
    s.controller = to_string(parse_controller(row[cc]));
    s.gamma = parse_double(row[cg], line);
    s.avg_velocity_mps = parse_double(row[cv], line);
    s.fuel_economy_km_per_kg = parse_double(row[ce], line);
    s.total_fuel_kg = parse_double(row[cf], line);
    s.median_step_s = parse_double(row[cs], line);
    if (auto it = t.metadata.find("error." + std::to_string(r)); it != t.metadata.end()) s.error = it->second;
    rows.push_back(std::move(s));
  }
  return rows;
}

void write_pareto_plot_csv(std::ostream& out, const std::vector<SweepRow>& rows, const Metadata& meta) {
  write_metadata(out, meta);
  out << "series,avg_velocity_mps,fuel_economy_km_per_kg\n";
  for (const auto& r : rows)
    if (r.error.empty()) out << r.controller << ',' << fmt9(r.avg_velocity_mps) << ',' << fmt9(r.fuel_economy_km_per_kg) << '\n';
}

}  // namespace ecocruise
