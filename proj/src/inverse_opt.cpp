#include "ecocruise/inverse_opt.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "ecocruise/errors.hpp"
#include "ecocruise/nnls.hpp"

namespace ecocruise {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MpcBounds deviation_bounds(const LinearizedModel& lin, const VehicleParams& p) {
  return {p.v_min - lin.v_lin, p.v_max - lin.v_lin, p.te_min - lin.te_lin, p.te_max - lin.te_lin};
}

namespace {

void check_window(const KktWindow& w) {
  const Index n = w.te.size();
  if (n < 1) throw std::invalid_argument("KKT window needs at least one step");
  if (w.v.size() != n + 1 || w.grade.size() != n)
    throw std::invalid_argument("KKT window: expected N+1 velocities and N grades for N torques");
}

}  // namespace

std::vector<std::size_t> detect_active(const KktWindow& w, const MpcBounds& b, double tol) {
  check_window(w);
  const auto n = static_cast<std::size_t>(w.te.size());
  const double vtol = tol * (b.v_hi - b.v_lo);
  const double ttol = tol * (b.te_hi - b.te_lo);
  std::vector<std::size_t> act;
  for (std::size_t k = 0; k < n; ++k)
    if (w.v[static_cast<Index>(k + 1)] <= b.v_lo + vtol) act.push_back(k);
  for (std::size_t k = 0; k < n; ++k)
    if (w.v[static_cast<Index>(k + 1)] >= b.v_hi - vtol) act.push_back(n + k);
  for (std::size_t k = 0; k < n; ++k)
    if (w.te[static_cast<Index>(k)] <= b.te_lo + ttol) act.push_back(2 * n + k);
  for (std::size_t k = 0; k < n; ++k)
    if (w.te[static_cast<Index>(k)] >= b.te_hi - ttol) act.push_back(3 * n + k);
  return act;
}

VectorXd kkt_row_weights(std::size_t horizon) {
  const auto n = static_cast<Index>(horizon);
  VectorXd r(2 * n + 1);
  for (Index k = 0; k <= n; ++k) r[k] = 1.0 - static_cast<double>(k) / static_cast<double>(n);
  for (Index k = 0; k < n; ++k)
    r[n + 1 + k] = n > 1 ? 1.0 - static_cast<double>(k) / static_cast<double>(n - 1) : 1.0;
  return r;
}

KktSystem build_kkt(const KktWindow& w, const LinearizedModel& lin, const std::vector<std::size_t>& active_set,
                    double v_ref_dev, double fuel_scale) {
  check_window(w);
  const Index n = w.te.size();
  const auto un = static_cast<std::size_t>(n);
  const Index rows = 2 * n + 1;
  auto vrow = [](Index k) { return k; };
  auto trow = [n](Index k) { return n + 1 + k; };

  KktSystem sys;
  sys.horizon = un;
  sys.active_set = active_set;
  sys.r_weights = kkt_row_weights(un);
  sys.q_mat = MatrixXd::Zero(rows, 1 + (n + 1) + static_cast<Index>(active_set.size()));
  sys.w_vec = VectorXd::Zero(rows);

  const double s = fuel_scale > 0.0 ? fuel_scale : lin.time_rate_scale();
  const auto& f = lin.fuel_lin;
  // d/dx of sum_k m(k)^2
  for (Index k = 0; k < n; ++k) {
    const double m = s * (f.c0 + f.cv * w.v[k] + f.ct * w.te[k]);
    sys.q_mat(vrow(k), 0) += 2.0 * m * s * f.cv;
    sys.q_mat(trow(k), 0) += 2.0 * m * s * f.ct;
  }
  // W = -d/dx (v_ref_dev - mean V)^2
  const double inv = 1.0 / static_cast<double>(n + 1);
  const double err = v_ref_dev - w.v.mean();
  for (Index k = 0; k <= n; ++k) sys.w_vec[vrow(k)] = 2.0 * err * inv;

  // equality rows: V(0) = v_init; V(k+1) - A V(k) - B1 Te(k) - B2 phi(k) = 0
  sys.q_mat(vrow(0), 1) = 1.0;
  for (Index k = 0; k < n; ++k) {
    const Index c = 2 + k;
    sys.q_mat(vrow(k + 1), c) = 1.0;
    sys.q_mat(vrow(k), c) = -lin.a_coef;
    sys.q_mat(trow(k), c) = -lin.b1;
  }

  for (std::size_t j = 0; j < active_set.size(); ++j) {
    const std::size_t idx = active_set[j];
    if (idx >= 4 * un) throw std::invalid_argument("active constraint index out of range");
    const auto block = idx / un;
    const auto k = static_cast<Index>(idx % un);
    const Index c = sys.q_mat.cols() - static_cast<Index>(active_set.size()) + static_cast<Index>(j);
    switch (block) {
      case 0: sys.q_mat(vrow(k + 1), c) = -1.0; break;
      case 1: sys.q_mat(vrow(k + 1), c) = 1.0; break;
      case 2: sys.q_mat(trow(k), c) = -1.0; break;
      default: sys.q_mat(trow(k), c) = 1.0; break;
    }
  }
  return sys;
}

GammaRecovery recover_gamma(const KktSystem& kkt) {
  const Index cols = kkt.q_mat.cols();
  if (kkt.q_mat.rows() != kkt.w_vec.size() || kkt.r_weights.size() != kkt.w_vec.size())
    throw std::invalid_argument("recover_gamma: inconsistent KKT system");
  const VectorXd sr = kkt.r_weights.cwiseMax(0.0).cwiseSqrt();
  const MatrixXd a = sr.asDiagonal() * kkt.q_mat;
  const VectorXd b = sr.asDiagonal() * kkt.w_vec;

  std::vector<bool> nonneg(static_cast<std::size_t>(cols), false);
  nonneg[0] = true;
  for (std::size_t j = 0; j < kkt.active_set.size(); ++j) nonneg[kkt.q_col(j)] = true;

  const auto ls = bounded_least_squares(a, b, nonneg);
  GammaRecovery out;
  out.y = ls.x;
  out.gamma = ls.x[0];
  out.residual = ls.residual_norm;

  // gamma is unique when its column is independent of the multiplier columns;
  // multipliers that only touch zero-weight rows do not matter
  MatrixXd an = a;
  for (Index j = 0; j < cols; ++j) {
    const double c = an.col(j).norm();
    if (c > 0.0) an.col(j) /= c;
  }
  auto rank_of = [](const MatrixXd& m) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(m);
    qr.setThreshold(1e-10);
    return qr.rank();
  };
  if (an.col(0).norm() == 0.0 || rank_of(an) <= rank_of(an.rightCols(cols - 1))) out.flags |= kGammaDegenerate;
  return out;
}

KktWindow trajectory_window(const Trajectory& traj, const RoadProfile& road, const LinearizedModel& lin,
                            const VehicleParams& p, std::size_t k, std::size_t horizon) {
  const std::size_t steps = traj.steps();
  if (road.steps() != steps) throw std::invalid_argument("trajectory and road lengths differ");
  if (k >= steps) throw std::invalid_argument("window start beyond trajectory end");
  KktWindow w;
  const auto n = static_cast<Index>(horizon);
  w.v.resize(n + 1);
  w.te.resize(n);
  w.grade.resize(n);
  const double v_end = traj.v_mps.back();
  const double te_end = equilibrium_torque(p, v_end);
  for (Index i = 0; i <= n; ++i) {
    const std::size_t j = k + static_cast<std::size_t>(i);
    w.v[i] = (j <= steps ? traj.v_mps[j] : v_end) - lin.v_lin;
    if (i < n) {
      w.te[i] = (j < steps ? traj.te_nm[j] : te_end) - lin.te_lin;
      w.grade[i] = j < steps ? road.grade[j] : 0.0;
    }
  }
  return w;
}

GammaSeries gamma_series(const Trajectory& traj, const RoadProfile& road, const LinearizedModel& lin,
                         const VehicleParams& p, std::size_t horizon, unsigned threads) {
  const std::size_t steps = traj.steps();
  if (road.steps() != steps) throw std::invalid_argument("trajectory and road lengths differ");
  if (horizon < 1) throw std::invalid_argument("horizon must be positive");
  GammaSeries s;
  s.ds = road.ds;
  s.positions.resize(steps);
  s.gamma.assign(steps, 0.0);
  s.residuals.assign(steps, 0.0);
  s.flags.assign(steps, kGammaOk);
  const MpcBounds bounds = deviation_bounds(lin, p);

  auto work = [&](std::size_t k) {
    s.positions[k] = k;
    try {
      const auto w = trajectory_window(traj, road, lin, p, k, horizon);
      const auto rec = recover_gamma(build_kkt(w, lin, detect_active(w, bounds)));
      std::uint32_t flags = rec.flags;
      double g = rec.gamma;
      if (g > kGammaCap) {
        g = kGammaCap;
        flags |= kGammaCapped;
      }
      s.gamma[k] = g;
      s.residuals[k] = rec.residual;
      s.flags[k] = flags;
    } catch (const std::exception&) {
      s.flags[k] = kGammaFailed;
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(steps, 1)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < steps; ++k) work(k);
    return s;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < steps; k = next++) work(k);
    });
  for (auto& th : pool) th.join();
  return s;
}

void write_gamma_csv(std::ostream& out, const GammaSeries& s, const Metadata& meta) {
  Metadata m = meta;
  m["ds"] = fmt9(s.ds);
  write_metadata(out, m);
  out << "index,position_m,gamma,residual,flags\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << s.positions[i] << ',' << fmt9(s.ds * static_cast<double>(s.positions[i])) << ',' << fmt9(s.gamma[i])
        << ',' << fmt9(s.residuals[i]) << ',' << s.flags[i] << '\n';
}

GammaSeries read_gamma_csv(std::istream& in) {
  const auto t = read_csv(in);
  const auto ci = t.column("index"), cp = t.column("position_m"), cg = t.column("gamma"),
             cr = t.column("residual"), cf = t.column("flags");
  GammaSeries s;
  if (auto it = t.metadata.find("ds"); it != t.metadata.end()) s.ds = parse_double(it->second, 0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    const double idx = parse_double(row[ci], line);
    if (idx < 0 || idx != std::floor(idx)) throw IngestError("gamma series: bad index", line);
    const auto k = static_cast<std::size_t>(idx);
    if (!s.positions.empty() && k <= s.positions.back())
      throw IngestError("gamma series: positions must strictly increase", line);
    if (t.metadata.find("ds") == t.metadata.end() && k > 0) s.ds = parse_double(row[cp], line) / idx;
    const double g = parse_double(row[cg], line);
    if (!(g >= 0.0)) throw IngestError("gamma series: negative gamma", line);
    const double f = parse_double(row[cf], line);
    if (f < 0 || f != std::floor(f)) throw IngestError("gamma series: bad flags", line);
    s.positions.push_back(k);
    s.gamma.push_back(g);
    s.residuals.push_back(parse_double(row[cr], line));
    s.flags.push_back(static_cast<std::uint32_t>(f));
  }
  return s;
}

}  // namespace ecocruise
