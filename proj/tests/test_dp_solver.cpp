#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "ecocruise/dp_solver.hpp"
#include "ecocruise/errors.hpp"
#include "support.hpp"

using namespace ecocruise;
using Catch::Approx;

TEST_CASE("harmonic average-speed update") {
  CHECK(vavg_update(0, 30, 30, 30) == 30);
  CHECK(vavg_update(300, 27, 27, 30) == Approx(27).epsilon(1e-15));
  CHECK(vavg_update(30, 30, 20, 30) == Approx(24.0).epsilon(1e-15));
  CHECK_THROWS_AS(vavg_update(30, 30, 0, 30), DomainError);
  CHECK_THROWS_AS(vavg_update(30, 0, 30, 30), DomainError);

  Rng rng(4);
  double s = 0.0, vavg = 30.0, time = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double v = rng.uniform(20, 40);
    vavg = vavg_update(s, vavg, v, 30.0);
    s += 30.0;
    time += 30.0 / v;
    REQUIRE(vavg == Approx(s / time).epsilon(1e-12));
  }
}

TEST_CASE("grid DP matches enumeration on lattice instances") {
  Rng rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto lm = testsupport::random_lattice(rng);
    const double x1 = static_cast<double>(rng.below(lm.n1)), x2 = static_cast<double>(rng.below(lm.n2));
    const auto brute = testsupport::enumerate(lm, x1, x2);
    GridDp<testsupport::LatticeModel> dp(UniformGrid{0, 1, lm.n1}, UniformGrid{0, 1, lm.n2}, lm.penalty);
    dp.backward(lm);
    if (!brute.feasible) {
      CHECK_THROWS_AS(dp.rollout(lm, x1, x2), InfeasibleError);
      continue;
    }
    const auto path = dp.rollout(lm, x1, x2);
    CHECK(path.cost == Approx(brute.cost).epsilon(1e-12));
    CHECK(path.inputs == brute.inputs);
    CHECK(dp.cost_to_go(0).interp(x1, x2) == Approx(brute.cost).epsilon(1e-12));
    ++compared;
  }
  CHECK(compared >= 20);
}

TEST_CASE("grid interpolation") {
  const UniformGrid g{1.0, 0.5, 5};
  CHECK(g.hi() == 3.0);
  CHECK(UniformGrid::span(20, 40, 0.25).n == 81);
  std::size_t i;
  double t;
  g.locate(1.75, i, t);
  CHECK(i == 1);
  CHECK(t == Approx(0.5));
  g.locate(3.0, i, t);
  CHECK(i == 3);
  CHECK(t == 1.0);
  g.locate(-4.0, i, t);
  CHECK(i == 0);
  CHECK(t == 0.0);

  ValueTable2d tab(UniformGrid{0, 1, 2}, UniformGrid{0, 1, 2});
  tab.at(0, 0) = 0;
  tab.at(0, 1) = 1;
  tab.at(1, 0) = 2;
  tab.at(1, 1) = 3;
  CHECK(tab.interp(0.5, 0.5) == Approx(1.5));
  CHECK(tab.interp(1.0, 0.25) == Approx(2.25));
}

TEST_CASE("default DP configuration") {
  const VehicleParams p;
  const auto c = DpConfig::defaults(p, 30, 30);
  CHECK(c.v_grid.step == 0.25);
  CHECK(c.vavg_grid.step == 0.1);
  CHECK(c.te_grid.step == 10.0);
  CHECK(c.vavg_min == Approx(27.9));
  CHECK(c.vavg_max == Approx(32.1));
  CHECK_NOTHROW(c.validate(p));
  // v_ref must be a node of the average-speed grid
  const double u = (30 - c.vavg_grid.lo) / c.vavg_grid.step;
  CHECK(std::abs(u - std::round(u)) < 1e-9);

  auto bad = c;
  bad.v_grid.lo = 10;
  CHECK_THROWS_AS(bad.validate(p), std::invalid_argument);
  bad = c;
  bad.v_ref = 40;
  CHECK_THROWS_AS(bad.validate(p), std::invalid_argument);
  bad = c;
  bad.te_grid.n = 1;
  CHECK_THROWS_AS(bad.validate(p), std::invalid_argument);
}

TEST_CASE("DP on a flat road against constant-speed policies") {
  const VehicleParams p;
  RoadGenSpec flat;
  flat.max_components = 0;
  const auto road = gen_sinusoidal(1, 3000, flat);

  // best constant-speed policy meeting the average-speed target
  double best_const = 1e9;
  for (double v = 30; v <= 32.1; v += 0.01)
    best_const = std::min(best_const, fuel_rate_space(p, v, equilibrium_torque(p, v)) * 3000.0);

  // with the final speed free the optimum spends kinetic energy near the end,
  // so it can only beat the constant policies
  const auto free_end = solve_dp(p, road, DpConfig::defaults(p, 30, 30));
  REQUIRE(free_end.trajectory.steps() == 100);
  CHECK(free_end.trajectory.vavg_mps.back() >= 30 - 1e-9);
  CHECK(free_end.total_fuel <= best_const * 1.002);
  CHECK(free_end.trajectory.v_mps.back() < 30.0);

  // holding the final speed at the initial one removes that energy and leaves
  // a near-constant trajectory
  auto cfg = DpConfig::defaults(p, 30, 30);
  cfg.v_final_min = 30.0;
  const auto held = solve_dp(p, road, cfg);
  const auto& t = held.trajectory;
  CHECK(t.vavg_mps.back() >= 30 - 1e-9);
  CHECK(t.v_mps.back() >= 30 - 0.25);
  CHECK(held.total_fuel <= best_const * 1.002);
  CHECK(held.total_fuel >= best_const * 0.99);
  for (double v : t.v_mps) CHECK(std::abs(v - 30) < 1.0);
  CHECK(held.total_fuel > free_end.total_fuel);
}

TEST_CASE("DP trajectory satisfies every bound and replays exactly") {
  const VehicleParams p;
  const auto road = gen_sinusoidal(3, 6000);
  const auto cfg = DpConfig::defaults(p, 30, 30);
  const auto sol = solve_dp(p, road, cfg);
  const auto& t = sol.trajectory;
  REQUIRE(t.steps() == road.steps());
  for (std::size_t k = 0; k <= t.steps(); ++k) {
    CHECK(t.v_mps[k] >= p.v_min - 1e-9);
    CHECK(t.v_mps[k] <= p.v_max + 1e-9);
    if (k > 0) {
      CHECK(t.vavg_mps[k] >= cfg.vavg_min - 1e-9);
      CHECK(t.vavg_mps[k] <= cfg.vavg_max + 1e-9);
    }
  }
  for (double te : t.te_nm) {
    CHECK(te >= p.te_min);
    CHECK(te <= p.te_max);
  }
  CHECK(t.vavg_mps.back() >= cfg.v_ref - 1e-9);
  CHECK(t.vavg_mps.back() <= cfg.vavg_max + 1e-9);
  CHECK(sol.total_fuel == Approx(t.total_fuel_kg()));
  // the value estimate interpolates the same problem
  CHECK(sol.value_estimate == Approx(sol.total_fuel).epsilon(0.01));

  const auto again = replay(p, road, t.te_nm, 30);
  for (std::size_t k = 0; k <= t.steps(); ++k) CHECK(again.v_mps[k] == t.v_mps[k]);
}

TEST_CASE("DP beats randomized feasible torque sequences") {
  const VehicleParams p;
  RoadGenSpec spec;
  spec.lead_in_m = 0;
  spec.ramp_m = 0;
  spec.components = {{25.0, 2000.0, 0.5}};
  const auto road = gen_sinusoidal(1, 3000, spec);
  const auto cfg = DpConfig::defaults(p, 30, 30);
  const auto sol = solve_dp(p, road, cfg);

  Rng rng(17);
  int accepted = 0;
  for (int trial = 0; trial < 20000 && accepted < 150; ++trial) {
    std::vector<double> te(road.steps());
    double v = 30;
    for (std::size_t k = 0; k < road.steps(); ++k) {
      // track a randomly drifting target speed so that the sample stays plausible
      const double target = 30.4 + rng.uniform(-1.0, 1.0);
      te[k] = std::clamp(equilibrium_torque(p, v, road.grade[k]) + 150 * (target - v) + rng.uniform(-20, 20), 0.0, 300.0);
      v = space_step(p, v, te[k], road.grade[k]);
    }
    Trajectory t;
    try {
      t = replay(p, road, te, 30);
    } catch (const SimulationError&) {
      continue;
    }
    bool ok = t.vavg_mps.back() >= 30 && t.vavg_mps.back() <= cfg.vavg_max;
    for (std::size_t k = 0; k <= t.steps() && ok; ++k)
      ok = t.v_mps[k] >= p.v_min && t.v_mps[k] <= p.v_max && (k == 0 || (t.vavg_mps[k] >= cfg.vavg_min && t.vavg_mps[k] <= cfg.vavg_max));
    if (!ok) continue;
    ++accepted;
    CHECK(sol.total_fuel <= t.total_fuel_kg());
  }
  CHECK(accepted >= 100);
}

TEST_CASE("widening the torque range never raises the DP cost") {
  const VehicleParams p;
  const auto road = gen_sinusoidal(8, 3000);
  auto narrow_p = p;
  narrow_p.te_max = 250;
  const auto wide = solve_dp(p, road, DpConfig::defaults(p, 30, 30));
  const auto narrow = solve_dp(narrow_p, road, DpConfig::defaults(narrow_p, 30, 30));
  CHECK(wide.value_estimate <= narrow.value_estimate);
}

TEST_CASE("retained cost-to-go tables") {
  const VehicleParams p;
  const auto road = gen_sinusoidal(8, 3000);
  auto cfg = DpConfig::defaults(p, 30, 30);
  cfg.retain_tables = true;
  const auto sol = solve_dp(p, road, cfg);
  REQUIRE(sol.cost_to_go.has_value());
  CHECK(sol.cost_to_go->size() == road.steps() + 1);
  CHECK(sol.cost_to_go->front().interp(30, 30) == sol.value_estimate);
}

TEST_CASE("DP reports the step where the rollout is trapped") {
  VehicleParams p;
  p.te_max = 60;  // cannot hold speed even on the flat
  RoadGenSpec flat;
  flat.max_components = 0;
  const auto road = gen_sinusoidal(1, 3000, flat);
  try {
    solve_dp(p, road, DpConfig::defaults(p, 30, 30));
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    CHECK(e.step() <= road.steps());
  }
  RoadProfile tiny = RoadProfile::from_elevation({0.0, 0.0}, 30);
  CHECK_THROWS_AS(solve_dp(VehicleParams{}, tiny, DpConfig::defaults(VehicleParams{}, 30, 30)), std::invalid_argument);
}

TEST_CASE("replay edge cases") {
  const VehicleParams p;
  const auto empty = RoadProfile::from_elevation({5.0}, 30);
  const auto t0 = replay(p, empty, std::vector<double>{}, 28);
  CHECK(t0.steps() == 0);
  REQUIRE(t0.v_mps.size() == 1);
  CHECK(t0.v_mps[0] == 28);

  RoadGenSpec flat;
  flat.max_components = 0;
  const auto road = gen_sinusoidal(1, 3000, flat);
  const std::vector<double> te(road.steps(), equilibrium_torque(p, 30));
  const auto t = replay(p, road, te, 30);
  for (double v : t.v_mps) CHECK(v == Approx(30).epsilon(1e-12));
  CHECK_THROWS_AS(replay(p, road, std::vector<double>(3, 0.0), 30), std::invalid_argument);
  const std::vector<double> coast(road.steps(), 0.0);
  CHECK_THROWS_AS(replay(p, road, coast, 3.0), SimulationError);
}

TEST_CASE("trajectory CSV round trip") {
  const VehicleParams p;
  const auto road = gen_sinusoidal(3, 3000);
  const auto sol = solve_dp(p, road, DpConfig::defaults(p, 30, 30));
  std::stringstream ss;
  write_trajectory_csv(ss, sol.trajectory, {{"kind", "dp"}});
  const auto back = read_trajectory_csv(ss);
  REQUIRE(back.steps() == sol.trajectory.steps());
  CHECK(back.ds == 30);
  for (std::size_t k = 0; k < back.steps(); ++k) {
    CHECK(back.v_mps[k] == Approx(sol.trajectory.v_mps[k]).epsilon(1e-8));
    CHECK(back.te_nm[k] == Approx(sol.trajectory.te_nm[k]).epsilon(1e-8).margin(1e-12));
  }
  CHECK(back.total_fuel_kg() == Approx(sol.total_fuel).epsilon(1e-7));
}
