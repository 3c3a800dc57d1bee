#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "ecocruise/errors.hpp"
#include "ecocruise/road_profile.hpp"

using namespace ecocruise;
using Catch::Approx;

namespace {

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("single sinusoid has the analytic peak grade") {
  RoadGenSpec spec;
  spec.lead_in_m = 0;
  spec.ramp_m = 0;
  spec.max_grade = 0.05;
  const double amp = 10.0, wl = 3000.0;
  spec.components = {{amp, wl, 0.0}};
  const auto road = gen_sinusoidal(1, 9000, spec);
  const double analytic = 2 * std::numbers::pi * amp / wl;
  // a forward difference over ds attenuates the peak by sinc(pi ds / wl); the
  // difference quotient peaks at a cell midpoint, half a step from the samples
  const double x = std::numbers::pi * 30.0 / wl;
  CHECK(max_abs(road.grade) == Approx(analytic * std::sin(x) / x * std::cos(x)).epsilon(1e-9));
  CHECK(max_abs(road.grade) == Approx(analytic).epsilon(2e-3));
  for (std::size_t i = 0; i < road.steps(); ++i)
    CHECK(road.grade[i] == Approx((road.elevation[i + 1] - road.elevation[i]) / 30.0).margin(1e-15));
}

TEST_CASE("steep explicit components are scaled down to the grade cap") {
  RoadGenSpec spec;
  spec.components = {{100.0, 1000.0, 0.3}};
  const auto road = gen_sinusoidal(1, 6000, spec);
  CHECK(max_abs(road.grade) == Approx(0.05).epsilon(1e-12));
}

TEST_CASE("zero components give a flat road") {
  RoadGenSpec spec;
  spec.max_components = 0;
  const auto road = gen_sinusoidal(4, 3000, spec);
  CHECK(road.steps() == 100);
  CHECK(max_abs(road.grade) == 0.0);
  CHECK_THROWS_AS(gen_sinusoidal(4, 2999, spec), std::invalid_argument);
}

TEST_CASE("generator is deterministic and seed dependent") {
  const auto a = gen_sinusoidal(7, 30000);
  const auto b = gen_sinusoidal(7, 30000);
  const auto c = gen_sinusoidal(8, 30000);
  CHECK(a.elevation == b.elevation);
  CHECK(a.grade == b.grade);
  CHECK(a.grade != c.grade);
  CHECK(a.steps() == 1000);
  CHECK(a.length_m() == 30000);
}

TEST_CASE("generated roads respect the grade bound and shape") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto road = gen_sinusoidal(seed, 6000);
    const double peak = max_abs(road.grade);
    REQUIRE(peak <= 0.05);
    REQUIRE(peak == Approx(0.05).epsilon(1e-9));
    // flat lead-in
    for (std::size_t i = 0; i < 16; ++i) REQUIRE(road.grade[i] == 0.0);
  }
  const auto road = gen_sinusoidal(3, 30000);
  int up = 0, down = 0, flat = 0;
  for (double g : road.grade) {
    if (g > 0.02) ++up;
    if (g < -0.02) ++down;
    if (std::abs(g) < 0.005) ++flat;
  }
  CHECK(up > 0);
  CHECK(down > 0);
  CHECK(flat > 0);
}

TEST_CASE("grades integrate back to the elevation") {
  const auto road = gen_sinusoidal(12, 20000);
  double h = road.elevation.front();
  for (std::size_t i = 0; i < road.steps(); ++i) {
    h += road.grade[i] * road.ds;
    REQUIRE(h == Approx(road.elevation[i + 1]).margin(1e-9));
  }
}

TEST_CASE("elevation CSV ingestion") {
  std::istringstream ramp("distance_m,elevation_m\n0,0\n300,15\n");
  const auto r = parse_elevation_csv(ramp);
  CHECK(r.elevation.size() == 11);
  REQUIRE(r.steps() == 10);
  for (double g : r.grade) CHECK(g == Approx(0.05).epsilon(1e-12));
  CHECK(r.elevation[4] == Approx(6.0).epsilon(1e-12));

  std::istringstream flat("distance_m,elevation_m\n0,12\n100,12\n250,12\n");
  const auto f = parse_elevation_csv(flat);
  CHECK(f.steps() == 8);
  CHECK(max_abs(f.grade) == 0.0);

  std::istringstream offset("elevation_m,distance_m\n5,1000\n8,1060\n");
  const auto o = parse_elevation_csv(offset);
  CHECK(o.steps() == 2);
  CHECK(o.elevation[1] == Approx(6.5));
}

TEST_CASE("elevation CSV errors name the row") {
  std::istringstream unsorted("distance_m,elevation_m\n0,0\n60,1\n30,2\n");
  try {
    parse_elevation_csv(unsorted);
    FAIL("expected an ingestion error");
  } catch (const IngestError& e) {
    CHECK(e.row() == 4);
  }
  std::istringstream one("distance_m,elevation_m\n0,0\n");
  CHECK_THROWS_AS(parse_elevation_csv(one), IngestError);
  std::istringstream junk("distance_m,elevation_m\n0,0\n30,abc\n");
  try {
    parse_elevation_csv(junk);
    FAIL("expected an ingestion error");
  } catch (const IngestError& e) {
    CHECK(e.row() == 3);
  }
  std::istringstream short_row("distance_m,elevation_m\n0,0\n30\n");
  CHECK_THROWS_AS(parse_elevation_csv(short_row), IngestError);
  std::istringstream no_column("distance,elevation_m\n0,0\n30,1\n");
  CHECK_THROWS_AS(parse_elevation_csv(no_column), IngestError);
  CHECK_THROWS_AS(ingest_elevation_csv("/nonexistent/road.csv"), IngestError);
}

TEST_CASE("uniform CSV resampling is idempotent") {
  const auto road = gen_sinusoidal(5, 4500);
  std::ostringstream out;
  out << "distance_m,elevation_m\n";
  out.precision(17);
  for (std::size_t i = 0; i < road.elevation.size(); ++i) out << road.position(i) << ',' << road.elevation[i] << '\n';
  std::istringstream in(out.str());
  const auto again = parse_elevation_csv(in);
  REQUIRE(again.elevation.size() == road.elevation.size());
  for (std::size_t i = 0; i < road.elevation.size(); ++i) CHECK(again.elevation[i] == road.elevation[i]);
}

TEST_CASE("preview windows") {
  const auto road = gen_sinusoidal(2, 6000);
  const auto p0 = preview(road, 0, kNetPreviewLength);
  REQUIRE(p0.samples.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) CHECK(p0.samples[i] == road.grade[i]);

  const auto last = preview(road, road.steps() - 1, 100);
  CHECK(last.samples[0] == road.grade.back());
  for (std::size_t i = 1; i < 100; ++i) CHECK(last.samples[i] == 0.0);

  const auto a = preview(road, 37, kMpcHorizon);
  const auto b = preview(road, 38, kMpcHorizon);
  CHECK(a.origin == 37);
  for (std::size_t i = 0; i + 1 < kMpcHorizon; ++i) CHECK(a.samples[i + 1] == b.samples[i]);
}

TEST_CASE("road CSV round trip") {
  const auto road = gen_sinusoidal(9, 3600);
  std::stringstream ss;
  write_road_csv(ss, road, {{"seed", "9"}});
  CHECK(ss.str().rfind("# seed=9\nindex,position_m,elevation_m,grade\n", 0) == 0);
  const auto back = read_road_csv(ss);
  REQUIRE(back.steps() == road.steps());
  CHECK(back.ds == 30.0);
  for (std::size_t i = 0; i < road.steps(); ++i) {
    CHECK(back.grade[i] == Approx(road.grade[i]).epsilon(1e-8).margin(1e-12));
    CHECK(back.elevation[i] == Approx(road.elevation[i]).epsilon(1e-8).margin(1e-12));
  }
}
