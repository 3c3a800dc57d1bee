#include "ecocruise/road_profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "ecocruise/errors.hpp"
#include "ecocruise/random.hpp"

namespace ecocruise {

RoadProfile RoadProfile::from_elevation(std::vector<double> elevation, double ds) {
  if (!(ds > 0.0)) throw std::invalid_argument("road spacing must be positive");
  RoadProfile r;
  r.ds = ds;
  r.elevation = std::move(elevation);
  if (r.elevation.size() >= 2) {
    r.grade.resize(r.elevation.size() - 1);
    for (std::size_t i = 0; i + 1 < r.elevation.size(); ++i)
      r.grade[i] = (r.elevation[i + 1] - r.elevation[i]) / ds;
  }
  return r;
}

namespace {

double max_abs_grade(const RoadProfile& r) {
  double m = 0.0;
  for (double g : r.grade) m = std::max(m, std::abs(g));
  return m;
}

double envelope(double s, const RoadGenSpec& spec) {
  if (s <= spec.lead_in_m) return spec.lead_in_m > 0.0 ? 0.0 : 1.0;
  if (spec.ramp_m <= 0.0) return 1.0;
  const double x = std::min(1.0, (s - spec.lead_in_m) / spec.ramp_m);
  return x * x * (3.0 - 2.0 * x);
}

}  // namespace

RoadProfile gen_sinusoidal(std::uint64_t seed, double length_m, const RoadGenSpec& spec) {
  if (length_m < 3000.0) throw std::invalid_argument("road must be at least 3 km long");
  const auto steps = static_cast<std::size_t>(std::llround(length_m / spec.ds));

  std::vector<SinusoidComponent> comps = spec.components;
  const bool random = comps.empty() && spec.max_components > 0;
  if (random) {
    Rng rng(seed);
    const auto lo = std::max(0, spec.min_components);
    const auto count = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_components - lo + 1)));
    const double log_lo = std::log(spec.min_wavelength_m);
    const double log_hi = std::log(spec.max_wavelength_m);
    for (int i = 0; i < count; ++i) {
      SinusoidComponent c;
      c.wavelength_m = std::exp(rng.uniform(log_lo, log_hi));
      // amplitude proportional to wavelength so each component has a comparable slope
      c.amplitude_m = rng.uniform(0.2, 1.0) * c.wavelength_m / (2.0 * std::numbers::pi);
      c.phase_rad = rng.uniform(0.0, 2.0 * std::numbers::pi);
      comps.push_back(c);
    }
  }

  std::vector<double> elev(steps + 1, 0.0);
  for (std::size_t i = 0; i <= steps; ++i) {
    const double s = spec.ds * static_cast<double>(i);
    double h = 0.0;
    for (const auto& c : comps) h += c.amplitude_m * std::sin(2.0 * std::numbers::pi * s / c.wavelength_m + c.phase_rad);
    elev[i] = h * envelope(s, spec);
  }
  auto road = RoadProfile::from_elevation(std::move(elev), spec.ds);

  const double peak = max_abs_grade(road);
  if (peak > 0.0 && (random || peak > spec.max_grade)) {
    const double scale = spec.max_grade / peak;
    for (auto& e : road.elevation) e *= scale;
    for (auto& g : road.grade) g = std::clamp(g * scale, -spec.max_grade, spec.max_grade);
  }
  return road;
}

RoadProfile parse_elevation_csv(std::istream& in, double ds) {
  const auto table = read_csv(in);
  const auto id = table.column("distance_m");
  const auto ie = table.column("elevation_m");
  if (table.rows.size() < 2) throw IngestError("elevation CSV needs at least 2 rows");

  std::vector<double> dist, elev;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto line = table.line_numbers[r];
    const double d = parse_double(table.rows[r][id], line);
    const double e = parse_double(table.rows[r][ie], line);
    if (!std::isfinite(d) || !std::isfinite(e)) throw IngestError("non-finite value", line);
    if (!dist.empty() && !(d > dist.back())) throw IngestError("distance not strictly increasing", line);
    dist.push_back(d);
    elev.push_back(e);
  }

  const double span = dist.back() - dist.front();
  const auto steps = static_cast<std::size_t>(std::floor(span / ds + 1e-9));
  std::vector<double> samples(steps + 1);
  std::size_t seg = 0;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double s = dist.front() + ds * static_cast<double>(i);
    while (seg + 2 < dist.size() && dist[seg + 1] < s) ++seg;
    const double t = std::clamp((s - dist[seg]) / (dist[seg + 1] - dist[seg]), 0.0, 1.0);
    samples[i] = (t == 1.0) ? elev[seg + 1] : elev[seg] + t * (elev[seg + 1] - elev[seg]);
  }
  return RoadProfile::from_elevation(std::move(samples), ds);
}

RoadProfile ingest_elevation_csv(const std::filesystem::path& path, double ds) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return parse_elevation_csv(in, ds);
}

GradePreview preview(const RoadProfile& road, std::size_t position_index, std::size_t window_len) {
  GradePreview p;
  p.origin = position_index;
  p.samples.assign(window_len, 0.0);
  for (std::size_t i = 0; i < window_len; ++i) {
    const auto k = position_index + i;
    if (k >= road.grade.size()) break;
    p.samples[i] = road.grade[k];
  }
  return p;
}

void write_road_csv(std::ostream& out, const RoadProfile& road, const Metadata& meta) {
  write_metadata(out, meta);
  out << "index,position_m,elevation_m,grade\n";
  for (std::size_t i = 0; i < road.elevation.size(); ++i) {
    out << i << ',' << fmt9(road.position(i)) << ',' << fmt9(road.elevation[i]) << ',';
    if (i < road.grade.size()) out << fmt9(road.grade[i]);
    out << '\n';
  }
}

RoadProfile read_road_csv(std::istream& in) {
  const auto table = read_csv(in);
  const auto ipos = table.column("position_m");
  const auto ie = table.column("elevation_m");
  const auto ig = table.column("grade");
  if (table.rows.size() < 2) throw IngestError("road CSV needs at least 2 rows");
  RoadProfile road;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto line = table.line_numbers[r];
    road.elevation.push_back(parse_double(table.rows[r][ie], line));
    if (r + 1 < table.rows.size()) road.grade.push_back(parse_double(table.rows[r][ig], line));
  }
  road.ds = parse_double(table.rows[1][ipos], table.line_numbers[1]) -
            parse_double(table.rows[0][ipos], table.line_numbers[0]);
  if (!(road.ds > 0.0)) throw IngestError("road positions must increase", table.line_numbers[1]);
  return road;
}

RoadProfile load_road_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return read_road_csv(in);
}

}  // namespace ecocruise
