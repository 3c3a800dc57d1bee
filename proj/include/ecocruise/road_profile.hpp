#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ecocruise/csv.hpp"

namespace ecocruise {

/// Uniformly sampled road: P+1 elevations and P grades, grade[i] being the
/// slope between elevation[i] and elevation[i+1].
struct RoadProfile {
  double ds = 30.0;
  std::vector<double> elevation;
  std::vector<double> grade;

  std::size_t steps() const { return grade.size(); }
  double length_m() const { return ds * static_cast<double>(grade.size()); }
  double position(std::size_t k) const { return ds * static_cast<double>(k); }

  static RoadProfile from_elevation(std::vector<double> elevation, double ds);
};

struct SinusoidComponent {
  double amplitude_m = 0.0;
  double wavelength_m = 1000.0;
  double phase_rad = 0.0;
};

/// Generator settings. When `components` is non-empty it is used verbatim and
/// only scaled down if it would exceed `max_grade`; otherwise 3-8 random
/// components are drawn from the seed and scaled so that max|grade| == max_grade.
struct RoadGenSpec {
  std::vector<SinusoidComponent> components;
  int min_components = 3;
  int max_components = 8;
  double min_wavelength_m = 500.0;
  double max_wavelength_m = 8000.0;
  double max_grade = 0.05;
  double lead_in_m = 500.0;  // flat start
  double ramp_m = 1000.0;    // smooth blend from flat to hilly after the lead-in
  double ds = 30.0;
};

/// Throws std::invalid_argument for length_m < 3 km.
RoadProfile gen_sinusoidal(std::uint64_t seed, double length_m, const RoadGenSpec& spec = {});

/// Reads `distance_m,elevation_m` and resamples linearly onto a uniform ds grid
/// starting at the first distance. Throws IngestError naming the offending row.
RoadProfile parse_elevation_csv(std::istream& in, double ds = 30.0);
RoadProfile ingest_elevation_csv(const std::filesystem::path& path, double ds = 30.0);

/// Fixed-length window of grades; positions past the road end read as flat.
struct GradePreview {
  std::size_t origin = 0;
  std::vector<double> samples;
};

inline constexpr std::size_t kNetPreviewLength = 100;  // 3 km at 30 m
inline constexpr std::size_t kMpcHorizon = 60;         // 1.8 km at 30 m

GradePreview preview(const RoadProfile& road, std::size_t position_index, std::size_t window_len);

/// `index,position_m,elevation_m,grade` (the last elevation row has an empty grade).
void write_road_csv(std::ostream& out, const RoadProfile& road, const Metadata& meta = {});
RoadProfile read_road_csv(std::istream& in);
RoadProfile load_road_csv(const std::filesystem::path& path);

}  // namespace ecocruise
