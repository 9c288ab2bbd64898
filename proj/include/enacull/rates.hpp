#pragma once

// Good-time ENA rates per angle bin, exposure groups, and 6-degree sky maps.

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "enacull/core.hpp"
#include "enacull/pipeline.hpp"

namespace enacull {

struct EnaRate {
  OrbitArcId arc;
  int esa = 0;
  int angle = 0;
  std::int64_t good_counts = 0;
  double good_exposure_s = 0.0;
  double isotropic_bg = 0.0;  // counts/s
  double rate = 0.0;          // counts/s

  auto operator<=>(const EnaRate&) const = default;
};

struct RateConfig {
  std::optional<double> isotropic_bg_override;
  double bg_percentile = 10.0;

  void validate() const;
};

/// counts / exposure - background over the good cells of one (esa, angle) row.
/// Zero good exposure raises kMissingData.
EnaRate ena_rate(const ArcGrid& grid, const LabelGrid& labels, std::size_t esa, int angle,
                 double isotropic_bg);

/// Default: the bg_percentile-th percentile (linear interpolation between order
/// statistics) of per-angle good-time rates. kMissingData without good cells.
double estimate_isotropic_bg(const ArcGrid& grid, const LabelGrid& labels, std::size_t esa,
                             const RateConfig& config);

/// One rate per (esa, angle) with good exposure, in (esa, angle) order.
std::vector<EnaRate> compute_rates(const ArcGrid& grid, const LabelGrid& labels,
                                   const RateConfig& config);

/// Group 1..6 with lower-inclusive bounds 21, 83, 168, 277, 374 s.
int exposure_group(double exposure_s);
inline constexpr std::array<double, 5> kExposureGroupBounds = {21.0, 83.0, 168.0, 277.0, 374.0};

struct RateRatioGroup {
  int group = 0;
  std::size_t n = 0;
  std::optional<double> median_ratio;  // reference rate / candidate rate
};

/// Matches rates on (arc, esa, angle), groups by the reference exposure, and reports the
/// median ratio over pairs with a nonzero candidate rate. Always six groups.
std::vector<RateRatioGroup> rate_ratio_by_group(const std::vector<EnaRate>& reference,
                                                const std::vector<EnaRate>& candidate);

/// orbit,arc,esa,angle_bin,good_counts,good_exposure_s,isotropic_bg,rate
void write_rates(std::ostream& out, const std::vector<EnaRate>& rates);
std::vector<EnaRate> read_rates(std::istream& in, const std::string& source);

// ---------------------------------------------------------------------------
// Maps

inline constexpr int kMapRows = 30;  // latitude, south to north
inline constexpr int kMapCols = 60;  // longitude, 0 to 360
inline constexpr double kMapPixelDeg = 6.0;

/// Ecliptic direction of one (arc, angle bin).
struct PixelGeometry {
  OrbitArcId arc;
  int angle = 0;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
};

class GeometryTable {
 public:
  GeometryTable() = default;
  explicit GeometryTable(std::vector<PixelGeometry> entries);
  /// kMissingData when (arc, angle) has no entry.
  const PixelGeometry& at(const OrbitArcId& arc, int angle) const;
  const std::vector<PixelGeometry>& entries() const { return entries_; }

 private:
  std::vector<PixelGeometry> entries_;  // sorted by (arc, angle)
};

/// Each arc's swath is a great circle through the ecliptic poles: angles 0..29 climb
/// from latitude -87 to 87 on longitude L, angles 30..59 descend on L + 180. Arcs in
/// ascending order get L = k * lon_step_deg.
GeometryTable synthetic_geometry(const std::vector<OrbitArcId>& arcs, double lon_step_deg = 6.0);

/// orbit,arc,angle_bin,lat_deg,lon_deg
GeometryTable read_geometry(std::istream& in, const std::string& source);
void write_geometry(std::ostream& out, const GeometryTable& table);

/// Pixel index row * 60 + col for an ecliptic direction.
std::size_t pixel_index(double lat_deg, double lon_deg);

struct SkyMap {
  std::string tag;  // half-year label, e.g. 2019B
  int esa = 0;
  std::vector<double> value;     // NaN where empty
  std::vector<double> exposure;  // seconds

  SkyMap();
  bool empty(std::size_t pixel) const { return exposure[pixel] == 0.0; }
};

/// Exposure-weighted mean of the rates at `esa` falling in each pixel. Contributions are
/// summed in (arc, angle) order, so input order does not change the result.
SkyMap build_sky_map(const std::vector<EnaRate>& rates, const GeometryTable& geometry, int esa,
                     const std::string& tag);

/// 100 * (candidate - reference) / reference; NaN where undefined.
std::vector<double> percent_diff(const SkyMap& candidate, const SkyMap& reference);

/// 30 lines of 60 comma-separated values, south row first; NA marks empty pixels.
void write_map_grid(std::ostream& out, const std::vector<double>& values);
/// Plain PGM: empty pixels 0, others scaled linearly from the map minimum (1) to the
/// maximum (255). North is up.
void write_map_pgm(std::ostream& out, const SkyMap& map);

}  // namespace enacull
