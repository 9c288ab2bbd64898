#pragma once

// The 28 per-observation predictors: raw record fields, row/column/ESA moments,
// the column-mean ratio, and the eight grid neighbors.

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "enacull/core.hpp"

namespace enacull {

enum class Feature : int {
  kEsaStep,
  kAngleBin,
  kTimeIndex,
  kOrbit,
  kCounts,
  kCountsLower,
  kCountsUpper,
  kEarthNotVisible,
  kMoonNotVisible,
  kSunNotVisible,
  kSumAngle,
  kMeanAngle,
  kVarAngle,
  kSumTime,
  kMeanTime,
  kVarTime,
  kMeanThetaCountsRatio,
  kSumEsa,
  kMeanEsa,
  kVarEsa,
  kNbrUp,
  kNbrDown,
  kNbrRight,
  kNbrLeft,
  kNbrUpLeft,
  kNbrUpRight,
  kNbrDownRight,
  kNbrDownLeft,
};

inline constexpr std::size_t kFeatureCount = 28;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "esa_step",      "angle_bin",    "time_index",    "orbit",
    "counts",        "counts_lower", "counts_upper",  "earth_nv",
    "moon_nv",       "sun_nv",       "sum_angle",     "mean_angle",
    "var_angle",     "sum_time",     "mean_time",     "var_time",
    "mean_theta_counts_ratio",       "sum_esa",       "mean_esa",
    "var_esa",       "nbr_up",       "nbr_down",      "nbr_right",
    "nbr_left",      "nbr_up_left",  "nbr_up_right",  "nbr_down_right",
    "nbr_down_left"};

constexpr std::size_t idx(Feature f) { return static_cast<std::size_t>(f); }

/// FNV-1a over the ordered feature names; stored with fitted forests.
std::uint64_t feature_schema_fingerprint();

inline constexpr double kRatioFloor = 1e-6;

using FeatureVector = std::array<double, kFeatureCount>;

struct CellKey {
  OrbitArcId arc;
  int esa = 0;
  int angle = 0;
  int time = 0;
  auto operator<=>(const CellKey&) const = default;
};

/// One row per present grid cell, row-major values.
struct FeatureMatrix {
  std::vector<CellKey> keys;
  std::vector<std::size_t> cells;  // grid cell index of each row
  std::vector<double> values;
  std::vector<std::int8_t> sme;    // -1 absent, 0 bad, 1 good
  std::vector<std::int8_t> truth;

  std::size_t rows() const { return keys.size(); }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * kFeatureCount, kFeatureCount};
  }
  double at(std::size_t r, Feature f) const { return values[r * kFeatureCount + idx(f)]; }
  FeatureVector vector(std::size_t r) const;

  void append(const FeatureMatrix& other);
};

/// Count moments over present cells. Variance is the unbiased sample variance, 0 for n = 1.
struct MomentStats {
  double sum = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  std::size_t n = 0;
};

/// Moments of one (esa, angle) row over time. kMissingData if the row is fully masked.
MomentStats angle_bin_stats(const ArcGrid& grid, std::size_t esa, int angle);
/// Moments of one (esa, time) column over the 60 angles.
MomentStats time_interval_stats(const ArcGrid& grid, std::size_t esa, std::size_t time);
/// Moments over the ESA steps present at (angle, time).
MomentStats across_esa_stats(const ArcGrid& grid, int angle, std::size_t time);

/// mean_time(t) / max(min over populated columns of mean_time, 1e-6), within one ESA.
double mean_theta_counts_ratio(const ArcGrid& grid, std::size_t esa, std::size_t time);

/// Neighbor counts in Feature order (up, down, right, left, up_left, up_right,
/// down_right, down_left). "Up" is angle + 1 and "right" is time + 1; the diagonals are
///   up_left = (angle + 1, time + 1),  up_right = (angle + 1, time - 1),
///   down_right = (angle - 1, time + 1), down_left = (angle - 1, time - 1).
/// Angles wrap modulo 60. A neighbor past either end of the arc, or masked, repeats
/// the center count.
std::array<double, 8> neighbor_counts(const ArcGrid& grid, std::size_t esa, int angle,
                                      std::size_t time);

/// Optional per-(body, angle, time) field-of-view flags (layout of fov::cell_mask).
/// A flagged cell has the matching "not visible" feature forced to 0.
using FovCellFlags = std::vector<std::uint8_t>;

/// Aggregate-then-fill kernel, parallel over grid rows when OpenMP is enabled.
FeatureMatrix compute_features(const ArcGrid& grid, const FovCellFlags* fov = nullptr);

/// Serial per-cell evaluation through the single-cell operations above. Slow; kept as
/// the reference the parallel kernel is tested and benchmarked against.
FeatureMatrix compute_features_reference(const ArcGrid& grid, const FovCellFlags* fov = nullptr);

/// orbit,arc,esa,angle_bin,time_index,<28 feature columns>
void write_feature_matrix(std::ostream& out, const FeatureMatrix& matrix);

}  // namespace enacull
