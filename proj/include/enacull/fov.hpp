#pragma once

// Field-of-view exclusion: which spin bins see the Sun, Moon or Earth (plus
// magnetosphere) at evenly spaced sampling times.
//
// Spin-bin numbering: bin k's center lies at azimuth 6k degrees in the spin plane,
// measured from the projection of ecliptic north (+z of the common inertial frame)
// and increasing right-handedly about the spin axis. When the spin axis is parallel
// to ecliptic north the +x projection is used as the anchor instead.

#include <array>
#include <bitset>
#include <cmath>
#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "enacull/core.hpp"
#include "enacull/simulator.hpp"

namespace enacull::fov {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return (1.0 / norm(v)) * v; }

inline constexpr double kUnitTolerance = 1e-9;
inline constexpr double kDegenerateAxisRad = 1e-6;

struct FovConfig {
  double fov_diameter_deg = 14.0;
  double magnetosphere_radius_re = 12.0;
  double earth_radius_km = 6378.137;
  int spins_per_sample = 48;
  double spin_period_s = 15.0;

  void validate() const;
};

struct PointingRecord {
  double valid_from_s = 0.0;
  Vec3 spin_axis;
};

/// Time-ordered, duplicate-free pointing history.
class PointingLog {
 public:
  /// Sorts by valid_from, collapses exact duplicates and checks unit norms.
  /// Two different axes sharing a valid_from raise kValidation.
  explicit PointingLog(std::vector<PointingRecord> records);

  const std::vector<PointingRecord>& records() const { return records_; }
  /// Record in force at `time_s`; kCoverage if `time_s` precedes the first record.
  const PointingRecord& at(double time_s) const;

 private:
  std::vector<PointingRecord> records_;
};

struct EphemerisSample {
  double epoch_s = 0.0;
  Vec3 position_km;  // body relative to the spacecraft
};

struct BodyEphemeris {
  Body body = Body::kEarth;
  std::vector<EphemerisSample> samples;

  /// Linear interpolation between bracketing samples; kCoverage outside the table.
  Vec3 position_at(double time_s) const;
};

using BinSet = std::bitset<kAngleBins>;

/// Angle between unit vectors in degrees, in [0, 180].
double angular_separation(const Vec3& a, const Vec3& b);

/// Unit vector pointing at the center of spin bin `bin` for the given spin axis.
Vec3 bin_center(const Vec3& spin_axis, int bin);

/// Spin bin whose center is nearest the target's azimuth. An exact half-bin tie
/// goes to the lower bin index. kGeometry when the target is within 1e-6 rad of
/// the spin axis (or its opposite).
AngleBin nearest_spin_bin(const Vec3& target_dir, const Vec3& spin_axis);

/// Bins contaminated by `body` at `time_s`: empty when the body stays further than
/// fov/2 + extent from the spin plane, else the nearest bin plus every bin whose
/// center lies within fov/2 + extent of the body. Earth's extent is the angular
/// radius of the magnetosphere sphere.
BinSet mark_bad_bins(double time_s, Body body, const PointingLog& pointing,
                     const BodyEphemeris& ephemeris, const FovConfig& config);

/// Core check for a body direction already expressed as a unit vector.
BinSet bad_bins_for_direction(const Vec3& body_dir, const Vec3& spin_axis, double half_width_deg);

/// Half width (degrees) of the exclusion cone for a body at `distance_km`.
double exclusion_half_width(Body body, double distance_km, const FovConfig& config);

struct MaskSample {
  double epoch_s = 0.0;
  std::array<BinSet, kBodyCount> bad{};  // indexed by Body

  BinSet merged_bad() const { return bad[0] | bad[1] | bad[2]; }
  /// Ascending bins free of every body.
  std::vector<int> good_bins() const;
};

struct ExclusionMask {
  std::vector<MaskSample> samples;
};

/// Evaluates every body with an ephemeris at t0, t0 + dt, ... <= t1 where
/// dt = spins_per_sample * spin_period_s.
ExclusionMask build_masks(const std::vector<PointingRecord>& pointings,
                          const std::vector<BodyEphemeris>& ephemerides, const FovConfig& config,
                          double t0_s, double t1_s);

/// Per-(body, angle, time) flags for a grid's time axis. A sample contributes to an
/// interval when it falls inside [start, start + duration) or is the latest sample at
/// or before the interval start.
std::vector<std::uint8_t> cell_mask(const ExclusionMask& mask,
                                    const std::vector<TimeInterval>& times);

// Files.
std::vector<PointingRecord> read_pointing(std::istream& in);
std::vector<PointingRecord> read_pointing(const std::filesystem::path& path);
std::vector<BodyEphemeris> read_ephemeris(std::istream& in);
std::vector<BodyEphemeris> read_ephemeris(const std::filesystem::path& path);
/// `epoch_s,body,bad_bins` with bins joined by ';'.
void write_mask(std::ostream& out, const ExclusionMask& mask);
ExclusionMask read_mask(std::istream& in);

}  // namespace enacull::fov
