#pragma once

// Canonical data model: arcs, observations, dense per-arc grids.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "enacull/error.hpp"

namespace enacull {

inline constexpr int kMinEsaStep = 2;
inline constexpr int kMaxEsaStep = 6;
inline constexpr int kAngleBins = 60;
inline constexpr double kAngleBinWidthDeg = 6.0;

/// Energy passband index; only steps 2..6 carry usable data.
class EsaStep {
 public:
  constexpr EsaStep() = default;
  explicit EsaStep(int value) : value_(value) {
    require(value >= kMinEsaStep && value <= kMaxEsaStep, ErrorCode::kValidation,
            "ESA step out of range [2,6]: " + std::to_string(value));
  }
  constexpr int value() const { return value_; }
  auto operator<=>(const EsaStep&) const = default;

 private:
  int value_ = kMinEsaStep;
};

/// One of the 60 six-degree spin-phase sectors; bin 59 is adjacent to bin 0.
class AngleBin {
 public:
  constexpr AngleBin() = default;
  explicit AngleBin(int index) : index_(index) {
    require(index >= 0 && index < kAngleBins, ErrorCode::kValidation,
            "angle bin out of range [0,59]: " + std::to_string(index));
  }
  constexpr int index() const { return index_; }
  AngleBin shifted(int delta) const {
    return AngleBin(((index_ + delta) % kAngleBins + kAngleBins) % kAngleBins);
  }
  auto operator<=>(const AngleBin&) const = default;

 private:
  int index_ = 0;
};

struct TimeInterval {
  int index = 0;
  double start_epoch_s = 0.0;
  double duration_s = 0.0;  // 0 only for columns with no observations at all
  auto operator<=>(const TimeInterval&) const = default;
};

struct OrbitArcId {
  int orbit = 0;
  char arc = 'a';

  std::string str() const { return std::to_string(orbit) + arc; }
  auto operator<=>(const OrbitArcId&) const = default;
};

/// Parses "471a" / "471b".
OrbitArcId parse_orbit_arc(const std::string& text);

enum class Label : std::int8_t { kBad = 0, kGood = 1 };

std::optional<Label> parse_label(const std::string& text);
const char* label_name(std::optional<Label> label);

struct Observation {
  OrbitArcId arc;
  EsaStep esa;
  AngleBin angle;
  TimeInterval time;
  std::int64_t count = 0;
  std::int64_t bg_low = 0;
  std::int64_t bg_high = 0;
  bool earth_not_visible = true;
  bool moon_not_visible = true;
  bool sun_not_visible = true;
  std::optional<Label> sme_label;
  std::optional<Label> truth_label;

  bool operator==(const Observation&) const = default;
};

/// Dense [esa][angle][time] grid for one orbit arc. Cells without an input row are masked.
class ArcGrid {
 public:
  ArcGrid() = default;
  ArcGrid(OrbitArcId arc, std::vector<EsaStep> esa_steps, std::vector<TimeInterval> times);

  const OrbitArcId& arc() const { return arc_; }
  const std::vector<EsaStep>& esa_steps() const { return esa_steps_; }
  const std::vector<TimeInterval>& times() const { return times_; }
  std::size_t n_esa() const { return esa_steps_.size(); }
  std::size_t n_time() const { return times_.size(); }
  std::size_t n_cells() const { return n_esa() * kAngleBins * n_time(); }
  std::size_t n_present() const;

  /// Position of `esa` in esa_steps(); throws when the step is not part of this grid.
  std::size_t esa_index(EsaStep esa) const;

  std::size_t index(std::size_t esa, int angle, std::size_t time) const {
    return (esa * kAngleBins + static_cast<std::size_t>(angle)) * times_.size() + time;
  }

  bool present(std::size_t esa, int angle, std::size_t time) const {
    return present_[index(esa, angle, time)] != 0;
  }
  std::int64_t count(std::size_t esa, int angle, std::size_t time) const {
    return counts_[index(esa, angle, time)];
  }
  bool present_at(std::size_t cell) const { return present_[cell] != 0; }
  std::int64_t count_at(std::size_t cell) const { return counts_[cell]; }
  std::int64_t bg_low_at(std::size_t cell) const { return bg_low_[cell]; }
  std::int64_t bg_high_at(std::size_t cell) const { return bg_high_[cell]; }
  bool earth_nv_at(std::size_t cell) const { return (flags_[cell] & kEarthNv) != 0; }
  bool moon_nv_at(std::size_t cell) const { return (flags_[cell] & kMoonNv) != 0; }
  bool sun_nv_at(std::size_t cell) const { return (flags_[cell] & kSunNv) != 0; }
  /// -1 absent, 0 bad, 1 good.
  std::int8_t sme_at(std::size_t cell) const { return sme_[cell]; }
  std::int8_t truth_at(std::size_t cell) const { return truth_[cell]; }

  /// Full record stored at a present cell.
  Observation observation(std::size_t esa, int angle, std::size_t time) const;

  /// Stores an observation; throws kConflict if the cell is already filled.
  void set(const Observation& obs, std::size_t esa, std::size_t time);

  // Construction-time mutators used by the simulator; cells must be present.
  void add_counts_at(std::size_t cell, std::int64_t count, std::int64_t bg_low,
                     std::int64_t bg_high);
  void set_visibility_at(std::size_t cell, bool earth_nv, bool moon_nv, bool sun_nv);
  void set_sme_at(std::size_t cell, std::int8_t label) { sme_[cell] = label; }
  void set_truth_at(std::size_t cell, std::int8_t label) { truth_[cell] = label; }

  /// All present cells back as observations, in (esa, angle, time) order.
  std::vector<Observation> flatten() const;

 private:
  enum FlagBits : std::uint8_t { kPresent = 1, kEarthNv = 2, kMoonNv = 4, kSunNv = 8 };

  OrbitArcId arc_;
  std::vector<EsaStep> esa_steps_;
  std::vector<TimeInterval> times_;
  std::vector<std::int64_t> counts_;
  std::vector<std::int64_t> bg_low_;
  std::vector<std::int64_t> bg_high_;
  std::vector<std::uint8_t> present_;
  std::vector<std::uint8_t> flags_;
  std::vector<std::int8_t> sme_;
  std::vector<std::int8_t> truth_;
};

/// Groups `observations` by arc and builds one grid per arc, keyed in arc order.
std::vector<ArcGrid> build_grids(const std::vector<Observation>& observations);

/// Builds the grid for a single arc. The ESA axis defaults to steps 2..6 and the
/// time axis spans 0..max(time_index); both can be widened via the optional inputs.
ArcGrid build_grid(const std::vector<Observation>& observations, OrbitArcId arc,
                   std::vector<EsaStep> esa_steps = {}, std::size_t min_n_time = 0);

std::vector<EsaStep> all_esa_steps();

// Observation table I/O.

inline constexpr const char* kObservationHeader =
    "orbit,arc,esa,angle_bin,time_index,start_epoch_s,duration_s,count,bg_low,bg_high,"
    "earth_nv,moon_nv,sun_nv,sme_label,truth_label";

std::vector<Observation> ingest_observations(const std::filesystem::path& path);
std::vector<Observation> parse_observations(std::istream& in);
void write_observations(std::ostream& out, const std::vector<Observation>& observations);
void write_observations(const std::filesystem::path& path,
                        const std::vector<Observation>& observations);

}  // namespace enacull
