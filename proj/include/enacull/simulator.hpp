#pragma once

// Synthetic arc generator with known ground truth.
//
// Each cell's count is Poisson with mean
//   (signal[angle] + isotropic_bg + sum of covering contamination rates) * duration / nominal,
// so "rates" are counts per nominal-length interval. Contamination comes from bursts
// (per ESA), field-of-view bands (all ESAs, clears a visibility flag) and an optional
// spun span (all ESAs, all angles). Truth is bad exactly where some contamination applies.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "enacull/core.hpp"

namespace enacull {

enum class Body : int { kSun = 0, kEarth = 1, kMoon = 2 };
inline constexpr int kBodyCount = 3;

const char* body_name(Body body);
Body parse_body(const std::string& name);

/// Inclusive index range; hi < lo denotes an empty span.
struct Span {
  int lo = 0;
  int hi = -1;
  bool empty() const { return hi < lo; }
  bool contains(int i) const { return i >= lo && i <= hi; }
};

struct BurstSpec {
  std::vector<int> esa_steps;  // ESA step values; a step between two listed steps is added
  Span angles;
  Span times;
  double rate = 0.0;
};

struct FovBandSpec {
  Body target = Body::kEarth;
  Span angles;
  Span times;
  double rate = 0.0;
};

/// Cells that produce no observation row (instrument off).
struct GapSpec {
  std::vector<int> esa_steps;  // empty = every step
  Span angles{0, kAngleBins - 1};
  Span times;
};

struct SimConfig {
  std::uint64_t seed = 0;
  OrbitArcId arc{1, 'a'};
  std::size_t n_time = 100;
  std::vector<EsaStep> esa_steps = all_esa_steps();
  std::array<double, kAngleBins> signal_profile{};
  double isotropic_bg_rate = 0.0;
  std::vector<BurstSpec> bursts;
  std::vector<FovBandSpec> fov_bands;
  std::optional<Span> spun_span;
  double spun_rate = 0.0;
  std::vector<GapSpec> gaps;
  double monitor_coupling = 0.0;
  double monitor_base_low = 1.0;
  double monitor_base_high = 0.5;
  double start_epoch_s = 0.0;
  double interval_duration_s = 60.0;
  double duration_jitter = 0.0;  // fractional half-width of uniform duration jitter, < 1
  double sme_column_ratio = 0.25;
};

/// A flat signal of `base` plus a Gaussian bump; a stand-in for ribbon-like structure.
std::array<double, kAngleBins> bump_signal_profile(double base, double peak, double center,
                                                   double width);

struct TruthLabeledArc {
  std::uint64_t seed = 0;
  ArcGrid grid;                       // carries sme and truth labels on each cell
  std::vector<std::uint8_t> fov_mask;  // [body][angle][time], 1 where the body is in view

  bool in_fov(Body body, int angle, std::size_t time) const {
    return fov_mask[(static_cast<std::size_t>(body) * kAngleBins + angle) * grid.n_time() + time] != 0;
  }
};

/// Throws kConfig naming the offending span or rate.
void validate(const SimConfig& config);

TruthLabeledArc simulate_arc(const SimConfig& config);

/// Adds a field-of-view contamination band to an existing arc: band cells gain
/// Poisson(rate) counts, become truth-bad and get the body's visibility flag cleared.
/// SME-style labels are recomputed with `sme_column_ratio`.
TruthLabeledArc inject_fov_band(const TruthLabeledArc& arc, Body target, Span angles, Span times,
                                double rate = 0.0, double monitor_coupling = 0.0,
                                double sme_column_ratio = 0.25);

/// Block labels: a (esa, time) column whose truth-bad fraction exceeds `ratio` is labeled
/// bad throughout; other cells copy truth.
void apply_sme_labels(ArcGrid& grid, double ratio);

// Truth sidecar table: orbit,arc,esa,angle_bin,time_index,truth_label,fov_earth,fov_moon,fov_sun

inline constexpr const char* kTruthHeader =
    "orbit,arc,esa,angle_bin,time_index,truth_label,fov_earth,fov_moon,fov_sun";

void write_truth_table(std::ostream& out, const std::vector<TruthLabeledArc>& arcs);

/// Copies truth labels from a sidecar table onto matching observations.
void attach_truth(std::vector<Observation>& observations, const std::filesystem::path& truth_path);

/// Observation rows for the arc; truth_label is left empty (it lives in the sidecar).
std::vector<Observation> observation_rows(const TruthLabeledArc& arc);

}  // namespace enacull
