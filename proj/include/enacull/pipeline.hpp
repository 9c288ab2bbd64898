#pragma once

// Three-stage culling: per-cell probabilities, per-column aggregation with
// field-of-view exclusion, and removal of low-probability runs.

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "enacull/core.hpp"
#include "enacull/features.hpp"
#include "enacull/forest.hpp"

namespace enacull {

struct PipelineConfig {
  double threshold = 0.40;
  double stage3_low = 0.40;
  double stage3_col_frac = 0.5;
  int stage3_run_len = 3;

  void validate() const;
};

/// Per-cell probabilities in ArcGrid layout; NaN where the cell is masked.
struct ProbabilityGrid {
  std::size_t n_esa = 0;
  std::size_t n_time = 0;
  std::vector<double> values;

  ProbabilityGrid() = default;
  ProbabilityGrid(std::size_t n_esa, std::size_t n_time);
  std::size_t index(std::size_t esa, int angle, std::size_t time) const {
    return (esa * kAngleBins + static_cast<std::size_t>(angle)) * n_time + time;
  }
  double at(std::size_t esa, int angle, std::size_t time) const {
    return values[index(esa, angle, time)];
  }
  bool masked(std::size_t cell) const;
};

/// Labels in ArcGrid layout: -1 masked, 0 bad, 1 good.
struct LabelGrid {
  int stage = 1;
  std::vector<int> esa_steps;  // step value of each ESA row
  std::size_t n_time = 0;
  std::vector<std::int8_t> labels;
  /// Stage 1: the cell's probability. Stages 2 and 3: the column aggregate.
  std::vector<double> probability;
  /// [esa][time] column decision; empty for stage 1.
  std::vector<std::uint8_t> column_good;

  std::size_t n_esa() const { return esa_steps.size(); }
  std::size_t index(std::size_t esa, int angle, std::size_t time) const {
    return (esa * kAngleBins + static_cast<std::size_t>(angle)) * n_time + time;
  }
  std::int8_t at(std::size_t esa, int angle, std::size_t time) const {
    return labels[index(esa, angle, time)];
  }
  std::size_t count(std::int8_t label) const;
};

/// Cells flagged for field-of-view exclusion, ArcGrid layout.
using FovCells = std::vector<std::uint8_t>;

/// Flags every present cell whose record says some body was in view.
FovCells fov_cells_from_visibility(const ArcGrid& grid);
/// Broadcasts a [body][angle][time] mask (fov::cell_mask layout) to every ESA row.
FovCells fov_cells_from_mask(const ArcGrid& grid, std::span<const std::uint8_t> body_mask);

/// Probability of every matrix row scattered into the grid layout.
ProbabilityGrid stage1(const Forest& forest, const FeatureMatrix& matrix, const ArcGrid& grid);
/// Thresholds stage-1 probabilities; p >= threshold is good.
LabelGrid stage1_labels(const ArcGrid& grid, const ProbabilityGrid& prob,
                        const PipelineConfig& config);

struct Stage2Result {
  std::vector<double> column_probability;  // [esa][time]; NaN for fully masked columns
  LabelGrid labels;
  std::vector<std::string> diagnostics;
};

/// Column mean of unmasked probabilities against the threshold; flagged cells are
/// then forced bad. `fov` may be empty.
Stage2Result stage2(const ArcGrid& grid, const ProbabilityGrid& prob, const FovCells& fov,
                    const PipelineConfig& config);

/// Flips maximal runs of at least run_len consecutive stage-2-good columns whose
/// fraction of unmasked cells below stage3_low is at least stage3_col_frac.
LabelGrid stage3(const ProbabilityGrid& prob, const LabelGrid& stage2_labels,
                 const PipelineConfig& config);

struct PipelineResult {
  ProbabilityGrid probability;
  LabelGrid stage1;
  Stage2Result stage2;
  LabelGrid stage3;
};

PipelineResult run_pipeline(const Forest& forest, const FeatureMatrix& matrix, const ArcGrid& grid,
                            const FovCells& fov, const PipelineConfig& config);
/// Same stages from precomputed probabilities.
PipelineResult run_pipeline(const ProbabilityGrid& prob, const ArcGrid& grid, const FovCells& fov,
                            const PipelineConfig& config);

struct GoodSpan {
  int esa = 0;
  int start = 0;  // inclusive time indices
  int end = 0;
};

/// A bad cell inside a good span.
struct GoodTimeException {
  int esa = 0;
  int time = 0;
  int angle = 0;
};

struct GoodTimesList {
  OrbitArcId arc;
  std::vector<GoodSpan> spans;  // ordered by (esa, start), non-overlapping
  std::vector<GoodTimeException> exceptions;
};

/// Contiguous good columns per ESA; bad cells inside them become exceptions.
GoodTimesList export_goodtimes(const LabelGrid& labels, const ArcGrid& grid);
/// Rebuilds a label grid on the grid's present cells from spans and exceptions.
LabelGrid expand_goodtimes(const GoodTimesList& list, const ArcGrid& grid);

/// esa,angle_bin,time_index,stage,label,probability (present cells only).
void write_label_grid(std::ostream& out, const LabelGrid& labels);
/// Reads a label grid written by write_label_grid onto the grid's layout.
LabelGrid read_label_grid(std::istream& in, const ArcGrid& grid, const std::string& source);
/// esa,span_start_index,span_end_index
void write_goodtimes(std::ostream& out, const GoodTimesList& list);
/// esa,time_index,angle_bin
void write_goodtime_exceptions(std::ostream& out, const GoodTimesList& list);

/// Label grid holding a grid's SME (or truth) labels, stage 0.
LabelGrid sme_label_grid(const ArcGrid& grid);
LabelGrid truth_label_grid(const ArcGrid& grid);

}  // namespace enacull
