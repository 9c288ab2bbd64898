#include "enacull/pipeline.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "enacull/numeric.hpp"
#include "enacull/table.hpp"

namespace enacull {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

LabelGrid empty_labels(const ArcGrid& grid, int stage) {
  LabelGrid out;
  out.stage = stage;
  for (const auto& e : grid.esa_steps()) out.esa_steps.push_back(e.value());
  out.n_time = grid.n_time();
  out.labels.assign(grid.n_cells(), -1);
  out.probability.assign(grid.n_cells(), kNaN);
  return out;
}

void check_shape(const ArcGrid& grid, const ProbabilityGrid& prob) {
  require(prob.n_esa == grid.n_esa() && prob.n_time == grid.n_time(), ErrorCode::kContract,
          "probability grid shape does not match the arc grid");
}
}  // namespace

void PipelineConfig::validate() const {
  require(threshold >= 0.0 && threshold <= 1.0, ErrorCode::kConfig,
          "pipeline threshold must lie in [0,1]");
  require(stage3_low >= 0.0 && stage3_low <= 1.0, ErrorCode::kConfig,
          "stage3_low must lie in [0,1]");
  require(stage3_col_frac >= 0.0 && stage3_col_frac <= 1.0, ErrorCode::kConfig,
          "stage3_col_frac must lie in [0,1]");
  require(stage3_run_len >= 1, ErrorCode::kConfig, "stage3_run_len must be >= 1");
}

ProbabilityGrid::ProbabilityGrid(std::size_t esa, std::size_t time)
    : n_esa(esa), n_time(time), values(esa * kAngleBins * time, kNaN) {}

bool ProbabilityGrid::masked(std::size_t cell) const { return std::isnan(values[cell]); }

std::size_t LabelGrid::count(std::int8_t label) const {
  std::size_t n = 0;
  for (const auto l : labels) n += l == label;
  return n;
}

FovCells fov_cells_from_visibility(const ArcGrid& grid) {
  FovCells out(grid.n_cells(), 0);
  for (std::size_t c = 0; c < grid.n_cells(); ++c) {
    if (grid.present_at(c)) {
      out[c] = !(grid.earth_nv_at(c) && grid.moon_nv_at(c) && grid.sun_nv_at(c));
    }
  }
  return out;
}

FovCells fov_cells_from_mask(const ArcGrid& grid, std::span<const std::uint8_t> body_mask) {
  const std::size_t plane = kAngleBins * grid.n_time();
  require(body_mask.size() == 3 * plane, ErrorCode::kContract,
          "field-of-view mask does not match the grid time axis");
  FovCells out(grid.n_cells(), 0);
  for (std::size_t e = 0; e < grid.n_esa(); ++e) {
    for (std::size_t i = 0; i < plane; ++i) {
      const bool flagged = body_mask[i] || body_mask[plane + i] || body_mask[2 * plane + i];
      out[e * plane + i] = flagged && grid.present_at(e * plane + i);
    }
  }
  return out;
}

ProbabilityGrid stage1(const Forest& forest, const FeatureMatrix& matrix, const ArcGrid& grid) {
  ProbabilityGrid prob(grid.n_esa(), grid.n_time());
  const auto p = predict_proba(forest, matrix);
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    require(matrix.keys[r].arc == grid.arc(), ErrorCode::kContract,
            "feature matrix row belongs to another arc");
    prob.values[matrix.cells[r]] = p[r];
  }
  return prob;
}

LabelGrid stage1_labels(const ArcGrid& grid, const ProbabilityGrid& prob,
                        const PipelineConfig& config) {
  config.validate();
  check_shape(grid, prob);
  LabelGrid out = empty_labels(grid, 1);
  for (std::size_t c = 0; c < grid.n_cells(); ++c) {
    if (!grid.present_at(c) || prob.masked(c)) continue;
    out.probability[c] = prob.values[c];
    out.labels[c] = prob.values[c] >= config.threshold ? 1 : 0;
  }
  return out;
}

Stage2Result stage2(const ArcGrid& grid, const ProbabilityGrid& prob, const FovCells& fov,
                    const PipelineConfig& config) {
  config.validate();
  check_shape(grid, prob);
  require(fov.empty() || fov.size() == grid.n_cells(), ErrorCode::kContract,
          "field-of-view cell flags do not match the grid");
  Stage2Result out;
  out.labels = empty_labels(grid, 2);
  const std::size_t n_esa = grid.n_esa();
  const std::size_t n_time = grid.n_time();
  out.column_probability.assign(n_esa * n_time, kNaN);
  out.labels.column_good.assign(n_esa * n_time, 0);

  const auto n_columns = static_cast<std::ptrdiff_t>(n_esa * n_time);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t col = 0; col < n_columns; ++col) {
    const std::size_t e = static_cast<std::size_t>(col) / n_time;
    const std::size_t t = static_cast<std::size_t>(col) % n_time;
    CompensatedSum sum;
    std::size_t n = 0;
    for (int a = 0; a < kAngleBins; ++a) {
      const std::size_t c = prob.index(e, a, t);
      if (!grid.present_at(c) || prob.masked(c)) continue;
      sum.add(prob.values[c]);
      ++n;
    }
    if (n == 0) continue;
    const double mean = sum.value() / static_cast<double>(n);
    const bool good = mean >= config.threshold;
    out.column_probability[static_cast<std::size_t>(col)] = mean;
    out.labels.column_good[static_cast<std::size_t>(col)] = good;
    for (int a = 0; a < kAngleBins; ++a) {
      const std::size_t c = prob.index(e, a, t);
      if (!grid.present_at(c) || prob.masked(c)) continue;
      out.labels.probability[c] = mean;
      out.labels.labels[c] = good && !(!fov.empty() && fov[c]) ? 1 : 0;
    }
  }

  for (std::size_t e = 0; e < n_esa; ++e) {
    for (std::size_t t = 0; t < n_time; ++t) {
      if (!std::isnan(out.column_probability[e * n_time + t])) continue;
      bool any_present = false;
      for (int a = 0; a < kAngleBins && !any_present; ++a) any_present = grid.present(e, a, t);
      out.diagnostics.push_back(fmt::format(
          "arc {} esa {} time {}: no {} cells; column labeled bad", grid.arc().str(),
          grid.esa_steps()[e].value(), t, any_present ? "scored" : "unmasked"));
    }
  }
  return out;
}

LabelGrid stage3(const ProbabilityGrid& prob, const LabelGrid& s2, const PipelineConfig& config) {
  config.validate();
  require(s2.stage == 2 && s2.column_good.size() == s2.n_esa() * s2.n_time, ErrorCode::kContract,
          "stage 3 needs stage-2 labels");
  require(prob.n_esa == s2.n_esa() && prob.n_time == s2.n_time, ErrorCode::kContract,
          "probability grid shape does not match the labels");
  LabelGrid out = s2;
  out.stage = 3;
  const std::size_t n_time = s2.n_time;
  const auto run_len = static_cast<std::size_t>(config.stage3_run_len);

  const auto n_esa = static_cast<std::ptrdiff_t>(s2.n_esa());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ei = 0; ei < n_esa; ++ei) {
    const auto e = static_cast<std::size_t>(ei);
    std::vector<std::uint8_t> candidate(n_time, 0);
    for (std::size_t t = 0; t < n_time; ++t) {
      if (!s2.column_good[e * n_time + t]) continue;
      std::size_t n = 0;
      std::size_t low = 0;
      for (int a = 0; a < kAngleBins; ++a) {
        const std::size_t c = prob.index(e, a, t);
        if (s2.labels[c] < 0 || prob.masked(c)) continue;
        ++n;
        low += prob.values[c] < config.stage3_low;
      }
      candidate[t] = n > 0 && static_cast<double>(low) >= config.stage3_col_frac * static_cast<double>(n);
    }
    std::size_t t = 0;
    while (t < n_time) {
      if (!candidate[t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < n_time && candidate[end]) ++end;
      if (end - t >= run_len) {
        for (std::size_t u = t; u < end; ++u) {
          out.column_good[e * n_time + u] = 0;
          for (int a = 0; a < kAngleBins; ++a) {
            const std::size_t c = out.index(e, a, u);
            if (out.labels[c] >= 0) out.labels[c] = 0;
          }
        }
      }
      t = end;
    }
  }
  return out;
}

PipelineResult run_pipeline(const ProbabilityGrid& prob, const ArcGrid& grid, const FovCells& fov,
                            const PipelineConfig& config) {
  PipelineResult r;
  r.probability = prob;
  r.stage1 = stage1_labels(grid, prob, config);
  r.stage2 = stage2(grid, prob, fov, config);
  r.stage3 = stage3(prob, r.stage2.labels, config);
  return r;
}

PipelineResult run_pipeline(const Forest& forest, const FeatureMatrix& matrix, const ArcGrid& grid,
                            const FovCells& fov, const PipelineConfig& config) {
  return run_pipeline(stage1(forest, matrix, grid), grid, fov, config);
}

// ---------------------------------------------------------------------------
// Good-times lists

GoodTimesList export_goodtimes(const LabelGrid& labels, const ArcGrid& grid) {
  require(labels.column_good.size() == labels.n_esa() * labels.n_time, ErrorCode::kContract,
          "good-times export needs column labels (stage 2 or 3)");
  GoodTimesList out;
  out.arc = grid.arc();
  const std::size_t n_time = labels.n_time;
  for (std::size_t e = 0; e < labels.n_esa(); ++e) {
    const int esa = labels.esa_steps[e];
    std::size_t t = 0;
    while (t < n_time) {
      if (!labels.column_good[e * n_time + t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < n_time && labels.column_good[e * n_time + end]) ++end;
      out.spans.push_back({esa, static_cast<int>(t), static_cast<int>(end - 1)});
      for (std::size_t u = t; u < end; ++u) {
        for (int a = 0; a < kAngleBins; ++a) {
          if (labels.at(e, a, u) == 0) out.exceptions.push_back({esa, static_cast<int>(u), a});
        }
      }
      t = end;
    }
  }
  return out;
}

LabelGrid expand_goodtimes(const GoodTimesList& list, const ArcGrid& grid) {
  LabelGrid out = empty_labels(grid, 3);
  const std::size_t n_time = grid.n_time();
  out.column_good.assign(grid.n_esa() * n_time, 0);
  for (const auto& s : list.spans) {
    const std::size_t e = grid.esa_index(EsaStep(s.esa));
    require(s.start >= 0 && s.start <= s.end && static_cast<std::size_t>(s.end) < n_time,
            ErrorCode::kValidation,
            fmt::format("good-times span [{},{}] outside the arc", s.start, s.end));
    for (int t = s.start; t <= s.end; ++t) out.column_good[e * n_time + static_cast<std::size_t>(t)] = 1;
  }
  for (std::size_t c = 0; c < grid.n_cells(); ++c) {
    if (!grid.present_at(c)) continue;
    const std::size_t t = c % n_time;
    const std::size_t e = c / (kAngleBins * n_time);
    out.labels[c] = out.column_good[e * n_time + t];
  }
  for (const auto& x : list.exceptions) {
    const std::size_t c = grid.index(grid.esa_index(EsaStep(x.esa)), AngleBin(x.angle).index(),
                                     static_cast<std::size_t>(x.time));
    if (out.labels[c] >= 0) out.labels[c] = 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

void write_label_grid(std::ostream& out, const LabelGrid& labels) {
  out << "esa,angle_bin,time_index,stage,label,probability\n";
  for (std::size_t e = 0; e < labels.n_esa(); ++e) {
    for (int a = 0; a < kAngleBins; ++a) {
      for (std::size_t t = 0; t < labels.n_time; ++t) {
        const std::size_t c = labels.index(e, a, t);
        if (labels.labels[c] < 0) continue;
        const double p = labels.probability[c];
        out << fmt::format("{},{},{},{},{},{}\n", labels.esa_steps[e], a, t, labels.stage,
                           labels.labels[c] ? "good" : "bad",
                           std::isnan(p) ? std::string("NA") : fmt::format("{}", p));
      }
    }
  }
}

LabelGrid read_label_grid(std::istream& in, const ArcGrid& grid, const std::string& source) {
  table::Reader reader(in, source);
  reader.require_columns({"esa", "angle_bin", "time_index", "stage", "label", "probability"});
  LabelGrid out = empty_labels(grid, 0);
  bool first = true;
  while (reader.next()) {
    const auto stage = static_cast<int>(reader.as_int("stage"));
    if (first) out.stage = stage;
    require(stage == out.stage, ErrorCode::kValidation, reader.where() + ": mixed stages");
    first = false;
    const auto esa = static_cast<int>(reader.as_int("esa"));
    const auto angle = static_cast<int>(reader.as_int("angle_bin"));
    const auto time = reader.as_int("time_index");
    require(time >= 0 && static_cast<std::size_t>(time) < grid.n_time(), ErrorCode::kValidation,
            reader.where() + ": time_index outside the arc");
    const std::size_t c =
        grid.index(grid.esa_index(EsaStep(esa)), AngleBin(angle).index(), static_cast<std::size_t>(time));
    const auto label = parse_label(reader.field("label"));
    require(label.has_value(), ErrorCode::kValidation, reader.where() + ": empty label");
    out.labels[c] = static_cast<std::int8_t>(*label);
    const std::string& p = reader.field("probability");
    out.probability[c] = p == "NA" ? kNaN : reader.as_double("probability");
  }
  return out;
}

void write_goodtimes(std::ostream& out, const GoodTimesList& list) {
  out << "esa,span_start_index,span_end_index\n";
  for (const auto& s : list.spans) out << fmt::format("{},{},{}\n", s.esa, s.start, s.end);
}

void write_goodtime_exceptions(std::ostream& out, const GoodTimesList& list) {
  out << "esa,time_index,angle_bin\n";
  for (const auto& x : list.exceptions) out << fmt::format("{},{},{}\n", x.esa, x.time, x.angle);
}

namespace {
LabelGrid reference_grid(const ArcGrid& grid, bool truth) {
  LabelGrid out = empty_labels(grid, 0);
  for (std::size_t c = 0; c < grid.n_cells(); ++c) {
    if (grid.present_at(c)) out.labels[c] = truth ? grid.truth_at(c) : grid.sme_at(c);
  }
  return out;
}
}  // namespace

LabelGrid sme_label_grid(const ArcGrid& grid) { return reference_grid(grid, false); }
LabelGrid truth_label_grid(const ArcGrid& grid) { return reference_grid(grid, true); }

}  // namespace enacull
