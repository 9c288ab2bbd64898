#include "enacull/core.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "enacull/table.hpp"

namespace enacull {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchema: return "schema error";
    case ErrorCode::kValidation: return "validation error";
    case ErrorCode::kConflict: return "conflict error";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kGeometry: return "geometry error";
    case ErrorCode::kCoverage: return "coverage error";
    case ErrorCode::kMissingData: return "missing-data error";
    case ErrorCode::kTrainingData: return "training-data error";
    case ErrorCode::kContract: return "contract error";
    case ErrorCode::kInputMissing: return "input-missing error";
    case ErrorCode::kIo: return "I/O error";
  }
  return "error";
}

OrbitArcId parse_orbit_arc(const std::string& text) {
  require(text.size() >= 2, ErrorCode::kValidation, "bad orbit arc id: '" + text + "'");
  const char arc = text.back();
  require(arc == 'a' || arc == 'b', ErrorCode::kValidation,
          "orbit arc letter must be a or b: '" + text + "'");
  try {
    std::size_t used = 0;
    const int orbit = std::stoi(text.substr(0, text.size() - 1), &used);
    require(used == text.size() - 1, ErrorCode::kValidation, "bad orbit number: '" + text + "'");
    return OrbitArcId{orbit, arc};
  } catch (const std::logic_error&) {
    fail(ErrorCode::kValidation, "bad orbit number: '" + text + "'");
  }
}

std::optional<Label> parse_label(const std::string& text) {
  if (text.empty()) return std::nullopt;
  if (text == "good") return Label::kGood;
  if (text == "bad") return Label::kBad;
  fail(ErrorCode::kValidation, "label must be good, bad or empty: '" + text + "'");
}

const char* label_name(std::optional<Label> label) {
  if (!label) return "";
  return *label == Label::kGood ? "good" : "bad";
}

std::vector<EsaStep> all_esa_steps() {
  std::vector<EsaStep> steps;
  for (int e = kMinEsaStep; e <= kMaxEsaStep; ++e) steps.emplace_back(e);
  return steps;
}

// ---------------------------------------------------------------------------
// ArcGrid

namespace {

std::int8_t encode_label(std::optional<Label> label) {
  return label ? static_cast<std::int8_t>(*label) : std::int8_t{-1};
}

std::optional<Label> decode_label(std::int8_t v) {
  if (v < 0) return std::nullopt;
  return static_cast<Label>(v);
}

}  // namespace

ArcGrid::ArcGrid(OrbitArcId arc, std::vector<EsaStep> esa_steps, std::vector<TimeInterval> times)
    : arc_(arc), esa_steps_(std::move(esa_steps)), times_(std::move(times)) {
  require(std::is_sorted(esa_steps_.begin(), esa_steps_.end()) &&
              std::adjacent_find(esa_steps_.begin(), esa_steps_.end()) == esa_steps_.end(),
          ErrorCode::kValidation, "ESA steps must be strictly increasing");
  for (std::size_t t = 0; t < times_.size(); ++t) {
    require(times_[t].index == static_cast<int>(t), ErrorCode::kValidation,
            "time intervals must be indexed 0..n-1 in order");
  }
  const std::size_t n = n_cells();
  counts_.assign(n, 0);
  bg_low_.assign(n, 0);
  bg_high_.assign(n, 0);
  present_.assign(n, 0);
  flags_.assign(n, 0);
  sme_.assign(n, -1);
  truth_.assign(n, -1);
}

std::size_t ArcGrid::n_present() const {
  return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), 1));
}

std::size_t ArcGrid::esa_index(EsaStep esa) const {
  const auto it = std::lower_bound(esa_steps_.begin(), esa_steps_.end(), esa);
  require(it != esa_steps_.end() && *it == esa, ErrorCode::kContract,
          fmt::format("ESA step {} not in grid for arc {}", esa.value(), arc_.str()));
  return static_cast<std::size_t>(it - esa_steps_.begin());
}

Observation ArcGrid::observation(std::size_t esa, int angle, std::size_t time) const {
  const std::size_t i = index(esa, angle, time);
  require(present_[i] != 0, ErrorCode::kMissingData,
          fmt::format("no observation at arc {} esa {} angle {} time {}", arc_.str(),
                      esa_steps_[esa].value(), angle, time));
  Observation obs;
  obs.arc = arc_;
  obs.esa = esa_steps_[esa];
  obs.angle = AngleBin(angle);
  obs.time = times_[time];
  obs.count = counts_[i];
  obs.bg_low = bg_low_[i];
  obs.bg_high = bg_high_[i];
  obs.earth_not_visible = (flags_[i] & kEarthNv) != 0;
  obs.moon_not_visible = (flags_[i] & kMoonNv) != 0;
  obs.sun_not_visible = (flags_[i] & kSunNv) != 0;
  obs.sme_label = decode_label(sme_[i]);
  obs.truth_label = decode_label(truth_[i]);
  return obs;
}

void ArcGrid::set(const Observation& obs, std::size_t esa, std::size_t time) {
  const std::size_t i = index(esa, obs.angle.index(), time);
  require(present_[i] == 0, ErrorCode::kConflict,
          fmt::format("cell already filled: arc {} esa {} angle {} time {}", arc_.str(),
                      obs.esa.value(), obs.angle.index(), time));
  present_[i] = 1;
  counts_[i] = obs.count;
  bg_low_[i] = obs.bg_low;
  bg_high_[i] = obs.bg_high;
  flags_[i] = static_cast<std::uint8_t>(kPresent | (obs.earth_not_visible ? kEarthNv : 0) |
                                        (obs.moon_not_visible ? kMoonNv : 0) |
                                        (obs.sun_not_visible ? kSunNv : 0));
  sme_[i] = encode_label(obs.sme_label);
  truth_[i] = encode_label(obs.truth_label);
}

void ArcGrid::add_counts_at(std::size_t cell, std::int64_t count, std::int64_t bg_low,
                            std::int64_t bg_high) {
  require(present_[cell] != 0, ErrorCode::kContract, "add_counts_at on a masked cell");
  counts_[cell] += count;
  bg_low_[cell] += bg_low;
  bg_high_[cell] += bg_high;
}

void ArcGrid::set_visibility_at(std::size_t cell, bool earth_nv, bool moon_nv, bool sun_nv) {
  require(present_[cell] != 0, ErrorCode::kContract, "set_visibility_at on a masked cell");
  flags_[cell] = static_cast<std::uint8_t>(kPresent | (earth_nv ? kEarthNv : 0) |
                                           (moon_nv ? kMoonNv : 0) | (sun_nv ? kSunNv : 0));
}

std::vector<Observation> ArcGrid::flatten() const {
  std::vector<Observation> out;
  out.reserve(n_present());
  for (std::size_t e = 0; e < n_esa(); ++e) {
    for (int a = 0; a < kAngleBins; ++a) {
      for (std::size_t t = 0; t < n_time(); ++t) {
        if (present(e, a, t)) out.push_back(observation(e, a, t));
      }
    }
  }
  return out;
}

ArcGrid build_grid(const std::vector<Observation>& observations, OrbitArcId arc,
                   std::vector<EsaStep> esa_steps, std::size_t min_n_time) {
  if (esa_steps.empty()) esa_steps = all_esa_steps();
  std::sort(esa_steps.begin(), esa_steps.end());

  std::size_t n_time = min_n_time;
  for (const auto& obs : observations) {
    require(obs.arc == arc, ErrorCode::kContract,
            fmt::format("observation for arc {} passed to grid of arc {}", obs.arc.str(),
                        arc.str()));
    require(obs.time.index >= 0, ErrorCode::kValidation, "negative time index");
    n_time = std::max(n_time, static_cast<std::size_t>(obs.time.index) + 1);
  }

  std::vector<TimeInterval> times(n_time);
  std::vector<std::size_t> time_source(n_time, SIZE_MAX);
  for (std::size_t t = 0; t < n_time; ++t) times[t].index = static_cast<int>(t);
  for (std::size_t r = 0; r < observations.size(); ++r) {
    const auto& ti = observations[r].time;
    const auto t = static_cast<std::size_t>(ti.index);
    if (time_source[t] == SIZE_MAX) {
      require(ti.duration_s > 0.0, ErrorCode::kValidation,
              fmt::format("row {}: duration must be positive", r + 1));
      times[t] = ti;
      time_source[t] = r;
    } else {
      require(times[t] == ti, ErrorCode::kValidation,
              fmt::format("rows {} and {}: inconsistent epoch metadata for time index {}",
                          time_source[t] + 1, r + 1, t));
    }
  }

  ArcGrid grid(arc, esa_steps, std::move(times));
  std::vector<std::size_t> cell_source(grid.n_cells(), SIZE_MAX);
  for (std::size_t r = 0; r < observations.size(); ++r) {
    const auto& obs = observations[r];
    const std::size_t e = grid.esa_index(obs.esa);
    const auto t = static_cast<std::size_t>(obs.time.index);
    const std::size_t cell = grid.index(e, obs.angle.index(), t);
    if (cell_source[cell] != SIZE_MAX) {
      fail(ErrorCode::kConflict,
           fmt::format("duplicate observation for arc {} esa {} angle {} time {}: rows {} and {}",
                       arc.str(), obs.esa.value(), obs.angle.index(), t, cell_source[cell] + 1,
                       r + 1));
    }
    cell_source[cell] = r;
    grid.set(obs, e, t);
  }
  return grid;
}

std::vector<ArcGrid> build_grids(const std::vector<Observation>& observations) {
  std::map<OrbitArcId, std::vector<Observation>> by_arc;
  for (const auto& obs : observations) by_arc[obs.arc].push_back(obs);
  std::vector<ArcGrid> grids;
  grids.reserve(by_arc.size());
  for (const auto& [arc, rows] : by_arc) grids.push_back(build_grid(rows, arc));
  return grids;
}

// ---------------------------------------------------------------------------
// Observation table

std::vector<Observation> parse_observations(std::istream& in) {
  table::Reader reader(in, "observation table");
  reader.require_columns({"orbit", "arc", "esa", "angle_bin", "time_index", "start_epoch_s",
                          "duration_s", "count", "bg_low", "bg_high", "earth_nv", "moon_nv",
                          "sun_nv"});
  const bool has_sme = reader.has_column("sme_label");
  const bool has_truth = reader.has_column("truth_label");

  std::vector<Observation> out;
  while (reader.next()) {
    try {
      Observation obs;
      const auto& arc_text = reader.field("arc");
      require(arc_text == "a" || arc_text == "b", ErrorCode::kValidation,
              "arc must be a or b, found '" + arc_text + "'");
      obs.arc = OrbitArcId{static_cast<int>(reader.as_int("orbit")), arc_text[0]};
      obs.esa = EsaStep(static_cast<int>(reader.as_int("esa")));
      obs.angle = AngleBin(static_cast<int>(reader.as_int("angle_bin")));
      obs.time.index = static_cast<int>(reader.as_int("time_index"));
      require(obs.time.index >= 0, ErrorCode::kValidation, "negative time_index");
      obs.time.start_epoch_s = reader.as_double("start_epoch_s");
      obs.time.duration_s = reader.as_double("duration_s");
      require(obs.time.duration_s > 0.0, ErrorCode::kValidation, "duration_s must be positive");
      obs.count = reader.as_int("count");
      require(obs.count >= 0, ErrorCode::kValidation, "negative count");
      obs.bg_low = reader.as_int("bg_low");
      obs.bg_high = reader.as_int("bg_high");
      require(obs.bg_low >= 0 && obs.bg_high >= 0, ErrorCode::kValidation,
              "negative background monitor count");
      obs.earth_not_visible = reader.as_flag("earth_nv");
      obs.moon_not_visible = reader.as_flag("moon_nv");
      obs.sun_not_visible = reader.as_flag("sun_nv");
      if (has_sme) obs.sme_label = parse_label(reader.field("sme_label"));
      if (has_truth) obs.truth_label = parse_label(reader.field("truth_label"));
      out.push_back(obs);
    } catch (const Error& e) {
      const std::string what = e.what();
      if (what.rfind("observation table row", 0) == 0) throw;
      throw Error(e.code(), reader.where() + ": " + what);
    }
  }
  return out;
}

std::vector<Observation> ingest_observations(const std::filesystem::path& path) {
  auto in = table::open_input(path);
  return parse_observations(in);
}

void write_observations(std::ostream& out, const std::vector<Observation>& observations) {
  out << kObservationHeader << '\n';
  for (const auto& o : observations) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{:d},{:d},{:d},{},{}\n", o.arc.orbit,
                       o.arc.arc, o.esa.value(), o.angle.index(), o.time.index,
                       o.time.start_epoch_s, o.time.duration_s, o.count, o.bg_low, o.bg_high,
                       static_cast<int>(o.earth_not_visible), static_cast<int>(o.moon_not_visible),
                       static_cast<int>(o.sun_not_visible), label_name(o.sme_label),
                       label_name(o.truth_label));
  }
}

void write_observations(const std::filesystem::path& path,
                        const std::vector<Observation>& observations) {
  auto out = table::open_output(path);
  write_observations(out, observations);
}

}  // namespace enacull
