#include "enacull/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <tuple>

#include <fmt/format.h>

#include "enacull/rng.hpp"
#include "enacull/table.hpp"

namespace enacull {

const char* body_name(Body body) {
  switch (body) {
    case Body::kSun: return "sun";
    case Body::kEarth: return "earth";
    case Body::kMoon: return "moon";
  }
  return "?";
}

Body parse_body(const std::string& name) {
  if (name == "sun") return Body::kSun;
  if (name == "earth") return Body::kEarth;
  if (name == "moon") return Body::kMoon;
  fail(ErrorCode::kConfig, "unknown target body: '" + name + "'");
}

std::array<double, kAngleBins> bump_signal_profile(double base, double peak, double center,
                                                   double width) {
  std::array<double, kAngleBins> profile{};
  for (int a = 0; a < kAngleBins; ++a) {
    double d = std::fabs(a - center);
    d = std::min(d, kAngleBins - d);
    profile[a] = base + peak * std::exp(-0.5 * (d / width) * (d / width));
  }
  return profile;
}

namespace {

constexpr std::uint64_t kDurationStream = 0;
constexpr std::uint64_t kCountStream = 1;
constexpr std::uint64_t kBandStreamBase = 1000;

void check_span(const Span& span, int limit, const std::string& what) {
  if (span.empty()) return;
  if (span.lo < 0 || span.hi >= limit) {
    fail(ErrorCode::kConfig, fmt::format("{} span [{},{}] outside [0,{}]", what, span.lo, span.hi,
                                         limit - 1));
  }
}

void check_rate(double rate, const std::string& what) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    fail(ErrorCode::kConfig, fmt::format("{} must be a finite rate >= 0, got {}", what, rate));
  }
}

/// Listed steps plus any step sandwiched between two listed neighbors.
std::vector<int> interpolate_esa(std::vector<int> steps) {
  std::sort(steps.begin(), steps.end());
  std::vector<int> filled = steps;
  for (int e = kMinEsaStep + 1; e < kMaxEsaStep; ++e) {
    const bool below = std::binary_search(steps.begin(), steps.end(), e - 1);
    const bool above = std::binary_search(steps.begin(), steps.end(), e + 1);
    if (below && above && !std::binary_search(steps.begin(), steps.end(), e)) {
      filled.push_back(e);
    }
  }
  std::sort(filled.begin(), filled.end());
  return filled;
}

bool esa_listed(const std::vector<int>& steps, int esa) {
  return std::find(steps.begin(), steps.end(), esa) != steps.end();
}

}  // namespace

void validate(const SimConfig& c) {
  require(c.n_time >= 1, ErrorCode::kConfig, "n_time must be at least 1");
  require(!c.esa_steps.empty(), ErrorCode::kConfig, "esa_steps must not be empty");
  const int n_time = static_cast<int>(c.n_time);
  for (int a = 0; a < kAngleBins; ++a) check_rate(c.signal_profile[a], "signal_profile");
  check_rate(c.isotropic_bg_rate, "isotropic_bg_rate");
  check_rate(c.spun_rate, "spun_rate");
  check_rate(c.monitor_coupling, "monitor_coupling");
  check_rate(c.monitor_base_low, "monitor_base_low");
  check_rate(c.monitor_base_high, "monitor_base_high");
  require(c.interval_duration_s > 0.0, ErrorCode::kConfig, "interval_duration_s must be > 0");
  require(c.duration_jitter >= 0.0 && c.duration_jitter < 1.0, ErrorCode::kConfig,
          "duration_jitter must lie in [0,1)");
  require(c.sme_column_ratio >= 0.0 && c.sme_column_ratio <= 1.0, ErrorCode::kConfig,
          "sme_column_ratio must lie in [0,1]");
  for (std::size_t i = 0; i < c.bursts.size(); ++i) {
    const auto& b = c.bursts[i];
    const std::string name = fmt::format("bursts[{}]", i);
    check_span(b.angles, kAngleBins, name + " angle");
    check_span(b.times, n_time, name + " time");
    check_rate(b.rate, name + " rate");
    for (int e : b.esa_steps) {
      require(e >= kMinEsaStep && e <= kMaxEsaStep, ErrorCode::kConfig,
              fmt::format("{} esa step {} outside [2,6]", name, e));
    }
  }
  for (std::size_t i = 0; i < c.fov_bands.size(); ++i) {
    const auto& b = c.fov_bands[i];
    const std::string name = fmt::format("fov_bands[{}]", i);
    check_span(b.angles, kAngleBins, name + " angle");
    check_span(b.times, n_time, name + " time");
    check_rate(b.rate, name + " rate");
  }
  for (std::size_t i = 0; i < c.gaps.size(); ++i) {
    const std::string name = fmt::format("gaps[{}]", i);
    check_span(c.gaps[i].angles, kAngleBins, name + " angle");
    check_span(c.gaps[i].times, n_time, name + " time");
  }
  if (c.spun_span) check_span(*c.spun_span, n_time, "spun");
}

void apply_sme_labels(ArcGrid& grid, double ratio) {
  for (std::size_t e = 0; e < grid.n_esa(); ++e) {
    for (std::size_t t = 0; t < grid.n_time(); ++t) {
      int present = 0;
      int bad = 0;
      for (int a = 0; a < kAngleBins; ++a) {
        const std::size_t cell = grid.index(e, a, t);
        if (!grid.present_at(cell)) continue;
        ++present;
        if (grid.truth_at(cell) == 0) ++bad;
      }
      if (present == 0) continue;
      const bool block_bad = static_cast<double>(bad) > ratio * present;
      for (int a = 0; a < kAngleBins; ++a) {
        const std::size_t cell = grid.index(e, a, t);
        if (!grid.present_at(cell)) continue;
        grid.set_sme_at(cell, block_bad ? std::int8_t{0} : grid.truth_at(cell));
      }
    }
  }
}

TruthLabeledArc simulate_arc(const SimConfig& c) {
  validate(c);
  const std::size_t n_time = c.n_time;
  std::vector<EsaStep> esa_steps = c.esa_steps;
  std::sort(esa_steps.begin(), esa_steps.end());
  const std::size_t n_esa = esa_steps.size();

  std::vector<TimeInterval> times(n_time);
  {
    Rng rng(c.seed, kDurationStream);
    double epoch = c.start_epoch_s;
    for (std::size_t t = 0; t < n_time; ++t) {
      double duration = c.interval_duration_s;
      if (c.duration_jitter > 0.0) {
        duration *= 1.0 + c.duration_jitter * (2.0 * rng.uniform() - 1.0);
      }
      times[t] = TimeInterval{static_cast<int>(t), epoch, duration};
      epoch += duration;
    }
  }

  // Contamination rate added to each cell, and whether anything covers it.
  const std::size_t per_esa = static_cast<std::size_t>(kAngleBins) * n_time;
  std::vector<double> extra(n_esa * per_esa, 0.0);
  std::vector<std::uint8_t> contaminated(n_esa * per_esa, 0);
  std::vector<std::uint8_t> missing(n_esa * per_esa, 0);
  auto cell_of = [&](std::size_t e, int a, int t) {
    return (e * kAngleBins + static_cast<std::size_t>(a)) * n_time + static_cast<std::size_t>(t);
  };

  for (const auto& burst : c.bursts) {
    if (burst.angles.empty() || burst.times.empty()) continue;
    const auto steps = interpolate_esa(burst.esa_steps);
    for (std::size_t e = 0; e < n_esa; ++e) {
      if (!esa_listed(steps, esa_steps[e].value())) continue;
      for (int a = burst.angles.lo; a <= burst.angles.hi; ++a) {
        for (int t = burst.times.lo; t <= burst.times.hi; ++t) {
          extra[cell_of(e, a, t)] += burst.rate;
          contaminated[cell_of(e, a, t)] = 1;
        }
      }
    }
  }
  if (c.spun_span && !c.spun_span->empty()) {
    for (std::size_t e = 0; e < n_esa; ++e) {
      for (int a = 0; a < kAngleBins; ++a) {
        for (int t = c.spun_span->lo; t <= c.spun_span->hi; ++t) {
          extra[cell_of(e, a, t)] += c.spun_rate;
          contaminated[cell_of(e, a, t)] = 1;
        }
      }
    }
  }
  for (const auto& gap : c.gaps) {
    if (gap.angles.empty() || gap.times.empty()) continue;
    for (std::size_t e = 0; e < n_esa; ++e) {
      if (!gap.esa_steps.empty() && !esa_listed(gap.esa_steps, esa_steps[e].value())) continue;
      for (int a = gap.angles.lo; a <= gap.angles.hi; ++a) {
        for (int t = gap.times.lo; t <= gap.times.hi; ++t) missing[cell_of(e, a, t)] = 1;
      }
    }
  }

  TruthLabeledArc out;
  out.seed = c.seed;
  out.grid = ArcGrid(c.arc, esa_steps, times);
  out.fov_mask.assign(static_cast<std::size_t>(kBodyCount) * per_esa, 0);

  Rng rng(c.seed, kCountStream);
  for (std::size_t e = 0; e < n_esa; ++e) {
    for (int a = 0; a < kAngleBins; ++a) {
      for (std::size_t t = 0; t < n_time; ++t) {
        const std::size_t cell = cell_of(e, a, static_cast<int>(t));
        if (missing[cell]) continue;
        const double scale = times[t].duration_s / c.interval_duration_s;
        const double add = extra[cell];
        Observation obs;
        obs.arc = c.arc;
        obs.esa = esa_steps[e];
        obs.angle = AngleBin(a);
        obs.time = times[t];
        obs.count = rng.poisson((c.signal_profile[a] + c.isotropic_bg_rate + add) * scale);
        obs.bg_low = rng.poisson((c.monitor_base_low + c.monitor_coupling * add) * scale);
        obs.bg_high = rng.poisson((c.monitor_base_high + c.monitor_coupling * add) * scale);
        obs.truth_label = contaminated[cell] ? Label::kBad : Label::kGood;
        out.grid.set(obs, e, t);
      }
    }
  }
  apply_sme_labels(out.grid, c.sme_column_ratio);

  for (const auto& band : c.fov_bands) {
    out = inject_fov_band(out, band.target, band.angles, band.times, band.rate,
                          c.monitor_coupling, c.sme_column_ratio);
  }
  return out;
}

TruthLabeledArc inject_fov_band(const TruthLabeledArc& arc, Body target, Span angles, Span times,
                                double rate, double monitor_coupling, double sme_column_ratio) {
  const std::size_t n_time = arc.grid.n_time();
  check_span(angles, kAngleBins, std::string(body_name(target)) + " band angle");
  check_span(times, static_cast<int>(n_time), std::string(body_name(target)) + " band time");
  check_rate(rate, "band rate");
  TruthLabeledArc out = arc;
  if (angles.empty() || times.empty()) return out;

  std::size_t applied = 0;
  for (auto v : arc.fov_mask) applied += v;
  Rng rng(arc.seed, kBandStreamBase + applied);

  auto& grid = out.grid;
  for (std::size_t e = 0; e < grid.n_esa(); ++e) {
    for (int a = angles.lo; a <= angles.hi; ++a) {
      for (int t = times.lo; t <= times.hi; ++t) {
        const auto tt = static_cast<std::size_t>(t);
        const std::size_t cell = grid.index(e, a, tt);
        if (!grid.present_at(cell)) continue;
        const std::int64_t added = rng.poisson(rate);
        const std::int64_t low = rng.poisson(monitor_coupling * rate);
        const std::int64_t high = rng.poisson(monitor_coupling * rate);
        grid.add_counts_at(cell, added, low, high);
        grid.set_visibility_at(cell, grid.earth_nv_at(cell) && target != Body::kEarth,
                               grid.moon_nv_at(cell) && target != Body::kMoon,
                               grid.sun_nv_at(cell) && target != Body::kSun);
        grid.set_truth_at(cell, 0);
      }
    }
  }
  for (int a = angles.lo; a <= angles.hi; ++a) {
    for (int t = times.lo; t <= times.hi; ++t) {
      out.fov_mask[(static_cast<std::size_t>(target) * kAngleBins + a) * n_time +
                   static_cast<std::size_t>(t)] = 1;
    }
  }
  apply_sme_labels(grid, sme_column_ratio);
  return out;
}

std::vector<Observation> observation_rows(const TruthLabeledArc& arc) {
  auto rows = arc.grid.flatten();
  for (auto& r : rows) r.truth_label.reset();
  return rows;
}

void write_truth_table(std::ostream& out, const std::vector<TruthLabeledArc>& arcs) {
  out << kTruthHeader << '\n';
  for (const auto& arc : arcs) {
    const auto& g = arc.grid;
    for (std::size_t e = 0; e < g.n_esa(); ++e) {
      for (int a = 0; a < kAngleBins; ++a) {
        for (std::size_t t = 0; t < g.n_time(); ++t) {
          const std::size_t cell = g.index(e, a, t);
          if (!g.present_at(cell)) continue;
          out << fmt::format("{},{},{},{},{},{},{:d},{:d},{:d}\n", g.arc().orbit, g.arc().arc,
                             g.esa_steps()[e].value(), a, t,
                             g.truth_at(cell) == 1 ? "good" : "bad",
                             static_cast<int>(arc.in_fov(Body::kEarth, a, t)),
                             static_cast<int>(arc.in_fov(Body::kMoon, a, t)),
                             static_cast<int>(arc.in_fov(Body::kSun, a, t)));
        }
      }
    }
  }
}

void attach_truth(std::vector<Observation>& observations, const std::filesystem::path& truth_path) {
  using Key = std::tuple<int, char, int, int, int>;
  std::map<Key, std::optional<Label>> truth;
  auto in = table::open_input(truth_path);
  table::Reader reader(in, "truth table");
  reader.require_columns({"orbit", "arc", "esa", "angle_bin", "time_index", "truth_label"});
  while (reader.next()) {
    const auto& arc = reader.field("arc");
    require(arc == "a" || arc == "b", ErrorCode::kValidation, reader.where() + ": bad arc");
    truth[Key{static_cast<int>(reader.as_int("orbit")), arc[0],
              static_cast<int>(reader.as_int("esa")), static_cast<int>(reader.as_int("angle_bin")),
              static_cast<int>(reader.as_int("time_index"))}] =
        parse_label(reader.field("truth_label"));
  }
  for (auto& obs : observations) {
    const auto it = truth.find(
        Key{obs.arc.orbit, obs.arc.arc, obs.esa.value(), obs.angle.index(), obs.time.index});
    if (it != truth.end()) obs.truth_label = it->second;
  }
}

}  // namespace enacull
