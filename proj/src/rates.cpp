#include "enacull/rates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <fmt/format.h>

#include "enacull/numeric.hpp"
#include "enacull/table.hpp"

namespace enacull {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_labels(const ArcGrid& grid, const LabelGrid& labels) {
  require(labels.n_esa() == grid.n_esa() && labels.n_time == grid.n_time(), ErrorCode::kContract,
          "label grid shape does not match the arc grid");
}

struct GoodTotals {
  std::int64_t counts = 0;
  double exposure = 0.0;
};

GoodTotals good_totals(const ArcGrid& grid, const LabelGrid& labels, std::size_t esa, int angle) {
  GoodTotals out;
  CompensatedSum exposure;
  for (std::size_t t = 0; t < grid.n_time(); ++t) {
    const std::size_t c = grid.index(esa, angle, t);
    if (!grid.present_at(c) || labels.labels[c] != 1) continue;
    out.counts += grid.count_at(c);
    exposure.add(grid.times()[t].duration_s);
  }
  out.exposure = exposure.value();
  return out;
}
}  // namespace

void RateConfig::validate() const {
  require(bg_percentile >= 0.0 && bg_percentile <= 100.0, ErrorCode::kConfig,
          "bg_percentile must lie in [0,100]");
  require(!isotropic_bg_override || std::isfinite(*isotropic_bg_override), ErrorCode::kConfig,
          "isotropic_bg_override must be finite");
}

EnaRate ena_rate(const ArcGrid& grid, const LabelGrid& labels, std::size_t esa, int angle,
                 double isotropic_bg) {
  check_labels(grid, labels);
  const GoodTotals totals = good_totals(grid, labels, esa, angle);
  require(totals.exposure > 0.0, ErrorCode::kMissingData,
          fmt::format("arc {} esa {} angle {}: no good exposure, rate undefined", grid.arc().str(),
                      labels.esa_steps[esa], angle));
  EnaRate r;
  r.arc = grid.arc();
  r.esa = labels.esa_steps[esa];
  r.angle = angle;
  r.good_counts = totals.counts;
  r.good_exposure_s = totals.exposure;
  r.isotropic_bg = isotropic_bg;
  r.rate = static_cast<double>(totals.counts) / totals.exposure - isotropic_bg;
  return r;
}

double estimate_isotropic_bg(const ArcGrid& grid, const LabelGrid& labels, std::size_t esa,
                             const RateConfig& config) {
  config.validate();
  if (config.isotropic_bg_override) return *config.isotropic_bg_override;
  check_labels(grid, labels);
  std::vector<double> rates;
  for (int a = 0; a < kAngleBins; ++a) {
    const GoodTotals totals = good_totals(grid, labels, esa, a);
    if (totals.exposure > 0.0) rates.push_back(static_cast<double>(totals.counts) / totals.exposure);
  }
  require(!rates.empty(), ErrorCode::kMissingData,
          fmt::format("arc {} esa {}: no good cells to estimate the isotropic background",
                      grid.arc().str(), labels.esa_steps[esa]));
  return quantile_linear(std::move(rates), config.bg_percentile / 100.0);
}

std::vector<EnaRate> compute_rates(const ArcGrid& grid, const LabelGrid& labels,
                                   const RateConfig& config) {
  check_labels(grid, labels);
  std::vector<EnaRate> out;
  for (std::size_t e = 0; e < grid.n_esa(); ++e) {
    bool any = false;
    for (int a = 0; a < kAngleBins && !any; ++a) any = good_totals(grid, labels, e, a).exposure > 0;
    if (!any) continue;
    const double bg = estimate_isotropic_bg(grid, labels, e, config);
    for (int a = 0; a < kAngleBins; ++a) {
      if (good_totals(grid, labels, e, a).exposure > 0.0) out.push_back(ena_rate(grid, labels, e, a, bg));
    }
  }
  return out;
}

int exposure_group(double exposure_s) {
  require(exposure_s > 0.0, ErrorCode::kContract,
          fmt::format("exposure group needs a positive exposure, got {}", exposure_s));
  const auto it = std::upper_bound(kExposureGroupBounds.begin(), kExposureGroupBounds.end(), exposure_s);
  return 1 + static_cast<int>(it - kExposureGroupBounds.begin());
}

std::vector<RateRatioGroup> rate_ratio_by_group(const std::vector<EnaRate>& reference,
                                                const std::vector<EnaRate>& candidate) {
  auto key = [](const EnaRate& r) { return std::tuple(r.arc, r.esa, r.angle); };
  std::vector<const EnaRate*> cand;
  for (const auto& r : candidate) cand.push_back(&r);
  std::sort(cand.begin(), cand.end(), [&](auto* a, auto* b) { return key(*a) < key(*b); });

  std::array<std::vector<double>, 6> ratios;
  for (const auto& ref : reference) {
    const auto it = std::lower_bound(cand.begin(), cand.end(), key(ref),
                                     [&](auto* c, const auto& k) { return key(*c) < k; });
    if (it == cand.end() || key(**it) != key(ref) || (*it)->rate == 0.0) continue;
    ratios[static_cast<std::size_t>(exposure_group(ref.good_exposure_s) - 1)].push_back(
        ref.rate / (*it)->rate);
  }
  std::vector<RateRatioGroup> out;
  for (std::size_t g = 0; g < ratios.size(); ++g) {
    RateRatioGroup row;
    row.group = static_cast<int>(g) + 1;
    row.n = ratios[g].size();
    if (row.n > 0) row.median_ratio = quantile_linear(ratios[g], 0.5);
    out.push_back(row);
  }
  return out;
}

void write_rates(std::ostream& out, const std::vector<EnaRate>& rates) {
  out << "orbit,arc,esa,angle_bin,good_counts,good_exposure_s,isotropic_bg,rate\n";
  for (const auto& r : rates) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", r.arc.orbit, r.arc.arc, r.esa, r.angle,
                       r.good_counts, r.good_exposure_s, r.isotropic_bg, r.rate);
  }
}

std::vector<EnaRate> read_rates(std::istream& in, const std::string& source) {
  table::Reader reader(in, source);
  reader.require_columns({"orbit", "arc", "esa", "angle_bin", "good_counts", "good_exposure_s",
                          "isotropic_bg", "rate"});
  std::vector<EnaRate> out;
  while (reader.next()) {
    EnaRate r;
    r.arc = parse_orbit_arc(reader.field("orbit") + reader.field("arc"));
    r.esa = EsaStep(static_cast<int>(reader.as_int("esa"))).value();
    r.angle = AngleBin(static_cast<int>(reader.as_int("angle_bin"))).index();
    r.good_counts = reader.as_int("good_counts");
    r.good_exposure_s = reader.as_double("good_exposure_s");
    r.isotropic_bg = reader.as_double("isotropic_bg");
    r.rate = reader.as_double("rate");
    require(r.good_exposure_s > 0.0, ErrorCode::kValidation,
            reader.where() + ": good_exposure_s must be positive");
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

GeometryTable::GeometryTable(std::vector<PixelGeometry> entries) : entries_(std::move(entries)) {
  auto key = [](const PixelGeometry& g) { return std::pair(g.arc, g.angle); };
  std::sort(entries_.begin(), entries_.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& g = entries_[i];
    require(i == 0 || key(entries_[i - 1]) != key(g), ErrorCode::kConflict,
            fmt::format("geometry lists arc {} angle {} twice", g.arc.str(), g.angle));
    require(g.lat_deg >= -90.0 && g.lat_deg <= 90.0 && std::isfinite(g.lon_deg),
            ErrorCode::kValidation,
            fmt::format("geometry for arc {} angle {} has an invalid direction", g.arc.str(), g.angle));
  }
}

const PixelGeometry& GeometryTable::at(const OrbitArcId& arc, int angle) const {
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair(arc, angle),
                                   [](const PixelGeometry& g, const auto& k) {
                                     return std::pair(g.arc, g.angle) < k;
                                   });
  require(it != entries_.end() && it->arc == arc && it->angle == angle, ErrorCode::kMissingData,
          fmt::format("no geometry for arc {} angle {}", arc.str(), angle));
  return *it;
}

GeometryTable synthetic_geometry(const std::vector<OrbitArcId>& arcs, double lon_step_deg) {
  std::vector<OrbitArcId> sorted = arcs;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<PixelGeometry> entries;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double lon = std::fmod(static_cast<double>(k) * lon_step_deg, 360.0);
    for (int a = 0; a < kAngleBins; ++a) {
      PixelGeometry g;
      g.arc = sorted[k];
      g.angle = a;
      if (a < kAngleBins / 2) {
        g.lat_deg = -87.0 + kAngleBinWidthDeg * a;
        g.lon_deg = lon;
      } else {
        g.lat_deg = 87.0 - kAngleBinWidthDeg * (a - kAngleBins / 2);
        g.lon_deg = std::fmod(lon + 180.0, 360.0);
      }
      entries.push_back(g);
    }
  }
  return GeometryTable(std::move(entries));
}

GeometryTable read_geometry(std::istream& in, const std::string& source) {
  table::Reader reader(in, source);
  reader.require_columns({"orbit", "arc", "angle_bin", "lat_deg", "lon_deg"});
  std::vector<PixelGeometry> entries;
  while (reader.next()) {
    PixelGeometry g;
    g.arc = parse_orbit_arc(reader.field("orbit") + reader.field("arc"));
    g.angle = AngleBin(static_cast<int>(reader.as_int("angle_bin"))).index();
    g.lat_deg = reader.as_double("lat_deg");
    g.lon_deg = reader.as_double("lon_deg");
    entries.push_back(g);
  }
  return GeometryTable(std::move(entries));
}

void write_geometry(std::ostream& out, const GeometryTable& table) {
  out << "orbit,arc,angle_bin,lat_deg,lon_deg\n";
  for (const auto& g : table.entries()) {
    out << fmt::format("{},{},{},{},{}\n", g.arc.orbit, g.arc.arc, g.angle, g.lat_deg, g.lon_deg);
  }
}

std::size_t pixel_index(double lat_deg, double lon_deg) {
  const int row = std::clamp(static_cast<int>(std::floor((lat_deg + 90.0) / kMapPixelDeg)), 0, kMapRows - 1);
  double lon = std::fmod(lon_deg, 360.0);
  if (lon < 0.0) lon += 360.0;
  const int col = std::clamp(static_cast<int>(std::floor(lon / kMapPixelDeg)), 0, kMapCols - 1);
  return static_cast<std::size_t>(row * kMapCols + col);
}

// ---------------------------------------------------------------------------
// Maps

SkyMap::SkyMap() : value(kMapRows * kMapCols, kNaN), exposure(kMapRows * kMapCols, 0.0) {}

SkyMap build_sky_map(const std::vector<EnaRate>& rates, const GeometryTable& geometry, int esa,
                     const std::string& tag) {
  std::vector<const EnaRate*> chosen;
  for (const auto& r : rates) {
    if (r.esa == esa) chosen.push_back(&r);
  }
  std::sort(chosen.begin(), chosen.end(), [](const EnaRate* a, const EnaRate* b) {
    return std::tie(a->arc, a->angle, a->good_exposure_s, a->rate) <
           std::tie(b->arc, b->angle, b->good_exposure_s, b->rate);
  });

  const std::size_t n_pixels = kMapRows * kMapCols;
  std::vector<CompensatedSum> weighted(n_pixels);
  std::vector<CompensatedSum> exposure(n_pixels);
  std::vector<std::uint8_t> touched(n_pixels, 0);
  for (const EnaRate* r : chosen) {
    const auto& g = geometry.at(r->arc, r->angle);
    const std::size_t p = pixel_index(g.lat_deg, g.lon_deg);
    weighted[p].add(r->rate * r->good_exposure_s);
    exposure[p].add(r->good_exposure_s);
    touched[p] = 1;
  }

  SkyMap map;
  map.tag = tag;
  map.esa = esa;
  for (std::size_t p = 0; p < n_pixels; ++p) {
    if (!touched[p]) continue;
    const double e = exposure[p].value();
    require(e > 0.0, ErrorCode::kContract,
            fmt::format("map pixel {} has contributions but no exposure", p));
    map.exposure[p] = e;
    map.value[p] = weighted[p].value() / e;
  }
  return map;
}

std::vector<double> percent_diff(const SkyMap& candidate, const SkyMap& reference) {
  require(candidate.value.size() == reference.value.size() &&
              candidate.value.size() == static_cast<std::size_t>(kMapRows * kMapCols),
          ErrorCode::kContract, "percent difference of maps with different shapes");
  require(candidate.tag == reference.tag && candidate.esa == reference.esa, ErrorCode::kContract,
          fmt::format("percent difference of maps {}/{} and {}/{}", candidate.tag, candidate.esa,
                      reference.tag, reference.esa));
  std::vector<double> out(candidate.value.size(), kNaN);
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (candidate.empty(p) || reference.empty(p) || reference.value[p] == 0.0) continue;
    out[p] = 100.0 * (candidate.value[p] - reference.value[p]) / reference.value[p];
  }
  return out;
}

void write_map_grid(std::ostream& out, const std::vector<double>& values) {
  require(values.size() == static_cast<std::size_t>(kMapRows * kMapCols), ErrorCode::kContract,
          "map grid must hold 30 x 60 values");
  for (int row = 0; row < kMapRows; ++row) {
    for (int col = 0; col < kMapCols; ++col) {
      const double v = values[static_cast<std::size_t>(row * kMapCols + col)];
      if (col > 0) out << ',';
      out << (std::isnan(v) ? std::string("NA") : fmt::format("{}", v));
    }
    out << '\n';
  }
}

void write_map_pgm(std::ostream& out, const SkyMap& map) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t p = 0; p < map.value.size(); ++p) {
    if (map.empty(p)) continue;
    lo = std::min(lo, map.value[p]);
    hi = std::max(hi, map.value[p]);
  }
  out << "P2\n" << kMapCols << ' ' << kMapRows << "\n255\n";
  for (int row = kMapRows - 1; row >= 0; --row) {
    for (int col = 0; col < kMapCols; ++col) {
      const auto p = static_cast<std::size_t>(row * kMapCols + col);
      int level = 0;
      if (!map.empty(p)) {
        level = hi > lo ? 1 + static_cast<int>(std::lround((map.value[p] - lo) / (hi - lo) * 254.0)) : 128;
      }
      out << (col > 0 ? " " : "") << level;
    }
    out << '\n';
  }
}

}  // namespace enacull
