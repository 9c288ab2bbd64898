#include "enacull/features.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

namespace enacull {

std::uint64_t feature_schema_fingerprint() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto name : kFeatureNames) {
    for (const char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= static_cast<unsigned char>(',');
    h *= 0x100000001b3ULL;
  }
  return h;
}

FeatureVector FeatureMatrix::vector(std::size_t r) const {
  FeatureVector v{};
  std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(r * kFeatureCount), kFeatureCount,
              v.begin());
  return v;
}

void FeatureMatrix::append(const FeatureMatrix& other) {
  keys.insert(keys.end(), other.keys.begin(), other.keys.end());
  cells.insert(cells.end(), other.cells.begin(), other.cells.end());
  values.insert(values.end(), other.values.begin(), other.values.end());
  sme.insert(sme.end(), other.sme.begin(), other.sme.end());
  truth.insert(truth.end(), other.truth.begin(), other.truth.end());
}

namespace {

/// Two-pass moments over integer counts; sums are exact in double up to 2^53.
template <typename Visit>
MomentStats moments(Visit&& visit) {
  MomentStats s;
  visit([&](std::int64_t x) {
    s.sum += static_cast<double>(x);
    ++s.n;
  });
  if (s.n == 0) return s;
  s.mean = s.sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    visit([&](std::int64_t x) {
      const double d = static_cast<double>(x) - s.mean;
      ss += d * d;
    });
    s.variance = ss / static_cast<double>(s.n - 1);
  }
  return s;
}

int wrap_angle(int a) { return (a % kAngleBins + kAngleBins) % kAngleBins; }

}  // namespace

MomentStats angle_bin_stats(const ArcGrid& grid, std::size_t esa, int angle) {
  const auto s = moments([&](auto&& f) {
    for (std::size_t t = 0; t < grid.n_time(); ++t) {
      if (grid.present(esa, angle, t)) f(grid.count(esa, angle, t));
    }
  });
  require(s.n > 0, ErrorCode::kMissingData,
          fmt::format("angle row fully masked: esa index {} angle {}", esa, angle));
  return s;
}

MomentStats time_interval_stats(const ArcGrid& grid, std::size_t esa, std::size_t time) {
  const auto s = moments([&](auto&& f) {
    for (int a = 0; a < kAngleBins; ++a) {
      if (grid.present(esa, a, time)) f(grid.count(esa, a, time));
    }
  });
  require(s.n > 0, ErrorCode::kMissingData,
          fmt::format("time column fully masked: esa index {} time {}", esa, time));
  return s;
}

MomentStats across_esa_stats(const ArcGrid& grid, int angle, std::size_t time) {
  const auto s = moments([&](auto&& f) {
    for (std::size_t e = 0; e < grid.n_esa(); ++e) {
      if (grid.present(e, angle, time)) f(grid.count(e, angle, time));
    }
  });
  require(s.n > 0, ErrorCode::kMissingData,
          fmt::format("no ESA present at angle {} time {}", angle, time));
  return s;
}

namespace {

double min_column_mean(const ArcGrid& grid, std::size_t esa) {
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < grid.n_time(); ++t) {
    std::int64_t sum = 0;
    int n = 0;
    for (int a = 0; a < kAngleBins; ++a) {
      if (!grid.present(esa, a, t)) continue;
      sum += grid.count(esa, a, t);
      ++n;
    }
    if (n > 0) lowest = std::min(lowest, static_cast<double>(sum) / n);
  }
  return lowest;
}

}  // namespace

double mean_theta_counts_ratio(const ArcGrid& grid, std::size_t esa, std::size_t time) {
  const double mean = time_interval_stats(grid, esa, time).mean;
  return mean / std::max(min_column_mean(grid, esa), kRatioFloor);
}

std::array<double, 8> neighbor_counts(const ArcGrid& grid, std::size_t esa, int angle,
                                      std::size_t time) {
  require(grid.present(esa, angle, time), ErrorCode::kMissingData,
          fmt::format("neighbor_counts on masked cell esa index {} angle {} time {}", esa, angle,
                      time));
  const double center = static_cast<double>(grid.count(esa, angle, time));
  const auto n_time = static_cast<std::ptrdiff_t>(grid.n_time());
  auto at = [&](int da, int dt) {
    const auto t = static_cast<std::ptrdiff_t>(time) + dt;
    if (t < 0 || t >= n_time) return center;
    const int a = wrap_angle(angle + da);
    const auto tt = static_cast<std::size_t>(t);
    return grid.present(esa, a, tt) ? static_cast<double>(grid.count(esa, a, tt)) : center;
  };
  return {at(+1, 0), at(-1, 0), at(0, +1), at(0, -1),
          at(+1, +1), at(+1, -1), at(-1, +1), at(-1, -1)};
}

namespace {

struct Visibility {
  bool earth, moon, sun;
};

Visibility visibility(const ArcGrid& grid, std::size_t cell, int angle, std::size_t time,
                      const FovCellFlags* fov) {
  Visibility v{grid.earth_nv_at(cell), grid.moon_nv_at(cell), grid.sun_nv_at(cell)};
  if (fov != nullptr) {
    const std::size_t n_time = grid.n_time();
    auto flagged = [&](int body) {
      return (*fov)[(static_cast<std::size_t>(body) * kAngleBins + angle) * n_time + time] != 0;
    };
    // Body order matches enacull::Body: sun, earth, moon.
    v.sun = v.sun && !flagged(0);
    v.earth = v.earth && !flagged(1);
    v.moon = v.moon && !flagged(2);
  }
  return v;
}

void check_fov_flags(const ArcGrid& grid, const FovCellFlags* fov) {
  if (fov == nullptr) return;
  require(fov->size() == 3u * kAngleBins * grid.n_time(), ErrorCode::kContract,
          "field-of-view flags do not match the grid's time axis");
}

void fill_identity(double* row, const ArcGrid& grid, std::size_t e, int a, std::size_t t,
                   std::size_t cell, const FovCellFlags* fov) {
  row[idx(Feature::kEsaStep)] = grid.esa_steps()[e].value();
  row[idx(Feature::kAngleBin)] = a;
  row[idx(Feature::kTimeIndex)] = static_cast<double>(t);
  row[idx(Feature::kOrbit)] = grid.arc().orbit;
  row[idx(Feature::kCounts)] = static_cast<double>(grid.count_at(cell));
  row[idx(Feature::kCountsLower)] = static_cast<double>(grid.bg_low_at(cell));
  row[idx(Feature::kCountsUpper)] = static_cast<double>(grid.bg_high_at(cell));
  const auto vis = visibility(grid, cell, a, t, fov);
  row[idx(Feature::kEarthNotVisible)] = vis.earth ? 1.0 : 0.0;
  row[idx(Feature::kMoonNotVisible)] = vis.moon ? 1.0 : 0.0;
  row[idx(Feature::kSunNotVisible)] = vis.sun ? 1.0 : 0.0;
}

void put_moments(double* row, Feature sum, const MomentStats& s) {
  row[idx(sum)] = s.sum;
  row[idx(sum) + 1] = s.mean;
  row[idx(sum) + 2] = s.variance;
}

FeatureMatrix allocate(const ArcGrid& grid) {
  FeatureMatrix m;
  const std::size_t n = grid.n_present();
  m.keys.reserve(n);
  m.cells.reserve(n);
  m.sme.reserve(n);
  m.truth.reserve(n);
  for (std::size_t e = 0; e < grid.n_esa(); ++e) {
    for (int a = 0; a < kAngleBins; ++a) {
      for (std::size_t t = 0; t < grid.n_time(); ++t) {
        const std::size_t cell = grid.index(e, a, t);
        if (!grid.present_at(cell)) continue;
        m.keys.push_back(CellKey{grid.arc(), grid.esa_steps()[e].value(), a, static_cast<int>(t)});
        m.cells.push_back(cell);
        m.sme.push_back(grid.sme_at(cell));
        m.truth.push_back(grid.truth_at(cell));
      }
    }
  }
  m.values.assign(n * kFeatureCount, 0.0);
  return m;
}

}  // namespace

FeatureMatrix compute_features_reference(const ArcGrid& grid, const FovCellFlags* fov) {
  check_fov_flags(grid, fov);
  FeatureMatrix m = allocate(grid);
  std::vector<double> ratio_memo(grid.n_esa() * grid.n_time(),
                                 std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto& key = m.keys[r];
    const std::size_t e = grid.esa_index(EsaStep(key.esa));
    const int a = key.angle;
    const auto t = static_cast<std::size_t>(key.time);
    double* row = m.values.data() + r * kFeatureCount;
    fill_identity(row, grid, e, a, t, m.cells[r], fov);
    put_moments(row, Feature::kSumAngle, angle_bin_stats(grid, e, a));
    put_moments(row, Feature::kSumTime, time_interval_stats(grid, e, t));
    double& ratio = ratio_memo[e * grid.n_time() + t];
    if (std::isnan(ratio)) ratio = mean_theta_counts_ratio(grid, e, t);
    row[idx(Feature::kMeanThetaCountsRatio)] = ratio;
    put_moments(row, Feature::kSumEsa, across_esa_stats(grid, a, t));
    const auto nbr = neighbor_counts(grid, e, a, t);
    std::copy(nbr.begin(), nbr.end(), row + idx(Feature::kNbrUp));
  }
  return m;
}

FeatureMatrix compute_features(const ArcGrid& grid, const FovCellFlags* fov) {
  check_fov_flags(grid, fov);
  FeatureMatrix m = allocate(grid);
  const std::size_t n_esa = grid.n_esa();
  const std::size_t n_time = grid.n_time();
  const auto n_rows = static_cast<std::ptrdiff_t>(n_esa * kAngleBins);
  const auto n_cols = static_cast<std::ptrdiff_t>(n_esa * n_time);
  const auto n_stacks = static_cast<std::ptrdiff_t>(kAngleBins * n_time);

  // Aggregates: per (esa, angle) row, per (esa, time) column, per (angle, time) ESA stack.
  std::vector<MomentStats> row_stats(static_cast<std::size_t>(n_rows));
  std::vector<MomentStats> col_stats(static_cast<std::size_t>(n_cols));
  std::vector<MomentStats> esa_stats(static_cast<std::size_t>(n_stacks));

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n_rows; ++r) {
    const std::size_t e = static_cast<std::size_t>(r) / kAngleBins;
    const int a = static_cast<int>(static_cast<std::size_t>(r) % kAngleBins);
    row_stats[static_cast<std::size_t>(r)] = moments([&](auto&& f) {
      for (std::size_t t = 0; t < n_time; ++t) {
        if (grid.present(e, a, t)) f(grid.count(e, a, t));
      }
    });
  }

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < n_cols; ++c) {
    const std::size_t e = static_cast<std::size_t>(c) / n_time;
    const std::size_t t = static_cast<std::size_t>(c) % n_time;
    col_stats[static_cast<std::size_t>(c)] = moments([&](auto&& f) {
      for (int a = 0; a < kAngleBins; ++a) {
        if (grid.present(e, a, t)) f(grid.count(e, a, t));
      }
    });
  }

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n_stacks; ++s) {
    const int a = static_cast<int>(static_cast<std::size_t>(s) / n_time);
    const std::size_t t = static_cast<std::size_t>(s) % n_time;
    esa_stats[static_cast<std::size_t>(s)] = moments([&](auto&& f) {
      for (std::size_t e = 0; e < n_esa; ++e) {
        if (grid.present(e, a, t)) f(grid.count(e, a, t));
      }
    });
  }

  std::vector<double> min_mean(n_esa, std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < n_esa; ++e) {
    for (std::size_t t = 0; t < n_time; ++t) {
      const auto& cs = col_stats[e * n_time + t];
      if (cs.n > 0) min_mean[e] = std::min(min_mean[e], cs.mean);
    }
  }

  // First output row of each (esa, angle) grid row.
  std::vector<std::size_t> first(static_cast<std::size_t>(n_rows) + 1, 0);
  for (std::size_t r = 0; r < static_cast<std::size_t>(n_rows); ++r) {
    first[r + 1] = first[r] + row_stats[r].n;
  }

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n_rows; ++r) {
    const std::size_t e = static_cast<std::size_t>(r) / kAngleBins;
    const int a = static_cast<int>(static_cast<std::size_t>(r) % kAngleBins);
    std::size_t out = first[static_cast<std::size_t>(r)];
    for (std::size_t t = 0; t < n_time; ++t) {
      const std::size_t cell = grid.index(e, a, t);
      if (!grid.present_at(cell)) continue;
      double* row = m.values.data() + out * kFeatureCount;
      fill_identity(row, grid, e, a, t, cell, fov);
      put_moments(row, Feature::kSumAngle, row_stats[static_cast<std::size_t>(r)]);
      const auto& cs = col_stats[e * n_time + t];
      put_moments(row, Feature::kSumTime, cs);
      row[idx(Feature::kMeanThetaCountsRatio)] = cs.mean / std::max(min_mean[e], kRatioFloor);
      put_moments(row, Feature::kSumEsa, esa_stats[static_cast<std::size_t>(a) * n_time + t]);
      const auto nbr = neighbor_counts(grid, e, a, t);
      std::copy(nbr.begin(), nbr.end(), row + idx(Feature::kNbrUp));
      ++out;
    }
  }
  return m;
}

void write_feature_matrix(std::ostream& out, const FeatureMatrix& m) {
  out << "orbit,arc,esa,angle_bin,time_index";
  for (const auto name : kFeatureNames) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto& k = m.keys[r];
    out << fmt::format("{},{},{},{},{}", k.arc.orbit, k.arc.arc, k.esa, k.angle, k.time);
    for (const double v : m.row(r)) out << fmt::format(",{}", v);
    out << '\n';
  }
}

}  // namespace enacull
