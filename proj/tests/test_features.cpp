#include <doctest.h>

#include <cmath>
#include <sstream>

#include "enacull/features.hpp"
#include "oracles/feature_oracle.hpp"
#include "support.hpp"

using namespace enacull;

namespace {

ArcGrid grid_from(std::vector<std::tuple<int, int, int, std::int64_t>> cells, std::size_t n_time,
                  std::vector<int> steps = {2, 3, 4, 5, 6}) {
  std::vector<EsaStep> esa;
  for (int s : steps) esa.emplace_back(s);
  ArcGrid g({1, 'a'}, esa, testing::times(n_time));
  for (const auto& [e, a, t, c] : cells) {
    g.set(testing::obs(e, a, t, c), g.esa_index(EsaStep(e)), static_cast<std::size_t>(t));
  }
  return g;
}

bool close(double a, double b) {
  return std::fabs(a - b) <= 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)});
}

void check_against_oracle(const ArcGrid& g, const FovCellFlags* fov = nullptr) {
  const auto m = compute_features(g, fov);
  const auto expected = oracle::brute_features(g, fov);
  REQUIRE(m.rows() == expected.size());
  REQUIRE(m.rows() == g.n_present());
  std::size_t mismatches = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (!close(m.values[r * kFeatureCount + f], expected[r][f])) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("angle bin moments") {
    const auto g = grid_from({{3, 7, 0, 1}, {3, 7, 1, 2}, {3, 7, 2, 3}, {3, 8, 0, 4}, {3, 8, 1, 4},
                              {3, 9, 1, 7}},
                             3, {3});
    const auto s = angle_bin_stats(g, 0, 7);
    CHECK(s.sum == 6.0);
    CHECK(s.mean == 2.0);
    CHECK(s.variance == 1.0);
    CHECK(angle_bin_stats(g, 0, 8).variance == 0.0);
    const auto one = angle_bin_stats(g, 0, 9);
    CHECK(one.sum == 7.0);
    CHECK(one.mean == 7.0);
    CHECK(one.variance == 0.0);
    CHECK_THROWS_AS(angle_bin_stats(g, 0, 10), Error);
  }

  TEST_CASE("time interval moments skip masked cells") {
    std::vector<std::tuple<int, int, int, std::int64_t>> cells;
    for (int a = 0; a < 60; ++a) cells.push_back({2, a, 0, a == 59 ? 60 : 0});
    for (int a = 0; a < 30; ++a) cells.push_back({2, a, 1, 5});
    const auto g = grid_from(cells, 2, {2});
    CHECK(time_interval_stats(g, 0, 0).mean == 1.0);
    const auto half = time_interval_stats(g, 0, 1);
    CHECK(half.n == 30);
    CHECK(half.variance == 0.0);
    CHECK(half.sum == 150.0);
  }

  TEST_CASE("across-ESA moments") {
    const auto g = grid_from({{2, 0, 0, 1}, {3, 0, 0, 1}, {4, 0, 0, 1}, {5, 0, 0, 1}, {6, 0, 0, 6},
                              {6, 1, 0, 9}},
                             1);
    CHECK(across_esa_stats(g, 0, 0).mean == 2.0);
    const auto one = across_esa_stats(g, 1, 0);
    CHECK(one.sum == 9.0);
    CHECK(one.mean == 9.0);
    CHECK(one.variance == 0.0);
    try {
      across_esa_stats(g, 2, 0);
      FAIL("expected missing data");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingData);
    }
  }

  TEST_CASE("column mean ratio") {
    std::vector<std::tuple<int, int, int, std::int64_t>> cells;
    for (int a = 0; a < 60; ++a) {
      cells.push_back({4, a, 0, 2});
      cells.push_back({4, a, 1, 4});
      cells.push_back({4, a, 2, 8});
    }
    const auto g = grid_from(cells, 3, {4});
    CHECK(mean_theta_counts_ratio(g, 0, 0) == 1.0);
    CHECK(mean_theta_counts_ratio(g, 0, 1) == 2.0);
    CHECK(mean_theta_counts_ratio(g, 0, 2) == 4.0);

    const auto z = grid_from({{4, 0, 0, 0}, {4, 0, 1, 3}}, 2, {4});
    CHECK(mean_theta_counts_ratio(z, 0, 1) == doctest::Approx(3.0 / 1e-6));
    CHECK(std::isfinite(mean_theta_counts_ratio(z, 0, 0)));
  }

  TEST_CASE("neighbor wrap and clamp conventions") {
    auto g = testing::random_grid(3, {2}, 4);
    auto nb = neighbor_counts(g, 0, 0, 0);
    const double self = static_cast<double>(g.count(0, 0, 0));
    CHECK(nb[idx(Feature::kNbrDown) - idx(Feature::kNbrUp)] == g.count(0, 59, 0));
    CHECK(nb[idx(Feature::kNbrUp) - idx(Feature::kNbrUp)] == g.count(0, 1, 0));
    CHECK(nb[idx(Feature::kNbrLeft) - idx(Feature::kNbrUp)] == self);
    CHECK(nb[idx(Feature::kNbrUpRight) - idx(Feature::kNbrUp)] == self);
    CHECK(nb[idx(Feature::kNbrDownLeft) - idx(Feature::kNbrUp)] == self);
    CHECK(nb[idx(Feature::kNbrUpLeft) - idx(Feature::kNbrUp)] == g.count(0, 1, 1));
    CHECK(nb[idx(Feature::kNbrDownRight) - idx(Feature::kNbrUp)] == g.count(0, 59, 1));

    const auto constant = grid_from([] {
      std::vector<std::tuple<int, int, int, std::int64_t>> cells;
      for (int a = 0; a < 60; ++a)
        for (int t = 0; t < 3; ++t) cells.push_back({5, a, t, 4});
      return cells;
    }(), 3, {5});
    for (double v : neighbor_counts(constant, 0, 30, 1)) CHECK(v == 4.0);
  }

  TEST_CASE("single-cell arc") {
    const auto g = grid_from({{6, 12, 0, 9}}, 1, {6});
    const auto m = compute_features(g);
    REQUIRE(m.rows() == 1);
    for (auto f : {Feature::kSumAngle, Feature::kMeanAngle, Feature::kSumTime, Feature::kMeanTime,
                   Feature::kSumEsa, Feature::kMeanEsa, Feature::kCounts}) {
      CHECK(m.at(0, f) == 9.0);
    }
    for (auto f : {Feature::kVarAngle, Feature::kVarTime, Feature::kVarEsa}) CHECK(m.at(0, f) == 0.0);
    CHECK(m.at(0, Feature::kMeanThetaCountsRatio) == 1.0);
    for (std::size_t f = idx(Feature::kNbrUp); f < kFeatureCount; ++f) CHECK(m.values[f] == 9.0);
  }

  TEST_CASE("small arcs equal brute-force recomputation") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      check_against_oracle(testing::random_grid(seed, {3}, 3, 0.2));
      check_against_oracle(testing::random_grid(seed + 100, {2, 3, 4, 5, 6}, 5, 0.3));
    }
  }

  TEST_CASE("fov flags force the visibility features to zero") {
    const auto g = testing::random_grid(8, {2, 4}, 6, 0.1);
    FovCellFlags fov(3u * 60 * 6, 0);
    fov[(0 * 60 + 5) * 6 + 2] = 1;
    fov[(1 * 60 + 6) * 6 + 3] = 1;
    fov[(2 * 60 + 7) * 6 + 4] = 1;
    check_against_oracle(g, &fov);
    FovCellFlags wrong(10, 0);
    CHECK_THROWS_AS(compute_features(g, &wrong), Error);
  }

  TEST_CASE("parallel kernel matches the serial reference exactly") {
    const auto g = testing::random_grid(42, {2, 3, 4, 5, 6}, 30, 0.15, 200);
    const auto a = compute_features(g);
    const auto b = compute_features_reference(g);
    CHECK(a.keys == b.keys);
    CHECK(a.cells == b.cells);
    CHECK(a.sme == b.sme);
    CHECK(a.values == b.values);
  }

  TEST_CASE("angle shift permutes neighbor features") {
    const auto g = testing::random_grid(12, {3, 4}, 8, 0.1);
    const int k = 17;
    ArcGrid shifted(g.arc(), g.esa_steps(), g.times());
    for (const auto& o : g.flatten()) {
      auto moved = o;
      moved.angle = o.angle.shifted(k);
      shifted.set(moved, g.esa_index(o.esa), static_cast<std::size_t>(o.time.index));
    }
    for (std::size_t e = 0; e < g.n_esa(); ++e) {
      for (int a = 0; a < 60; ++a) {
        for (std::size_t t = 0; t < g.n_time(); ++t) {
          if (!g.present(e, a, t)) continue;
          CHECK(neighbor_counts(g, e, a, t) == neighbor_counts(shifted, e, (a + k) % 60, t));
        }
      }
    }
  }

  TEST_CASE("schema fingerprint and matrix writer") {
    CHECK(feature_schema_fingerprint() == feature_schema_fingerprint());
    CHECK(feature_schema_fingerprint() != 0);
    const auto m = compute_features(grid_from({{2, 0, 0, 1}, {2, 1, 0, 2}}, 1, {2}));
    std::ostringstream out;
    write_feature_matrix(out, m);
    const auto text = out.str();
    CHECK(text.rfind("orbit,arc,esa,angle_bin,time_index,esa_step,", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  }
}
