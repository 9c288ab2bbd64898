#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "enacull/features.hpp"
#include "enacull/forest.hpp"
#include "enacull/pipeline.hpp"
#include "enacull/simulator.hpp"
#include "support.hpp"

using namespace enacull;

namespace {

ProbabilityGrid noisy_prob(const ArcGrid& g, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ProbabilityGrid prob(g.n_esa(), g.n_time());
  for (std::size_t c = 0; c < g.n_cells(); ++c) {
    if (g.present_at(c)) prob.values[c] = u(gen) < 0.5 ? 0.3 * u(gen) : 0.3 + 0.7 * u(gen);
  }
  return prob;
}

}  // namespace

TEST_SUITE("properties") {
  TEST_CASE("grid round trip preserves the observation multiset") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto g = testing::random_grid(seed, {2, 4, 6}, 7, 0.25);
      auto rows = g.flatten();
      std::shuffle(rows.begin(), rows.end(), std::mt19937_64(seed));
      const auto back = build_grid(rows, g.arc(), g.esa_steps(), g.n_time());
      CHECK(back.flatten() == g.flatten());
      for (std::size_t c = 0; c < g.n_cells(); ++c) CHECK(back.present_at(c) == g.present_at(c));
    }
  }

  TEST_CASE("moment features are internally consistent") {
    const auto g = testing::random_grid(3, {2, 3, 4, 5, 6}, 12, 0.2, 5);
    const auto m = compute_features(g);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto& k = m.keys[r];
      const std::array<std::tuple<Feature, Feature, Feature, MomentStats>, 3> groups{{
          {Feature::kSumAngle, Feature::kMeanAngle, Feature::kVarAngle,
           angle_bin_stats(g, g.esa_index(EsaStep(k.esa)), k.angle)},
          {Feature::kSumTime, Feature::kMeanTime, Feature::kVarTime,
           time_interval_stats(g, g.esa_index(EsaStep(k.esa)), static_cast<std::size_t>(k.time))},
          {Feature::kSumEsa, Feature::kMeanEsa, Feature::kVarEsa,
           across_esa_stats(g, k.angle, static_cast<std::size_t>(k.time))},
      }};
      for (const auto& [fs, fm, fv, stats] : groups) {
        const double sum = m.at(r, fs), mean = m.at(r, fm), var = m.at(r, fv);
        CHECK(std::fabs(sum - mean * static_cast<double>(stats.n)) <= 1e-9 * std::max(1.0, sum));
        CHECK(var >= 0.0);
      }
    }
    // Variance is zero exactly when all contributing values agree.
    for (std::size_t e = 0; e < g.n_esa(); ++e) {
      for (int a = 0; a < kAngleBins; ++a) {
        std::vector<std::int64_t> values;
        for (std::size_t t = 0; t < g.n_time(); ++t)
          if (g.present(e, a, t)) values.push_back(g.count(e, a, t));
        if (values.empty()) continue;
        const bool equal = std::all_of(values.begin(), values.end(), [&](auto v) { return v == values[0]; });
        CHECK((angle_bin_stats(g, e, a).variance == 0.0) == equal);
      }
    }
  }

  TEST_CASE("probabilities stay in [0,1] and rise with a leaf") {
    const auto g = testing::random_grid(8, {3, 5}, 15, 0.1);
    const auto pool = compute_features(g);
    TrainConfig c;
    c.n_trees = 9;
    c.sample_size = 1000;
    auto forest = fit_forest(sample_training_set(pool, pool.sme, 99, c), c);
    const auto before = predict_proba(forest, pool);
    for (double p : before) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    for (auto& node : forest.trees[4].nodes) {
      if (node.is_leaf()) node.good_fraction = std::min(1.0, node.good_fraction + 0.3);
    }
    const auto after = predict_proba(forest, pool);
    for (std::size_t r = 0; r < before.size(); ++r) CHECK(after[r] >= before[r]);
  }

  TEST_CASE("stage 2 ignores angle order within a column") {
    const auto g = testing::random_grid(4, {2, 3}, 10, 0.1);
    const auto prob = noisy_prob(g, 4);
    ProbabilityGrid permuted(g.n_esa(), g.n_time());
    std::vector<int> perm(kAngleBins);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    std::vector<Observation> rows;
    for (auto o : g.flatten()) {
      o.angle = AngleBin(perm[static_cast<std::size_t>(o.angle.index())]);
      rows.push_back(o);
    }
    const auto pg = build_grid(rows, g.arc(), g.esa_steps(), g.n_time());
    for (std::size_t e = 0; e < g.n_esa(); ++e)
      for (int a = 0; a < kAngleBins; ++a)
        for (std::size_t t = 0; t < g.n_time(); ++t)
          permuted.values[permuted.index(e, perm[static_cast<std::size_t>(a)], t)] = prob.at(e, a, t);
    const auto s = stage2(g, prob, {}, PipelineConfig{});
    const auto sp = stage2(pg, permuted, {}, PipelineConfig{});
    CHECK(s.labels.column_good == sp.labels.column_good);
    for (std::size_t i = 0; i < s.column_probability.size(); ++i) {
      if (std::isnan(s.column_probability[i])) {
        CHECK(std::isnan(sp.column_probability[i]));
      } else {
        CHECK(s.column_probability[i] == doctest::Approx(sp.column_probability[i]).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("culling is monotone and keeps field-of-view cells bad") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto g = testing::random_grid(seed, {2, 3, 4}, 30, 0.05);
      const auto fov = fov_cells_from_visibility(g);
      PipelineConfig config;
      config.stage3_run_len = 1 + static_cast<int>(seed % 3);
      const auto r = run_pipeline(noisy_prob(g, seed), g, fov, config);
      for (std::size_t c = 0; c < g.n_cells(); ++c) {
        if (r.stage3.labels[c] == 1) CHECK(r.stage2.labels.labels[c] == 1);
        if (!fov[c] || !g.present_at(c)) continue;
        CHECK(r.stage2.labels.labels[c] == 0);
        CHECK(r.stage3.labels[c] == 0);
      }
    }
  }

  TEST_CASE("burst declared on neighboring steps covers the step between") {
    for (int e = 3; e <= 5; ++e) {
      SimConfig c;
      c.n_time = 6;
      c.bursts.push_back({{e - 1, e + 1}, {4, 8}, {1, 3}, 2.0});
      const auto arc = simulate_arc(c);
      const auto mid = arc.grid.esa_index(EsaStep(e));
      for (int a = 4; a <= 8; ++a)
        for (std::size_t t = 1; t <= 3; ++t) CHECK(arc.grid.truth_at(arc.grid.index(mid, a, t)) == 0);
    }
  }
}
