#pragma once

// Small grid and forest builders shared by the unit tests.

#include <cstdint>
#include <random>
#include <vector>

#include "enacull/core.hpp"
#include "enacull/forest.hpp"

namespace testing {

inline std::vector<enacull::TimeInterval> times(std::size_t n, double duration = 60.0) {
  std::vector<enacull::TimeInterval> out;
  for (std::size_t t = 0; t < n; ++t) {
    out.push_back({static_cast<int>(t), 60.0 * static_cast<double>(t), duration});
  }
  return out;
}

inline enacull::Observation obs(int esa, int angle, int time, std::int64_t count,
                                enacull::OrbitArcId arc = {1, 'a'}) {
  enacull::Observation o;
  o.arc = arc;
  o.esa = enacull::EsaStep(esa);
  o.angle = enacull::AngleBin(angle);
  o.time = {time, 60.0 * time, 60.0};
  o.count = count;
  return o;
}

/// Grid with random counts over the given ESA steps; `mask_fraction` of cells absent.
inline enacull::ArcGrid random_grid(std::uint64_t seed, std::vector<int> esa_steps, std::size_t n_time,
                                    double mask_fraction = 0.0, int max_count = 20,
                                    enacull::OrbitArcId arc = {1, 'a'}) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> cnt(0, max_count);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<enacull::EsaStep> steps;
  for (int e : esa_steps) steps.emplace_back(e);
  enacull::ArcGrid grid(arc, steps, times(n_time));
  for (std::size_t e = 0; e < steps.size(); ++e) {
    for (int a = 0; a < enacull::kAngleBins; ++a) {
      for (std::size_t t = 0; t < n_time; ++t) {
        if (u(gen) < mask_fraction) continue;
        auto o = obs(esa_steps[e], a, static_cast<int>(t), cnt(gen), arc);
        o.bg_low = cnt(gen);
        o.bg_high = cnt(gen);
        o.earth_not_visible = u(gen) > 0.1;
        o.moon_not_visible = u(gen) > 0.1;
        o.sun_not_visible = u(gen) > 0.1;
        o.sme_label = u(gen) < 0.7 ? enacull::Label::kGood : enacull::Label::kBad;
        grid.set(o, e, t);
      }
    }
  }
  return grid;
}

inline enacull::Tree leaf_tree(double fraction) {
  enacull::Tree t;
  enacull::TreeNode n;
  n.good_fraction = fraction;
  n.n_samples = 1;
  t.nodes.push_back(n);
  return t;
}

inline enacull::Forest constant_forest(double fraction, int n_trees = 1) {
  enacull::Forest f;
  for (int i = 0; i < n_trees; ++i) f.trees.push_back(leaf_tree(fraction));
  f.config.n_trees = n_trees;
  return f;
}

}  // namespace testing
