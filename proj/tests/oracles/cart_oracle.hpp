#pragma once

// Exhaustive greedy CART over every feature and every midpoint, built recursively,
// plus a recursive tree walk. Nodes are emitted in preorder.

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <vector>

#include "enacull/forest.hpp"

namespace oracle {

using Row = std::array<double, 28>;

struct Frac {
  __int128 num, den;  // den == 0 is +infinity
};

inline bool less(const Frac& a, const Frac& b) {
  if (a.den == 0) return false;
  if (b.den == 0) return true;
  return a.num * b.den < b.num * a.den;
}

class GreedyCart {
 public:
  GreedyCart(const std::vector<Row>& rows, const std::vector<int>& good, int min_leaf, int max_depth)
      : rows_(rows), good_(good), min_leaf_(min_leaf), max_depth_(max_depth) {}

  std::vector<enacull::TreeNode> fit() {
    std::vector<int> all(rows_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    grow(all, 0);
    return nodes_;
  }

 private:
  int grow(const std::vector<int>& idx, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    long long n = static_cast<long long>(idx.size()), g = 0;
    for (int i : idx) g += good_[i];
    nodes_[id].good_fraction = static_cast<double>(g) / static_cast<double>(n);
    nodes_[id].n_samples = static_cast<double>(n);
    if (g == 0 || g == n || n < 2LL * min_leaf_ || (max_depth_ > 0 && depth >= max_depth_)) return id;

    Frac best{1, 0};
    int best_f = -1;
    double best_thr = 0;
    for (int f = 0; f < 28; ++f) {
      std::set<double> values;
      for (int i : idx) values.insert(rows_[i][f]);
      std::vector<double> v(values.begin(), values.end());
      for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        double thr = (v[k] + v[k + 1]) / 2.0;
        if (!(thr < v[k + 1])) thr = v[k];
        long long nl = 0, gl = 0;
        for (int i : idx) {
          if (rows_[i][f] <= thr) {
            ++nl;
            gl += good_[i];
          }
        }
        const long long nr = n - nl, gr = g - gl;
        const Frac s{__int128(gl) * (nl - gl) * nr + __int128(gr) * (nr - gr) * nl, __int128(nl) * nr};
        if (less(s, best)) {
          best = s;
          best_f = f;
          best_thr = thr;
        }
      }
    }
    const Frac parent{__int128(g) * (n - g), __int128(n)};
    if (best_f < 0 || !less(best, parent)) return id;

    std::vector<int> left, right;
    for (int i : idx) (rows_[i][best_f] <= best_thr ? left : right).push_back(i);
    nodes_[id].feature = best_f;
    nodes_[id].threshold = best_thr;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const std::vector<Row>& rows_;
  const std::vector<int>& good_;
  int min_leaf_, max_depth_;
  std::vector<enacull::TreeNode> nodes_;
};

inline double walk(const std::vector<enacull::TreeNode>& nodes, const double* row, int at = 0) {
  const auto& n = nodes[at];
  if (n.feature < 0) return n.good_fraction;
  return walk(nodes, row, row[n.feature] <= n.threshold ? n.left : n.right);
}

/// Mean of per-tree walks, summed in tree order.
inline double forest_walk(const enacull::Forest& f, const double* row) {
  double s = 0;
  for (const auto& t : f.trees) s += walk(t.nodes, row);
  return s / static_cast<double>(f.trees.size());
}

}  // namespace oracle
