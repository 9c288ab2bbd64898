#include "enacull/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>


namespace enacull {

namespace {
constexpr std::uint64_t kSampleStream = 0x5A4D;
constexpr std::uint64_t kTreeStreamBase = 0x7EE5'0000;
}  // namespace

void TrainConfig::validate() const {
  require(n_trees >= 1, ErrorCode::kConfig, "n_trees must be >= 1");
  require(mtry >= 1 && mtry <= static_cast<int>(kFeatureCount), ErrorCode::kConfig,
          "mtry must lie in [1,28]");
  require(min_leaf >= 1, ErrorCode::kConfig, "min_leaf must be >= 1");
  require(max_depth >= 0, ErrorCode::kConfig, "max_depth must be >= 0");
  require(sample_size >= 1, ErrorCode::kConfig, "sample_size must be >= 1");
  require(threshold >= 0.0 && threshold <= 1.0, ErrorCode::kConfig,
          "threshold must lie in [0,1]");
}

double gini_impurity(double n_good, double n_bad) {
  require(n_good >= 0.0 && n_bad >= 0.0 && n_good + n_bad >= 1.0, ErrorCode::kContract,
          "gini impurity of an empty node");
  const double p = n_good / (n_good + n_bad);
  return 2.0 * p * (1.0 - p);
}

double split_midpoint(double lo, double hi) {
  double mid = (lo + hi) / 2.0;
  if (!std::isfinite(mid)) mid = lo / 2.0 + hi / 2.0;
  return mid < hi ? mid : lo;
}

const TreeNode& Tree::leaf_for(std::span<const double> row) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    node = &nodes[static_cast<std::size_t>(
        row[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left
                                                                        : node->right)];
  }
  return *node;
}

// ---------------------------------------------------------------------------
// Training data

TrainingSet make_training_set(const FeatureMatrix& pool, std::span<const std::int8_t> labels,
                              std::span<const std::size_t> rows) {
  require(labels.size() == pool.rows(), ErrorCode::kContract, "label count != pool rows");
  TrainingSet set;
  set.n = rows.size();
  set.columns.resize(kFeatureCount * set.n);
  set.good.resize(set.n);
  set.source_rows.assign(rows.begin(), rows.end());
  for (std::size_t i = 0; i < set.n; ++i) {
    const std::size_t r = rows[i];
    require(labels[r] >= 0, ErrorCode::kTrainingData,
            fmt::format("pool row {} has no label", r));
    set.good[i] = static_cast<std::uint8_t>(labels[r]);
    const auto values = pool.row(r);
    for (std::size_t f = 0; f < kFeatureCount; ++f) set.columns[f * set.n + i] = values[f];
  }
  return set;
}

TrainingSet sample_training_set(const FeatureMatrix& pool, std::span<const std::int8_t> labels,
                                int held_out_orbit, const TrainConfig& config) {
  require(labels.size() == pool.rows(), ErrorCode::kContract, "label count != pool rows");
  std::vector<std::size_t> candidates;
  for (std::size_t r = 0; r < pool.rows(); ++r) {
    if (labels[r] >= 0 && pool.keys[r].arc.orbit != held_out_orbit) candidates.push_back(r);
  }
  require(!candidates.empty(), ErrorCode::kTrainingData,
          fmt::format("no labeled training rows outside orbit {}", held_out_orbit));
  std::sort(candidates.begin(), candidates.end(),
            [&](std::size_t a, std::size_t b) { return pool.keys[a] < pool.keys[b]; });

  const std::size_t k = std::min(config.sample_size, candidates.size());
  Rng rng(config.seed, kSampleStream);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(k);
  for (const std::size_t r : candidates) {
    require(pool.keys[r].arc.orbit != held_out_orbit, ErrorCode::kContract,
            "held-out orbit row entered the training sample");
  }
  return make_training_set(pool, labels, candidates);
}

SplitIndex::SplitIndex(const TrainingSet& data) {
  std::vector<std::uint32_t> order(data.n);
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    const double* col = data.columns.data() + f * data.n;
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    auto& values = distinct[f];
    auto& ranks = rank[f];
    ranks.resize(data.n);
    for (const std::uint32_t i : order) {
      if (values.empty() || values.back() < col[i]) values.push_back(col[i]);
      ranks[i] = static_cast<std::uint32_t>(values.size() - 1);
    }
  }
}

// ---------------------------------------------------------------------------
// Tree fitting

namespace {

using Wide = __int128;

/// Child impurity up to a constant factor, gL bL / nL + gR bR / nR, held as an exact
/// fraction so equal scores compare equal and ties resolve by scan order.
struct Score {
  Wide num = 1;
  Wide den = 0;  // den == 0 encodes +infinity

  bool operator<(const Score& o) const {
    if (den == 0) return false;
    if (o.den == 0) return true;
    return num * o.den < o.num * den;
  }
};

inline Score split_score(std::int64_t n_left, std::int64_t g_left, std::int64_t n, std::int64_t g) {
  const std::int64_t n_right = n - n_left;
  const std::int64_t g_right = g - g_left;
  const Wide left = Wide(g_left) * (n_left - g_left);
  const Wide right = Wide(g_right) * (n_right - g_right);
  return {left * n_right + right * n_left, Wide(n_left) * n_right};
}

struct Split {
  Score score;
  int feature = -1;
  std::uint32_t split_rank = 0;  // rows with rank <= split_rank go left
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& data, const SplitIndex& index,
              std::span<const std::uint32_t> weights, const TrainConfig& config, Rng& rng)
      : data_(data), index_(index), weights_(weights), config_(config), rng_(rng) {
    std::size_t max_distinct = 0;
    for (const auto& d : index_.distinct) max_distinct = std::max(max_distinct, d.size());
    hist_n_.assign(max_distinct, 0);
    hist_g_.assign(max_distinct, 0);
    for (std::size_t i = 0; i < data_.n; ++i) {
      if (weights_[i] > 0) rows_.push_back(static_cast<std::uint32_t>(i));
    }
  }

  Tree build() {
    require(!rows_.empty(), ErrorCode::kTrainingData, "cannot fit a tree on an empty sample");
    struct Pending {
      std::size_t begin, end;
      int depth;
      int parent;
      bool right;
    };
    Tree tree;
    std::vector<Pending> stack{{0, rows_.size(), 0, -1, false}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      const int id = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      if (p.parent >= 0) {
        auto& parent = tree.nodes[static_cast<std::size_t>(p.parent)];
        (p.right ? parent.right : parent.left) = id;
      }

      std::int64_t n = 0;
      std::int64_t g = 0;
      for (std::size_t i = p.begin; i < p.end; ++i) {
        const std::uint32_t r = rows_[i];
        n += weights_[r];
        g += weights_[r] * data_.good[r];
      }
      TreeNode& node = tree.nodes.back();
      node.good_fraction = static_cast<double>(g) / static_cast<double>(n);
      node.n_samples = static_cast<double>(n);

      const bool pure = g == 0 || g == n;
      const bool small = n < 2 * static_cast<std::int64_t>(config_.min_leaf);
      const bool deep = config_.max_depth > 0 && p.depth >= config_.max_depth;
      if (pure || small || deep) continue;

      const Split best = find_split(p.begin, p.end, n, g);
      const Score parent{Wide(g) * (n - g), Wide(n)};
      if (best.feature < 0 || !(best.score < parent)) continue;

      node.feature = best.feature;
      node.threshold = best.threshold;
      const auto& rank = index_.rank[static_cast<std::size_t>(best.feature)];
      const auto mid = std::partition(
          rows_.begin() + static_cast<std::ptrdiff_t>(p.begin),
          rows_.begin() + static_cast<std::ptrdiff_t>(p.end),
          [&](std::uint32_t r) { return rank[r] <= best.split_rank; });
      const auto split = static_cast<std::size_t>(mid - rows_.begin());
      stack.push_back({split, p.end, p.depth + 1, id, true});
      stack.push_back({p.begin, split, p.depth + 1, id, false});
    }
    return tree;
  }

 private:
  std::array<int, kFeatureCount> draw_features() {
    std::array<int, kFeatureCount> all{};
    std::iota(all.begin(), all.end(), 0);
    const auto m = static_cast<std::size_t>(config_.mtry);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + rng_.below(kFeatureCount - i);
      std::swap(all[i], all[j]);
    }
    std::sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
    return all;
  }

  Split find_split(std::size_t begin, std::size_t end, std::int64_t n, std::int64_t g) {
    const auto chosen = draw_features();
    Split best;
    for (std::size_t c = 0; c < static_cast<std::size_t>(config_.mtry); ++c) {
      const auto f = static_cast<std::size_t>(chosen[c]);
      const std::size_t n_distinct = index_.distinct[f].size();
      if (n_distinct <= 4 * (end - begin)) {
        scan_histogram(f, begin, end, n, g, best);
      } else {
        scan_sorted(f, begin, end, n, g, best);
      }
    }
    return best;
  }

  void consider(std::size_t f, std::uint32_t lo_rank, std::uint32_t hi_rank, std::int64_t n_left,
                std::int64_t g_left, std::int64_t n, std::int64_t g, Split& best) const {
    const Score score = split_score(n_left, g_left, n, g);
    if (score < best.score) {
      const auto& values = index_.distinct[f];
      best.score = score;
      best.feature = static_cast<int>(f);
      best.split_rank = lo_rank;
      best.threshold = split_midpoint(values[lo_rank], values[hi_rank]);
    }
  }

  void scan_histogram(std::size_t f, std::size_t begin, std::size_t end, std::int64_t n,
                      std::int64_t g, Split& best) {
    const auto& rank = index_.rank[f];
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = rows_[i];
      hist_n_[rank[r]] += weights_[r];
      hist_g_[rank[r]] += weights_[r] * data_.good[r];
    }
    const std::size_t n_distinct = index_.distinct[f].size();
    std::int64_t n_left = 0;
    std::int64_t g_left = 0;
    bool have_prev = false;
    std::uint32_t prev = 0;
    for (std::uint32_t v = 0; v < n_distinct; ++v) {
      if (hist_n_[v] == 0) continue;
      if (have_prev) consider(f, prev, v, n_left, g_left, n, g, best);
      n_left += hist_n_[v];
      g_left += hist_g_[v];
      hist_n_[v] = 0;
      hist_g_[v] = 0;
      prev = v;
      have_prev = true;
    }
  }

  void scan_sorted(std::size_t f, std::size_t begin, std::size_t end, std::int64_t n,
                   std::int64_t g, Split& best) {
    const auto& rank = index_.rank[f];
    sorted_.clear();
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = rows_[i];
      sorted_.push_back({rank[r], weights_[r], weights_[r] * data_.good[r]});
    }
    std::sort(sorted_.begin(), sorted_.end(),
              [](const Entry& a, const Entry& b) { return a.rank < b.rank; });
    std::int64_t n_left = 0;
    std::int64_t g_left = 0;
    std::size_t i = 0;
    bool have_prev = false;
    std::uint32_t prev = 0;
    while (i < sorted_.size()) {
      const std::uint32_t v = sorted_[i].rank;
      if (have_prev) consider(f, prev, v, n_left, g_left, n, g, best);
      for (; i < sorted_.size() && sorted_[i].rank == v; ++i) {
        n_left += sorted_[i].n;
        g_left += sorted_[i].g;
      }
      prev = v;
      have_prev = true;
    }
  }

  struct Entry {
    std::uint32_t rank;
    std::uint32_t n;
    std::uint32_t g;
  };

  const TrainingSet& data_;
  const SplitIndex& index_;
  std::span<const std::uint32_t> weights_;
  const TrainConfig& config_;
  Rng& rng_;
  std::vector<std::uint32_t> rows_;
  std::vector<std::uint32_t> hist_n_;
  std::vector<std::uint32_t> hist_g_;
  std::vector<Entry> sorted_;
};

}  // namespace

Tree fit_tree(const TrainingSet& data, const SplitIndex& index,
              std::span<const std::uint32_t> weights, const TrainConfig& config, Rng& rng) {
  config.validate();
  require(weights.size() == data.n, ErrorCode::kContract, "weight count != sample rows");
  return TreeBuilder(data, index, weights, config, rng).build();
}

Tree fit_tree(const TrainingSet& data, const TrainConfig& config, Rng& rng) {
  const SplitIndex index(data);
  const std::vector<std::uint32_t> weights(data.n, 1u);
  return fit_tree(data, index, weights, config, rng);
}

Forest fit_forest(const TrainingSet& data, const TrainConfig& config) {
  config.validate();
  require(data.n > 0, ErrorCode::kTrainingData, "cannot fit a forest on an empty sample");
  const SplitIndex index(data);
  Forest forest;
  forest.config = config;
  forest.trees.resize(static_cast<std::size_t>(config.n_trees));
  const auto n_trees = static_cast<std::ptrdiff_t>(config.n_trees);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t t = 0; t < n_trees; ++t) {
    Rng rng(config.seed, kTreeStreamBase + static_cast<std::uint64_t>(t));
    std::vector<std::uint32_t> weights(data.n, 0u);
    for (std::size_t i = 0; i < data.n; ++i) ++weights[rng.below(data.n)];
    forest.trees[static_cast<std::size_t>(t)] = TreeBuilder(data, index, weights, config, rng).build();
  }
  return forest;
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

void check_schema(const Forest& forest) {
  require(forest.schema == feature_schema_fingerprint(), ErrorCode::kContract,
          "forest feature schema does not match this build's 28-feature layout");
  require(!forest.trees.empty(), ErrorCode::kContract, "forest has no trees");
}

// Plain sum in tree order, so the result is reproducible by walking the trees by hand.
double predict_row(const Forest& forest, std::span<const double> row) {
  double sum = 0.0;
  for (const auto& tree : forest.trees) {
    const double p = tree.predict(row);
    sum += forest.config.hard_vote ? (p >= 0.5 ? 1.0 : 0.0) : p;
  }
  return std::clamp(sum / static_cast<double>(forest.trees.size()), 0.0, 1.0);
}

}  // namespace

double predict_proba(const Forest& forest, std::span<const double> row) {
  check_schema(forest);
  require(row.size() == kFeatureCount, ErrorCode::kContract,
          fmt::format("feature row has {} values, expected {}", row.size(), kFeatureCount));
  return predict_row(forest, row);
}

std::vector<double> predict_proba(const Forest& forest, const FeatureMatrix& matrix) {
  check_schema(forest);
  std::vector<double> out(matrix.rows());
  const auto n = static_cast<std::ptrdiff_t>(matrix.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    out[static_cast<std::size_t>(r)] = predict_row(forest, matrix.row(static_cast<std::size_t>(r)));
  }
  return out;
}

std::vector<double> predict_proba_serial(const Forest& forest, const FeatureMatrix& matrix) {
  check_schema(forest);
  std::vector<double> out(matrix.rows());
  for (std::size_t r = 0; r < matrix.rows(); ++r) out[r] = predict_row(forest, matrix.row(r));
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void save_forest(std::ostream& out, const Forest& forest) {
  const auto& c = forest.config;
  out << "enacull-forest 1\n";
  out << fmt::format("schema {:016x}\n", forest.schema);
  out << fmt::format("config {} {} {} {} {} {} {} {}\n", c.n_trees, c.mtry, c.min_leaf,
                     c.max_depth, c.sample_size, c.seed, c.threshold, c.hard_vote ? 1 : 0);
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& nodes = forest.trees[t].nodes;
    out << fmt::format("tree {} {}\n", t, nodes.size());
    for (const auto& n : nodes) {
      out << fmt::format("{} {} {} {} {} {}\n", n.feature, n.threshold, n.left, n.right,
                         n.good_fraction, n.n_samples);
    }
  }
}

Forest load_forest(std::istream& in) {
  auto bad = [](const std::string& what) -> Error {
    return Error(ErrorCode::kSchema, "forest file: " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != "enacull-forest 1") throw bad("unsupported header");

  Forest forest;
  std::string word;
  {
    if (!std::getline(in, line)) throw bad("missing schema line");
    std::istringstream ls(line);
    std::string hex;
    if (!(ls >> word >> hex) || word != "schema") throw bad("malformed schema line");
    forest.schema = std::stoull(hex, nullptr, 16);
  }
  {
    if (!std::getline(in, line)) throw bad("missing config line");
    std::istringstream ls(line);
    auto& c = forest.config;
    int hard = 0;
    if (!(ls >> word >> c.n_trees >> c.mtry >> c.min_leaf >> c.max_depth >> c.sample_size >>
          c.seed >> c.threshold >> hard) ||
        word != "config") {
      throw bad("malformed config line");
    }
    c.hard_vote = hard != 0;
  }
  for (int t = 0; t < forest.config.n_trees; ++t) {
    if (!std::getline(in, line)) throw bad("truncated tree list");
    std::istringstream ls(line);
    std::size_t index = 0;
    std::size_t count = 0;
    if (!(ls >> word >> index >> count) || word != "tree" || index != static_cast<std::size_t>(t) ||
        count == 0) {
      throw bad(fmt::format("malformed header for tree {}", t));
    }
    Tree tree;
    tree.nodes.resize(count);
    for (auto& n : tree.nodes) {
      if (!std::getline(in, line)) throw bad("truncated node list");
      std::istringstream ns(line);
      if (!(ns >> n.feature >> n.threshold >> n.left >> n.right >> n.good_fraction >>
            n.n_samples)) {
        throw bad(fmt::format("malformed node in tree {}", t));
      }
      const bool leaf = n.is_leaf();
      const bool links_ok = leaf || (n.left > 0 && n.right > 0 &&
                                     static_cast<std::size_t>(n.left) < count &&
                                     static_cast<std::size_t>(n.right) < count);
      if (!links_ok || n.feature >= static_cast<int>(kFeatureCount) ||
          !(n.good_fraction >= 0.0 && n.good_fraction <= 1.0) || !std::isfinite(n.threshold)) {
        throw bad(fmt::format("invalid node in tree {}", t));
      }
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace enacull
