#pragma once

// Bagged CART ensemble producing per-observation good-time probabilities.

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "enacull/features.hpp"
#include "enacull/rng.hpp"

namespace enacull {

struct TrainConfig {
  int n_trees = 500;
  int mtry = 5;        // floor(sqrt(28))
  int min_leaf = 5;    // nodes with fewer than 2 * min_leaf samples are not split
  int max_depth = 0;   // 0 = unlimited
  std::size_t sample_size = 250000;
  std::uint64_t seed = 0;
  double threshold = 0.40;
  bool hard_vote = false;  // average leaf fractions unless set

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double good_fraction = 0.0;
  double n_samples = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Nodes in preorder (node, left subtree, right subtree); root at index 0.
/// Rows with value <= threshold go left.
struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(std::span<const double> row) const;
  double predict(std::span<const double> row) const { return leaf_for(row).good_fraction; }
  bool operator==(const Tree&) const = default;
};

struct Forest {
  std::vector<Tree> trees;
  TrainConfig config;
  std::uint64_t schema = feature_schema_fingerprint();

  bool operator==(const Forest& o) const { return trees == o.trees && schema == o.schema; }
};

/// Column-major training rows with binary labels (1 = good time).
struct TrainingSet {
  std::size_t n = 0;
  std::vector<double> columns;  // [feature * n + row]
  std::vector<std::uint8_t> good;
  std::vector<std::size_t> source_rows;  // row index in the pool each sample came from

  double value(std::size_t row, std::size_t feature) const { return columns[feature * n + row]; }
};

/// Builds a training set from chosen pool rows; `labels` holds -1/0/1 per pool row.
TrainingSet make_training_set(const FeatureMatrix& pool, std::span<const std::int8_t> labels,
                              std::span<const std::size_t> rows);

/// Uniform sample without replacement of min(sample_size, available) labeled rows whose
/// orbit differs from `held_out_orbit` (both arcs of that orbit are excluded). Candidates
/// are put in canonical key order before drawing, so pool row order does not matter.
TrainingSet sample_training_set(const FeatureMatrix& pool, std::span<const std::int8_t> labels,
                                int held_out_orbit, const TrainConfig& config);

/// 2p(1 - p) with p = n_good / (n_good + n_bad).
double gini_impurity(double n_good, double n_bad);

/// Per-feature sorted distinct values and each row's rank among them; shared by all
/// trees of a forest.
struct SplitIndex {
  std::array<std::vector<double>, kFeatureCount> distinct;
  std::array<std::vector<std::uint32_t>, kFeatureCount> rank;

  explicit SplitIndex(const TrainingSet& data);
};

/// Midpoint between consecutive distinct values, kept strictly below `hi`.
double split_midpoint(double lo, double hi);

/// Greedy CART on `data` with per-row multiplicities `weights`. At each splittable node a
/// fresh subset of mtry features is drawn; candidate thresholds are midpoints of
/// consecutive distinct values; the split minimising weighted child impurity wins, ties
/// going to the lowest feature index and then the lowest threshold. A node becomes a
/// leaf when pure, when it holds fewer than 2 * min_leaf samples, at max_depth, or when
/// no split lowers impurity.
Tree fit_tree(const TrainingSet& data, const SplitIndex& index,
              std::span<const std::uint32_t> weights, const TrainConfig& config, Rng& rng);
/// Unit weights: the tree sees every row exactly once.
Tree fit_tree(const TrainingSet& data, const TrainConfig& config, Rng& rng);

/// n_trees trees, tree i on its own bootstrap drawn from stream (seed, i).
/// Parallel over trees; identical output for any thread count.
Forest fit_forest(const TrainingSet& data, const TrainConfig& config);

double predict_proba(const Forest& forest, std::span<const double> row);
/// Probabilities for every matrix row; parallel over rows.
std::vector<double> predict_proba(const Forest& forest, const FeatureMatrix& matrix);
std::vector<double> predict_proba_serial(const Forest& forest, const FeatureMatrix& matrix);

void save_forest(std::ostream& out, const Forest& forest);
Forest load_forest(std::istream& in);

}  // namespace enacull
