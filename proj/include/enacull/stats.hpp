#pragma once

// Label agreement, distribution and map comparison statistics.

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "enacull/rates.hpp"

namespace enacull {

struct ConfusionCounts {
  std::size_t tp = 0;  // positive class: good time
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

struct ConfusionMetrics {
  ConfusionCounts counts;
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

ConfusionMetrics confusion_metrics(const ConfusionCounts& counts);
/// Labels are 0/1; positions where either side is negative (no label) are skipped.
ConfusionMetrics confusion_metrics(std::span<const std::int8_t> predicted,
                                   std::span<const std::int8_t> reference);

/// Empirical CDF with a distribution-free confidence band of half-width
/// sqrt(ln(2 / alpha) / (2 n)).
struct Ecdf {
  std::vector<double> sorted;
  double half_width = 0.0;

  double operator()(double x) const;
  double lower(double x) const;
  double upper(double x) const;
};

Ecdf ecdf_with_band(std::span<const double> sample, double alpha = 0.01);

/// c(alpha) in the asymptotic two-sample critical value; exactly 1.628 at alpha = 0.01,
/// sqrt(-ln(alpha / 2) / 2) otherwise.
double ks_coefficient(double alpha);

struct KsResult {
  double d_statistic = 0.0;
  std::size_t n = 0;
  std::size_t m = 0;
  double critical_value = 0.0;
  bool reject = false;
};

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha = 0.01);

inline constexpr int kMaxLag = 3;
using CcfVector = std::array<double, 2 * kMaxLag + 1>;  // lags -3..+3

/// Entry k + 3 is the Pearson correlation of pairs (x[t], y[t + k]) over the indices
/// where both are defined (NaN marks a missing value). If y is x delayed by one index
/// (y[t] = x[t - 1]) the peak sits at lag +1.
CcfVector ccf_lags(std::span<const double> x, std::span<const double> y);

/// Pearson correlation over pairs where both values are defined.
double pearson(std::span<const double> x, std::span<const double> y);

struct TTestResult {
  double t_statistic = 0.0;
  int degrees_of_freedom = 2 * kMaxLag;
  double p_value = 1.0;
  bool reject = false;
  bool zero_variance = false;  // differences are constant
};

/// Two-sided paired t-test on the seven lag differences v1 - v2.
TTestResult paired_t_test(const CcfVector& v1, const CcfVector& v2, double alpha = 0.01);

struct CccResult {
  double ccc = 0.0;
  double pearson_r = 0.0;
  bool pass_095 = false;
};

/// Lin's concordance with population (1/n) moments.
CccResult lin_ccc(std::span<const double> x, std::span<const double> y);

/// Test alpha after an optional three-way Bonferroni correction.
double test_alpha(double alpha, bool bonferroni);

struct MapComparison {
  KsResult ks;
  CcfVector ccf_reference{};  // reference map with itself
  CcfVector ccf_cross{};      // reference with candidate
  TTestResult t;
  CccResult ccc;
  bool ks_pass = false;
  bool ccf_pass = false;
  bool ccc_pass = false;
};

/// KS on the non-empty pixel values of each map, ccf over the row-major flattening
/// (south row first, west to east) with empty pixels dropped pairwise, and CCC on
/// pixels non-empty in both. Each test uses test_alpha(alpha, bonferroni).
MapComparison compare_maps(const SkyMap& reference, const SkyMap& candidate, double alpha,
                           bool bonferroni);

struct MapTestRow {
  std::string tag;
  int esa = 0;
  std::optional<std::array<bool, 3>> passes;  // KS, CCF, CCC; absent = untested
};

struct EsaTally {
  int esa = 0;
  std::size_t tested = 0;
  std::size_t untested = 0;
  std::array<std::size_t, 3> case_passes{};  // case k: at least k+1 tests passed

  std::optional<double> case_percent(int k) const;
};

struct MapTestSummary {
  std::vector<MapTestRow> rows;
  std::vector<EsaTally> by_esa;
  bool bonferroni = false;
  double per_test_alpha = 0.01;
};

MapTestSummary summarize_map_tests(std::vector<MapTestRow> rows, double alpha, bool bonferroni);

/// Rows are map tags, columns test x ESA; cells "pass", "FAIL" or "-".
void write_map_test_report(std::ostream& out, const MapTestSummary& summary);
/// tag,esa,ks_pass,ccf_pass,ccc_pass,tests_passed
void write_map_test_csv(std::ostream& out, const MapTestSummary& summary);

/// Central empirical interval at `level` (e.g. 0.95) of a sample.
std::pair<double, double> empirical_interval(std::span<const double> values, double level = 0.95);

}  // namespace enacull
