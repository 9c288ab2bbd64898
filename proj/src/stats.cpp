#include "enacull/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "enacull/numeric.hpp"

namespace enacull {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(std::size_t num, std::size_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

void check_alpha(double alpha) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::kContract, "alpha must lie in (0,1)");
}

struct Moments {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double sxx = 0.0;  // population (1/n) moments
  double syy = 0.0;
  double sxy = 0.0;
  std::size_t n = 0;
};

/// Moments of the pairs where both values are defined.
Moments paired_moments(std::span<const double> x, std::span<const double> y) {
  Moments m;
  CompensatedSum sx;
  CompensatedSum sy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) continue;
    sx.add(x[i]);
    sy.add(y[i]);
    ++m.n;
  }
  if (m.n == 0) return m;
  const double n = static_cast<double>(m.n);
  m.mean_x = sx.value() / n;
  m.mean_y = sy.value() / n;
  CompensatedSum xx;
  CompensatedSum yy;
  CompensatedSum xy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) continue;
    const double dx = x[i] - m.mean_x;
    const double dy = y[i] - m.mean_y;
    xx.add(dx * dx);
    yy.add(dy * dy);
    xy.add(dx * dy);
  }
  m.sxx = xx.value() / n;
  m.syy = yy.value() / n;
  m.sxy = xy.value() / n;
  return m;
}
}  // namespace

ConfusionMetrics confusion_metrics(const ConfusionCounts& c) {
  ConfusionMetrics m;
  m.counts = c;
  if (c.total() > 0) m.accuracy = ratio(c.tp + c.tn, c.total());
  if (c.tp + c.fn > 0) m.sensitivity = ratio(c.tp, c.tp + c.fn);
  if (c.tn + c.fp > 0) m.specificity = ratio(c.tn, c.tn + c.fp);
  return m;
}

ConfusionMetrics confusion_metrics(std::span<const std::int8_t> predicted,
                                   std::span<const std::int8_t> reference) {
  require(predicted.size() == reference.size(), ErrorCode::kContract,
          fmt::format("label sequences differ in length ({} vs {})", predicted.size(),
                      reference.size()));
  require(!predicted.empty(), ErrorCode::kContract, "confusion metrics of empty label sequences");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] < 0 || reference[i] < 0) continue;
    const bool p = predicted[i] != 0;
    const bool r = reference[i] != 0;
    if (p && r) ++c.tp;
    else if (p) ++c.fp;
    else if (r) ++c.fn;
    else ++c.tn;
  }
  return confusion_metrics(c);
}

// ---------------------------------------------------------------------------
// eCDF and KS

double Ecdf::operator()(double x) const {
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
  return ratio(static_cast<std::size_t>(it - sorted.begin()), sorted.size());
}

double Ecdf::lower(double x) const { return std::max(0.0, (*this)(x) - half_width); }
double Ecdf::upper(double x) const { return std::min(1.0, (*this)(x) + half_width); }

Ecdf ecdf_with_band(std::span<const double> sample, double alpha) {
  check_alpha(alpha);
  require(!sample.empty(), ErrorCode::kContract, "eCDF of an empty sample");
  Ecdf e;
  e.sorted.assign(sample.begin(), sample.end());
  std::sort(e.sorted.begin(), e.sorted.end());
  e.half_width = std::min(1.0, std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(sample.size()))));
  return e;
}

double ks_coefficient(double alpha) {
  check_alpha(alpha);
  if (alpha == 0.01) return 1.628;
  return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha) {
  require(!a.empty() && !b.empty(), ErrorCode::kContract, "KS test needs two non-empty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  KsResult r;
  r.n = sa.size();
  r.m = sb.size();
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < sa.size() || j < sb.size()) {
    double x;
    if (j == sb.size()) x = sa[i];
    else if (i == sa.size()) x = sb[j];
    else x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    r.d_statistic = std::max(r.d_statistic, std::fabs(ratio(i, r.n) - ratio(j, r.m)));
  }
  const double n = static_cast<double>(r.n);
  const double m = static_cast<double>(r.m);
  r.critical_value = ks_coefficient(alpha) * std::sqrt((n + m) / (n * m));
  r.reject = r.d_statistic > r.critical_value;
  return r;
}

// ---------------------------------------------------------------------------
// Correlations

double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::kContract, "correlation of unequal-length sequences");
  const Moments m = paired_moments(x, y);
  require(m.n >= 2, ErrorCode::kContract,
          fmt::format("correlation needs at least 2 defined pairs, got {}", m.n));
  require(m.sxx > 0.0 && m.syy > 0.0, ErrorCode::kContract, "correlation of a constant sequence");
  return std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
}

CcfVector ccf_lags(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::kContract, "ccf of unequal-length sequences");
  require(x.size() >= 2 * kMaxLag + 2, ErrorCode::kContract,
          fmt::format("ccf needs at least {} points, got {}", 2 * kMaxLag + 2, x.size()));
  CcfVector out{};
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  for (int k = -kMaxLag; k <= kMaxLag; ++k) {
    // pairs (x[t], y[t + k]) for t in [max(0, -k), min(n, n - k))
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -k);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - k);
    out[static_cast<std::size_t>(k + kMaxLag)] =
        pearson(x.subspan(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi - lo)),
                y.subspan(static_cast<std::size_t>(lo + k), static_cast<std::size_t>(hi - lo)));
  }
  return out;
}

TTestResult paired_t_test(const CcfVector& v1, const CcfVector& v2, double alpha) {
  check_alpha(alpha);
  constexpr std::size_t n = std::tuple_size_v<CcfVector>;
  std::array<double, n> d{};
  for (std::size_t i = 0; i < n; ++i) d[i] = v1[i] - v2[i];
  const double mean = compensated_mean(d);
  CompensatedSum ss;
  for (const double x : d) ss.add((x - mean) * (x - mean));
  const double sd = std::sqrt(ss.value() / static_cast<double>(n - 1));

  TTestResult r;
  r.degrees_of_freedom = static_cast<int>(n) - 1;
  if (std::all_of(d.begin(), d.end(), [&](double x) { return x == d[0]; })) {
    r.zero_variance = true;
    if (d[0] == 0.0) return r;
    r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), d[0]);
    r.p_value = 0.0;
    r.reject = true;
    return r;
  }
  r.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(r.degrees_of_freedom));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t_statistic)));
  r.reject = r.p_value < alpha;
  return r;
}

CccResult lin_ccc(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::kContract, "concordance of unequal-length sequences");
  require(x.size() >= 2, ErrorCode::kContract, "concordance needs at least 2 pairs");
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(!std::isnan(x[i]) && !std::isnan(y[i]), ErrorCode::kContract,
            "concordance input holds an undefined value");
  }
  const Moments m = paired_moments(x, y);
  require(m.sxx > 0.0 && m.syy > 0.0, ErrorCode::kContract, "concordance of a constant sequence");
  CccResult r;
  const double dm = m.mean_x - m.mean_y;
  r.ccc = 2.0 * m.sxy / (m.sxx + m.syy + dm * dm);
  r.pearson_r = std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
  r.pass_095 = r.ccc > 0.95;
  return r;
}

double test_alpha(double alpha, bool bonferroni) {
  check_alpha(alpha);
  return bonferroni ? alpha / 3.0 : alpha;
}

MapComparison compare_maps(const SkyMap& reference, const SkyMap& candidate, double alpha,
                           bool bonferroni) {
  require(reference.value.size() == candidate.value.size(), ErrorCode::kContract,
          "map comparison of different shapes");
  const double a = test_alpha(alpha, bonferroni);
  std::vector<double> ref_values;
  std::vector<double> cand_values;
  std::vector<double> both_ref;
  std::vector<double> both_cand;
  for (std::size_t p = 0; p < reference.value.size(); ++p) {
    if (!reference.empty(p)) ref_values.push_back(reference.value[p]);
    if (!candidate.empty(p)) cand_values.push_back(candidate.value[p]);
    if (!reference.empty(p) && !candidate.empty(p)) {
      both_ref.push_back(reference.value[p]);
      both_cand.push_back(candidate.value[p]);
    }
  }
  MapComparison c;
  c.ks = ks_two_sample(ref_values, cand_values, a);
  c.ks_pass = !c.ks.reject;
  c.ccf_reference = ccf_lags(reference.value, reference.value);
  c.ccf_cross = ccf_lags(reference.value, candidate.value);
  c.t = paired_t_test(c.ccf_reference, c.ccf_cross, a);
  c.ccf_pass = !c.t.reject;
  c.ccc = lin_ccc(both_ref, both_cand);
  c.ccc_pass = c.ccc.pass_095;
  return c;
}

// ---------------------------------------------------------------------------
// Summary

std::optional<double> EsaTally::case_percent(int k) const {
  require(k >= 1 && k <= 3, ErrorCode::kContract, "case index must be 1, 2 or 3");
  if (tested == 0) return std::nullopt;
  return 100.0 * ratio(case_passes[static_cast<std::size_t>(k - 1)], tested);
}

MapTestSummary summarize_map_tests(std::vector<MapTestRow> rows, double alpha, bool bonferroni) {
  MapTestSummary s;
  s.bonferroni = bonferroni;
  s.per_test_alpha = test_alpha(alpha, bonferroni);
  std::sort(rows.begin(), rows.end(), [](const MapTestRow& a, const MapTestRow& b) {
    return std::tie(a.tag, a.esa) < std::tie(b.tag, b.esa);
  });
  std::map<int, EsaTally> tallies;
  for (const auto& row : rows) {
    EsaTally& t = tallies[row.esa];
    t.esa = row.esa;
    if (!row.passes) {
      ++t.untested;
      continue;
    }
    ++t.tested;
    const auto passed = static_cast<std::size_t>(std::count(row.passes->begin(), row.passes->end(), true));
    for (std::size_t k = 0; k < 3; ++k) t.case_passes[k] += passed >= k + 1;
  }
  s.rows = std::move(rows);
  for (const auto& [esa, t] : tallies) s.by_esa.push_back(t);
  return s;
}

void write_map_test_report(std::ostream& out, const MapTestSummary& s) {
  constexpr std::array<const char*, 3> kTests = {"KS", "CCF", "CCC>0.95"};
  std::vector<std::string> tags;
  for (const auto& r : s.rows) {
    if (tags.empty() || tags.back() != r.tag) tags.push_back(r.tag);
  }
  out << fmt::format("Map test summary (per-test alpha {}{})\n", s.per_test_alpha,
                     s.bonferroni ? ", Bonferroni" : "");
  out << fmt::format("{:<8}", "map");
  for (const char* test : kTests) {
    for (const auto& t : s.by_esa) out << fmt::format(" {:>12}", fmt::format("{} E{}", test, t.esa));
  }
  out << '\n';
  for (const auto& tag : tags) {
    out << fmt::format("{:<8}", tag);
    for (std::size_t k = 0; k < kTests.size(); ++k) {
      for (const auto& t : s.by_esa) {
        std::string cell = "-";
        for (const auto& r : s.rows) {
          if (r.tag == tag && r.esa == t.esa && r.passes) cell = (*r.passes)[k] ? "pass" : "FAIL";
        }
        out << fmt::format(" {:>12}", cell);
      }
    }
    out << '\n';
  }
  out << "\nPercent of maps passing at least k tests\n";
  out << fmt::format("{:<8} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "esa", "case1", "case2", "case3",
                     "tested", "untested");
  for (const auto& t : s.by_esa) {
    out << fmt::format("{:<8}", t.esa);
    for (int k = 1; k <= 3; ++k) {
      const auto p = t.case_percent(k);
      out << fmt::format(" {:>8}", p ? fmt::format("{:.1f}", *p) : std::string("NA"));
    }
    out << fmt::format(" {:>8} {:>8}\n", t.tested, t.untested);
  }
}

void write_map_test_csv(std::ostream& out, const MapTestSummary& s) {
  out << "tag,esa,ks_pass,ccf_pass,ccc_pass,tests_passed\n";
  for (const auto& r : s.rows) {
    if (!r.passes) {
      out << fmt::format("{},{},NA,NA,NA,NA\n", r.tag, r.esa);
      continue;
    }
    const auto& p = *r.passes;
    out << fmt::format("{},{},{},{},{},{}\n", r.tag, r.esa, int(p[0]), int(p[1]), int(p[2]),
                       int(p[0]) + int(p[1]) + int(p[2]));
  }
}

std::pair<double, double> empirical_interval(std::span<const double> values, double level) {
  require(!values.empty(), ErrorCode::kContract, "interval of an empty sample");
  require(level > 0.0 && level < 1.0, ErrorCode::kContract, "interval level must lie in (0,1)");
  const std::vector<double> v(values.begin(), values.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_linear(v, tail), quantile_linear(v, 1.0 - tail)};
}

}  // namespace enacull
