#pragma once

#include <cmath>
#include <algorithm>
#include <span>
#include <vector>

namespace enacull {

/// Neumaier-compensated running sum. Used wherever a mean feeds a threshold
/// comparison, so exact decimal cases (e.g. 30 x 0.8 / 60) land on the rounded value.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

inline double compensated_mean(std::span<const double> xs) {
  CompensatedSum s;
  for (const double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

/// Quantile at p in [0,1] by linear interpolation between order statistics
/// (h = (n - 1) p). `values` must be non-empty.
inline double quantile_linear(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace enacull
