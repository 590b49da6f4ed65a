#pragma once

#include <optional>
#include <span>
#include <vector>

namespace grlhf::stats {

double mean(std::span<const double> v);
/// Population variance (divides by n).
double population_variance(std::span<const double> v);
/// Sample variance (divides by n-1).
double sample_variance(std::span<const double> v);
/// Quantile with linear interpolation between order statistics (q in [0,1]).
double quantile(std::span<const double> v, double q);

struct TTest {
  double t = 0.0;
  double p = 1.0;   // two-sided
  double df = 0.0;
  bool degenerate = false;  // zero variance; t is 0 or +-inf
};

/// Welch's unequal-variance two-sample t-test, t = (mean(a) - mean(b)) / se.
TTest welch_t(std::span<const double> a, std::span<const double> b);
/// One-sample t-test of paired differences against zero.
TTest paired_t(std::span<const double> diffs);

struct IqrNormalized {
  std::vector<double> values;
  double q1 = 0.0;
  double q3 = 0.0;
  bool degenerate = false;  // Q3 == Q1; values are left unscaled (x - Q1)
};

/// (x - Q1) / (Q3 - Q1); quartiles by linear interpolation.
IqrNormalized normalize_iqr(std::span<const double> values);

}  // namespace grlhf::stats
