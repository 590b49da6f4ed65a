#include "grlhf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "grlhf/error.hpp"

namespace grlhf::stats {
namespace {

double two_sided_p(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

TTest degenerate_result(double numerator, double df) {
  TTest r;
  r.degenerate = true;
  r.df = df;
  if (numerator == 0.0) {
    r.t = 0.0;
    r.p = 1.0;
  } else {
    r.t = numerator > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
  }
  return r;
}

}  // namespace

double mean(std::span<const double> v) {
  if (v.empty()) throw UsageError("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw UsageError("sample variance needs at least 2 values");
  return population_variance(v) * static_cast<double>(v.size()) / static_cast<double>(v.size() - 1);
}

double quantile(std::span<const double> v, double q) {
  if (v.empty()) throw UsageError("quantile of empty sample");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

TTest welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw UsageError("welch_t needs n >= 2 per sample");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_variance(a) / na;
  const double vb = sample_variance(b) / nb;
  const double diff = mean(a) - mean(b);
  const double se2 = va + vb;
  if (se2 == 0.0) return degenerate_result(diff, na + nb - 2.0);
  TTest r;
  r.t = diff / std::sqrt(se2);
  // Welch-Satterthwaite degrees of freedom.
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p = two_sided_p(r.t, r.df);
  return r;
}

TTest paired_t(std::span<const double> diffs) {
  if (diffs.size() < 2) throw UsageError("paired_t needs n >= 2");
  const double n = static_cast<double>(diffs.size());
  const double m = mean(diffs);
  const double var = sample_variance(diffs);
  if (var == 0.0) return degenerate_result(m, n - 1.0);
  TTest r;
  r.t = m / std::sqrt(var / n);
  r.df = n - 1.0;
  r.p = two_sided_p(r.t, r.df);
  return r;
}

IqrNormalized normalize_iqr(std::span<const double> values) {
  if (values.size() < 4) throw UsageError("normalize_iqr needs at least 4 values");
  IqrNormalized out;
  out.q1 = quantile(values, 0.25);
  out.q3 = quantile(values, 0.75);
  const double range = out.q3 - out.q1;
  out.degenerate = !(range > 0.0);
  out.values.reserve(values.size());
  for (double x : values) out.values.push_back(out.degenerate ? x - out.q1 : (x - out.q1) / range);
  return out;
}

}  // namespace grlhf::stats
