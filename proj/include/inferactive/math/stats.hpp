#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace inferactive {

inline double mean_of(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("mean_of: empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double variance_of(const std::vector<double>& x) {
  if (x.size() < 2) throw std::invalid_argument("variance_of: need at least 2 points");
  double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double sd_of(const std::vector<double>& x) { return std::sqrt(variance_of(x)); }

// Kolmogorov-Smirnov distance between a sample and the uniform law on [0,1].
inline double ks_uniform(std::vector<double> u) {
  if (u.empty()) throw std::invalid_argument("ks_uniform: empty sample");
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double hi = (static_cast<double>(i) + 1.0) / n - u[i];
    double lo = u[i] - static_cast<double>(i) / n;
    d = std::max(d, std::max(hi, lo));
  }
  return d;
}

// Two-sample Kolmogorov-Smirnov distance.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    // Advance both samples through all ties at the current point before
    // comparing the empirical CDFs, so that equal values contribute zero.
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// Effective sample size of a set of importance weights, (sum w)^2 / sum w^2.
inline double effective_sample_size(const std::vector<double>& w) {
  double s1 = 0.0, s2 = 0.0;
  for (double v : w) {
    s1 += v;
    s2 += v * v;
  }
  if (s2 <= 0.0) return 0.0;
  return s1 * s1 / s2;
}

}  // namespace inferactive
