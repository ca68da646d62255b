#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace inferactive {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343818685;
inline constexpr double log_sqrt_2pi = 0.9189385332046727417803297364056176398;
inline constexpr double sqrt2 = 1.4142135623730950488016887242096980786;

inline double norm_pdf(double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

inline double log_norm_pdf(double x) { return -0.5 * x * x - log_sqrt_2pi; }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / sqrt2); }

// Upper tail P(Z > x).
inline double norm_sf(double x) { return 0.5 * std::erfc(x / sqrt2); }

// exp(x^2) * erfc(x), stable for large positive x where erfc underflows.
inline double erfcx(double x) {
  if (x < 25.0) {
    // Both factors representable: erfc(25) ~ 4.6e-274, exp(625) ~ 2.7e271.
    return std::exp(x * x) * std::erfc(x);
  }
  // Asymptotic series erfcx(x) ~ (1/(x sqrt(pi))) (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6)).
  const double ix2 = 1.0 / (x * x);
  return (1.0 / (x * std::sqrt(pi))) *
         (1.0 + ix2 * (-0.5 + ix2 * (0.75 - 1.875 * ix2)));
}

// log P(Z > x), stable over the whole real line.
inline double log_norm_sf(double x) {
  if (x <= 0.0) return std::log(norm_sf(x));  // sf in [1/2, 1], no cancellation
  return -0.5 * x * x + std::log(0.5 * erfcx(x / sqrt2));
}

// log P(Z <= x).
inline double log_norm_cdf(double x) { return log_norm_sf(-x); }

// log(1 - e^x) for x < 0 without cancellation.
inline double log1mexp(double x) {
  if (x >= 0.0) throw std::domain_error("log1mexp: argument must be negative");
  static const double log_half = std::log(0.5);
  return x < log_half ? std::log1p(-std::exp(x)) : std::log(-std::expm1(x));
}

// log(Phi(b) - Phi(a)) for a < b, stable in either tail.
inline double log_norm_cdf_diff(double a, double b) {
  if (!(a < b)) throw std::invalid_argument("log_norm_cdf_diff: requires a < b");
  if (a >= 0.0) {
    // both in the upper tail: sf(a) - sf(b)
    return log_norm_sf(a) + log1mexp(log_norm_sf(b) - log_norm_sf(a));
  }
  if (b <= 0.0) {
    // both in the lower tail: cdf(b) - cdf(a)
    return log_norm_cdf(b) + log1mexp(log_norm_cdf(a) - log_norm_cdf(b));
  }
  return std::log(norm_cdf(b) - norm_cdf(a));  // straddles zero, difference is O(1)
}

// Hazard phi(z) / P(Z > z); tends to z as z -> +inf, to 0 as z -> -inf.
inline double norm_hazard(double z) {
  static const double sqrt_2_over_pi = std::sqrt(2.0 / pi);
  if (z < -37.0) return norm_pdf(z);  // sf ~ 1 and exp(z^2/2) would overflow
  return sqrt_2_over_pi / erfcx(z / sqrt2);
}

}  // namespace inferactive
