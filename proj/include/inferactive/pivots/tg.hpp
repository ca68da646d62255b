#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "inferactive/math/normal.hpp"

namespace inferactive {

// Exact pivot for a unit-variance Gaussian statistic observed only when it
// exceeds a hard threshold: P(Z <= t | Z > tau) under Z ~ N(m, 1).
//
//   (Phi(t - m) - Phi(tau - m)) / (1 - Phi(tau - m))
//
// Computed as 1 - sf(t - m)/sf(tau - m) through log survival functions so it
// stays accurate far into the tail (tau - m >> 1), where the naive difference
// of CDFs is 0/0.
inline double tg_pivot(double t, double m, double tau) {
  if (!(t >= tau))
    throw std::invalid_argument("tg_pivot: statistic below the threshold that selected it");
  double log_ratio = log_norm_sf(t - m) - log_norm_sf(tau - m);
  // t >= tau makes the ratio <= 1, so log_ratio <= 0 and -expm1 lands in [0, 1].
  return std::clamp(-std::expm1(log_ratio), 0.0, 1.0);
}

}  // namespace inferactive
