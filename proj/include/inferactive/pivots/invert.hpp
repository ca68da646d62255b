#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "inferactive/pivots/report.hpp"

namespace inferactive {

struct InvertOptions {
  int grid_points = 401;
  double half_width_se = 10.0;  // grid spans point_estimate +/- half_width_se * se
  double mc_se = 0.0;           // Monte Carlo error of pivot_fn; widens the monotonicity slack
  std::string target;
};

// Confidence interval by pivot inversion.  pivot_fn(m) is the pivot at
// hypothesized mean m, nonincreasing in m for valid pivots; the level-(1-a)
// set is { m : a/2 <= pivot(m) <= 1 - a/2 }.  The pivot is evaluated on a
// uniform grid and each cut level is located by linear interpolation between
// the bracketing grid points.  A cut the pivot has already passed at the left
// edge yields -inf; one it never reaches yields +inf.  Rises beyond three
// Monte Carlo standard errors mean the pivot is not invertible as given and
// raise an error instead of returning a garbled interval.
template <class F>
IntervalReport invert_pivot(F&& pivot_fn, double point_estimate, double se, double alpha,
                            const InvertOptions& opts = {}) {
  if (!(se > 0.0)) throw std::invalid_argument("invert_pivot: se must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("invert_pivot: alpha must lie in (0, 1]");
  if (opts.grid_points < 3) throw std::invalid_argument("invert_pivot: need at least 3 grid points");

  const int K = opts.grid_points;
  const double lo = point_estimate - opts.half_width_se * se;
  const double hi = point_estimate + opts.half_width_se * se;
  const double dm = (hi - lo) / (K - 1);
  std::vector<double> ms(K), ps(K);
  for (int i = 0; i < K; ++i) {
    ms[i] = lo + dm * i;
    ps[i] = pivot_fn(ms[i]);
    if (!(ps[i] >= 0.0 && ps[i] <= 1.0))
      throw std::runtime_error("invert_pivot: pivot outside [0,1] at m=" + std::to_string(ms[i]));
  }
  const double slack = 3.0 * opts.mc_se + 1e-9;
  for (int i = 0; i + 1 < K; ++i)
    if (ps[i + 1] > ps[i] + slack)
      throw std::runtime_error(
          "invert_pivot: pivot rises along the grid by more than the Monte Carlo slack; "
          "not invertible");

  auto cross_below = [&](double cut) {
    if (ps.front() <= cut) return -std::numeric_limits<double>::infinity();
    for (int i = 0; i + 1 < K; ++i) {
      if (ps[i + 1] <= cut) {
        double run = ps[i] - ps[i + 1];
        if (run <= 0.0) return ms[i + 1];
        return ms[i] + dm * (ps[i] - cut) / run;
      }
    }
    return std::numeric_limits<double>::infinity();
  };

  IntervalReport out;
  out.target = opts.target;
  out.level = 1.0 - alpha;
  out.grid_points = K;
  out.lower = cross_below(1.0 - 0.5 * alpha);
  out.upper = cross_below(0.5 * alpha);
  return out;
}

}  // namespace inferactive
