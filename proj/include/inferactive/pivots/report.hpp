#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace inferactive {

inline double two_sided_p(double pivot) {
  if (!(pivot >= 0.0 && pivot <= 1.0))
    throw std::invalid_argument("two_sided_p: pivot must lie in [0,1]");
  return std::clamp(2.0 * std::min(pivot, 1.0 - pivot), 0.0, 1.0);
}

// One pivot evaluation against a hypothesized parameter value.
struct PivotReport {
  std::string target;  // what the parameter is (e.g. "mean" or a coefficient name)
  std::string method;  // tg | plugin-randomized | boot-nonrand | boot-wild | boot-weighted | mc-conditional
  double pivot = 0.5;
  double p_value = 1.0;
  double mc_se = 0.0;   // Monte Carlo standard error; 0 for deterministic methods
  std::string note;     // non-fatal caveats, e.g. degenerate resampling distributions

  static PivotReport make(std::string target, std::string method, double pivot,
                          double mc_se = 0.0) {
    PivotReport r;
    r.target = std::move(target);
    r.method = std::move(method);
    r.pivot = pivot;
    r.p_value = two_sided_p(pivot);
    r.mc_se = mc_se;
    return r;
  }
};

// Confidence set from pivot inversion; endpoints may be +/-inf when the pivot
// never crosses the cut level inside the search grid.
struct IntervalReport {
  std::string target;
  double level = 0.9;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  int grid_points = 401;
};

// One row of the inference table stored in the session file.
struct InferenceReport {
  std::string target;
  std::string method;
  double estimate = 0.0;
  double pivot = 0.5;
  double p_value = 1.0;
  double mc_se = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double level = 0.9;
  std::uint64_t seed = 0;
};

}  // namespace inferactive
