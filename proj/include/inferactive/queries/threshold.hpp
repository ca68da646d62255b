#pragma once

#include <optional>
#include <stdexcept>

#include "inferactive/queries/outcome.hpp"
#include "inferactive/randomization.hpp"

namespace inferactive {

// Randomized z-test: report whether sqrt(n)*ybar + omega exceeds tau.  With no
// randomization attached the event is the plain truncation sqrt(n)*ybar > tau.
struct ThresholdQuery {
  double tau = 0.0;
  std::optional<Randomization> randomization;  // one-dimensional noise
};

// The optimization variable is z = sqrt(n)*ybar + omega, supported on z > tau
// when the event held (z <= tau when it did not).
inline QueryOutcome threshold_solve_with(const ThresholdQuery& q, double sqrt_n_ybar,
                                         double omega) {
  double z = sqrt_n_ybar + omega;
  QueryOutcome out;
  out.event_held = z > q.tau;
  if (out.event_held) {
    out.selected = {0};
    out.signs = {1.0};
  }
  out.aux_selected.resize(1);
  out.aux_selected[0] = z;
  out.aux_unselected.resize(0);
  return out;
}

inline QueryOutcome threshold_solve(const ThresholdQuery& q, double sqrt_n_ybar, Rng& rng) {
  double omega = q.randomization ? q.randomization->sample1(rng) : 0.0;
  return threshold_solve_with(q, sqrt_n_ybar, omega);
}

inline double threshold_reconstruct(const ThresholdQuery&, double z, double sqrt_n_ybar) {
  return z - sqrt_n_ybar;
}

inline double threshold_support_project(const ThresholdQuery& q, double z, bool event_held) {
  double margin = 1e-8 * (1.0 + std::fabs(q.tau));
  if (event_held) return z > q.tau ? z : q.tau + margin;
  return z <= q.tau ? z : q.tau - margin;
}

}  // namespace inferactive
