#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "inferactive/math/rng.hpp"
#include "inferactive/pivots/report.hpp"

namespace inferactive {

struct McOptions {
  long long max_proposals = 100000000;
  std::string target;
};

// Brute-force conditional Monte Carlo p-value: simulate datasets from the
// hypothesized model, keep those where the selection predicate fires, and
// report the fraction of kept draws whose statistic reaches the observed one.
// This is the assumption-free reference the faster machinery is checked
// against; cost grows with 1/P(selection), and the proposal budget turns a
// hopeless selection probability into an error instead of a hang.
//
// The returned report's pivot and p_value both carry the one-sided
// P(stat >= observed | selection); no two-sided folding is applied because
// the quantity is already a p-value.
template <class Sampler, class Predicate, class Statistic>
PivotReport conditional_mc_pvalue(Sampler&& sample_model, Predicate&& predicate,
                                  Statistic&& statistic, double observed_stat,
                                  long long n_accepted, Rng& rng, const McOptions& opts = {}) {
  if (n_accepted < 1)
    throw std::invalid_argument("conditional_mc_pvalue: need at least one accepted draw");
  long long accepted = 0, proposals = 0, exceed = 0;
  while (accepted < n_accepted) {
    if (proposals >= opts.max_proposals)
      throw std::runtime_error(
          "conditional_mc_pvalue: proposal budget exhausted with acceptance rate " +
          std::to_string(static_cast<double>(accepted) / static_cast<double>(proposals)) +
          "; the selection event is too rare to hit by rejection");
    auto draw = sample_model(rng);
    ++proposals;
    if (!predicate(draw)) continue;
    ++accepted;
    if (statistic(draw) >= observed_stat) ++exceed;
  }
  double p = static_cast<double>(exceed) / static_cast<double>(n_accepted);
  PivotReport r;
  r.target = opts.target;
  r.method = "mc-conditional";
  r.pivot = p;
  r.p_value = p;
  r.mc_se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(n_accepted));
  return r;
}

}  // namespace inferactive
