#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "inferactive/math/rng.hpp"
#include "inferactive/pivots/report.hpp"
#include "inferactive/queries/threshold.hpp"
#include "inferactive/randomization.hpp"
#include "inferactive/sampler/build.hpp"
#include "inferactive/sampler/langevin.hpp"

namespace inferactive {

namespace detail {

// sqrt(n) * (mean of a with-replacement resample - mean of y), B times.
inline Eigen::VectorXd boot_centered_stats(const Eigen::VectorXd& y, int B, Rng& rng) {
  const Eigen::Index n = y.size();
  const double ybar = y.mean();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  Eigen::VectorXd s(B);
  for (int b = 0; b < B; ++b) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      acc += y[static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)))];
    s[b] = sqrt_n * (acc / static_cast<double>(n) - ybar);
  }
  return s;
}

inline void check_boot_inputs(const Eigen::VectorXd& y, int B) {
  if (y.size() < 2) throw std::invalid_argument("bootstrap pivot: need at least 2 observations");
  if (B < 1000) throw std::invalid_argument("bootstrap pivot: need at least 1000 resamples");
}

inline bool is_constant(const Eigen::VectorXd& y) {
  return y.maxCoeff() - y.minCoeff() == 0.0;
}

}  // namespace detail

// Bootstrap pivot for a hard (non-randomized) threshold on sqrt(n) ybar.
// The sampling law of the centered statistic is replaced by its resampling
// estimate F-hat, giving
//   [F-hat(sqrt(n)(ybar - m)) - F-hat(tau - sqrt(n) m)] / [1 - F-hat(tau - sqrt(n) m)].
// Constant data collapses F-hat to a point mass: the pivot degenerates to 0
// or 1 and the report carries a note instead of failing.
inline PivotReport boot_pivot_nonrand(const Eigen::VectorXd& y, double m, double tau, int B,
                                      Rng& rng, std::string target = "mean") {
  detail::check_boot_inputs(y, B);
  const double sqrt_n = std::sqrt(static_cast<double>(y.size()));
  const double t_obs = sqrt_n * y.mean();
  if (!(t_obs > tau))
    throw std::invalid_argument("bootstrap pivot: statistic did not clear the threshold");

  Eigen::VectorXd s = detail::boot_centered_stats(y, B, rng);
  const double a = t_obs - sqrt_n * m;   // observed centered statistic under mean m
  const double cut = tau - sqrt_n * m;   // selection cut on the centered scale
  long long den = 0, num = 0;
  for (int b = 0; b < B; ++b) {
    if (s[b] > cut) {
      ++den;
      if (s[b] <= a) ++num;
    }
  }
  if (den == 0)
    throw std::runtime_error(
        "bootstrap pivot: no resample cleared the threshold; selection probability "
        "estimate is zero at this mean");
  double pivot = static_cast<double>(num) / static_cast<double>(den);
  double mc_se = std::sqrt(std::max(pivot * (1.0 - pivot), 1e-12) / static_cast<double>(den));
  PivotReport r = PivotReport::make(std::move(target), "boot-nonrand", pivot, mc_se);
  if (detail::is_constant(y)) r.note = "degenerate resampling distribution (constant data)";
  return r;
}

// Randomized-threshold analogue that replaces the indicator of clearing the
// cut with its probability under the randomization: each resample is weighted
// by P(omega > tau - sqrt(n) m - s_b), so no resample is wasted and the
// selection adjustment is smooth in m.
inline PivotReport weighted_boot_pivot(const Eigen::VectorXd& y, double m, double tau,
                                       const Randomization& G, int B, Rng& rng,
                                       std::string target = "mean") {
  detail::check_boot_inputs(y, B);
  const double sqrt_n = std::sqrt(static_cast<double>(y.size()));
  Eigen::VectorXd s = detail::boot_centered_stats(y, B, rng);
  const double a = sqrt_n * (y.mean() - m);

  Eigen::VectorXd w(B);
  for (int b = 0; b < B; ++b) w[b] = std::exp(G.log_sf(tau - sqrt_n * m - s[b]));
  double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::runtime_error(
        "weighted bootstrap pivot: total selection weight underflowed; the threshold is "
        "unreachable from this mean");

  double num = 0.0;
  for (int b = 0; b < B; ++b)
    if (s[b] <= a) num += w[b];
  double pivot = num / total;
  // Delta-method standard error of the self-normalized weighted fraction.
  double varsum = 0.0;
  for (int b = 0; b < B; ++b) {
    double d = (s[b] <= a ? 1.0 : 0.0) - pivot;
    varsum += w[b] * w[b] * d * d;
  }
  double mc_se = std::sqrt(varsum) / total;
  PivotReport r = PivotReport::make(std::move(target), "boot-weighted", pivot, mc_se);
  if (detail::is_constant(y)) r.note = "degenerate resampling distribution (constant data)";
  return r;
}

struct WildBootOptions {
  double step_size = 0.0;  // <= 0: automatic
  int batches = 32;
  std::string target = "mean";
};

// Wild-bootstrap pivot for the randomized threshold.  The multipliers
// alpha ~ N(0, I_n) define the bootstrap statistic
//   T*(alpha) = sqrt(n) m + n^{-1/2} sum_i (y_i - m) alpha_i,
// and the chain targets the joint law of (alpha, z) given the noisy statistic
// z = T*(alpha) + omega cleared tau.  Only the scalar T*(alpha) is retained;
// the pivot is the fraction of retained draws at or below the observed
// statistic, with a batch-means Monte Carlo standard error.
inline PivotReport wild_boot_pivot(const Eigen::VectorXd& y, double m, double tau,
                                   const Randomization& G, long long steps, Rng& rng,
                                   const WildBootOptions& opts = {}) {
  const Eigen::Index n = y.size();
  if (n < 2) throw std::invalid_argument("wild bootstrap pivot: need at least 2 observations");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  Eigen::VectorXd centered = y.array() - m;
  if (centered.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument(
        "wild bootstrap pivot: centered data are identically zero; the multiplier "
        "distribution is degenerate");

  SelectiveDensity den;
  den.data_mean = Eigen::VectorXd::Zero(n);
  den.data_sd = Eigen::VectorXd::Ones(n);
  OptBlock blk;
  blk.label = "wild-threshold";
  blk.a_data = (-centered / sqrt_n).transpose();
  blk.a_v = Eigen::MatrixXd::Constant(1, 1, 1.0);
  blk.b = Eigen::VectorXd::Constant(1, -sqrt_n * m);
  blk.randomization = G;
  ThresholdQuery q;
  q.tau = tau;
  blk.project = [q](Eigen::VectorXd& v) { v[0] = threshold_support_project(q, v[0], true); };
  den.blocks.push_back(std::move(blk));
  Eigen::VectorXd init = Eigen::VectorXd::Zero(n + 1);
  init[n] = std::max(sqrt_n * m, tau + G.scale + 1e-3);
  den.init_state = init;
  detail::fill_precondition(den);

  LangevinOptions lo;
  lo.steps = steps;
  lo.step_size = opts.step_size;
  lo.retain = Eigen::MatrixXd::Zero(1, n + 1);
  lo.retain.block(0, 0, 1, n) = (centered / sqrt_n).transpose();
  LangevinChain chain = langevin_sample(den, den.init_state, lo, rng);

  const Eigen::Index R = chain.states.rows();
  if (R < 2 * opts.batches)
    throw std::invalid_argument("wild bootstrap pivot: chain too short for the batch count");
  const double a = sqrt_n * (y.mean() - m);  // observed centered statistic
  double pivot = 0.0;
  for (Eigen::Index i = 0; i < R; ++i) pivot += chain.states(i, 0) <= a ? 1.0 : 0.0;
  pivot /= static_cast<double>(R);

  const Eigen::Index B = opts.batches;
  const Eigen::Index len = R / B;
  Eigen::VectorXd bm(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    double acc = 0.0;
    for (Eigen::Index i = b * len; i < (b + 1) * len; ++i)
      acc += chain.states(i, 0) <= a ? 1.0 : 0.0;
    bm[b] = acc / static_cast<double>(len);
  }
  double mean_b = bm.mean();
  double var_b = (bm.array() - mean_b).square().sum() / static_cast<double>(B - 1);
  return PivotReport::make(opts.target, "boot-wild", pivot,
                           std::sqrt(var_b / static_cast<double>(B)));
}

}  // namespace inferactive
