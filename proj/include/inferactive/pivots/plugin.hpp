#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "inferactive/math/normal.hpp"
#include "inferactive/math/rng.hpp"
#include "inferactive/pivots/report.hpp"
#include "inferactive/queries/threshold.hpp"
#include "inferactive/randomization.hpp"
#include "inferactive/sampler/build.hpp"
#include "inferactive/sampler/langevin.hpp"

namespace inferactive {

enum class PluginMethod { grid, mcmc };

struct PluginOptions {
  // Grid method: base trapezoid knots spanning m +/- grid_halfwidth.
  int grid_points = 1024;
  double grid_halfwidth = 12.0;
  // MCMC method: chain over (t, z) with z the randomized statistic kept above
  // the threshold.
  long long steps = 50000;
  double step_size = 0.05;
  int batches = 32;  // batch-means blocks for the Monte Carlo standard error
  std::uint64_t seed = 1;
  std::string target = "mean";
};

namespace detail {

// Fraction of the marginal selected mass lying at or below t, by trapezoid
// quadrature of exp(marginal_log_density_threshold).  The base grid is
// uniform; when the randomization scale is below the grid spacing the
// survival-function ramp at tau would fall inside a single cell, so extra
// knots are packed around tau to resolve it.  t itself is handled by a
// partial cell with the integrand interpolated linearly, which keeps the
// numerator exactly nondecreasing in t for a fixed knot set.
inline PivotReport plugin_grid(double t, double m, double tau, const Randomization& G,
                               const PluginOptions& opts) {
  if (opts.grid_points < 8) throw std::invalid_argument("plugin pivot: too few grid points");
  const double lo = m - opts.grid_halfwidth;
  const double hi = m + opts.grid_halfwidth;
  const double dx = (hi - lo) / (opts.grid_points - 1);

  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(opts.grid_points) + 80);
  for (int i = 0; i < opts.grid_points; ++i) xs.push_back(lo + dx * i);
  if (tau > lo && tau < hi) xs.push_back(tau);
  if (G.scale < dx) {
    for (int j = -32; j <= 32; ++j) {
      double x = tau + 0.25 * G.scale * j;
      if (x > lo && x < hi) xs.push_back(x);
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end(),
                       [&](double a, double b) { return b - a < 1e-14 * (1.0 + std::fabs(a)); }),
           xs.end());

  const std::size_t K = xs.size();
  std::vector<double> logf(K);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < K; ++i) {
    logf[i] = marginal_log_density_threshold(xs[i], m, tau, G);
    mx = std::max(mx, logf[i]);
  }
  if (!std::isfinite(mx))
    throw std::runtime_error("plugin pivot: selected mass underflows on the grid");
  std::vector<double> f(K);
  for (std::size_t i = 0; i < K; ++i) f[i] = std::exp(logf[i] - mx);

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < K; ++i)
    total += 0.5 * (f[i] + f[i + 1]) * (xs[i + 1] - xs[i]);
  // Unnormalized selection mass in absolute scale is exp(mx) * total.
  if (!(mx + std::log(total) > std::log(1e-300)))
    throw std::runtime_error(
        "plugin pivot: selection probability below 1e-300; the plug-in law is numerically "
        "degenerate this far past the threshold");

  double num = 0.0;
  if (t >= xs.back()) {
    num = total;
  } else if (t > xs.front()) {
    std::size_t k = 0;
    while (k + 1 < K && xs[k + 1] <= t) {
      num += 0.5 * (f[k] + f[k + 1]) * (xs[k + 1] - xs[k]);
      ++k;
    }
    if (k + 1 < K && t > xs[k]) {
      double frac = (t - xs[k]) / (xs[k + 1] - xs[k]);
      double ft = f[k] + (f[k + 1] - f[k]) * frac;
      num += 0.5 * (f[k] + ft) * (t - xs[k]);
    }
  }
  return PivotReport::make(opts.target, "plugin-randomized",
                           std::clamp(num / total, 0.0, 1.0), 0.0);
}

inline PivotReport plugin_mcmc(double t, double m, double tau, const Randomization& G,
                               const PluginOptions& opts, Rng& rng) {
  SelectiveDensity den;
  den.data_mean = Eigen::VectorXd::Constant(1, m);
  den.data_sd = Eigen::VectorXd::Ones(1);
  OptBlock blk;
  blk.label = "threshold";
  blk.a_data = Eigen::MatrixXd::Constant(1, 1, -1.0);
  blk.a_v = Eigen::MatrixXd::Constant(1, 1, 1.0);
  blk.b = Eigen::VectorXd::Zero(1);
  blk.randomization = G;
  ThresholdQuery q;
  q.tau = tau;
  blk.project = [q](Eigen::VectorXd& v) { v[0] = threshold_support_project(q, v[0], true); };
  den.blocks.push_back(std::move(blk));
  double t0 = std::max(m, tau);
  Eigen::VectorXd init(2);
  init << t0, std::max(t0, tau + G.scale + 1e-3);
  den.init_state = init;
  fill_precondition(den);

  LangevinOptions lo;
  lo.steps = opts.steps;
  lo.step_size = opts.step_size;
  lo.retain = Eigen::MatrixXd::Zero(1, 2);
  lo.retain(0, 0) = 1.0;  // keep only the latent statistic coordinate
  LangevinChain chain = langevin_sample(den, den.init_state, lo, rng);

  const Eigen::Index R = chain.states.rows();
  if (R < 2 * opts.batches)
    throw std::invalid_argument("plugin pivot: chain too short for the requested batch count");
  double pivot = 0.0;
  for (Eigen::Index i = 0; i < R; ++i) pivot += chain.states(i, 0) <= t ? 1.0 : 0.0;
  pivot /= static_cast<double>(R);

  // Batch means absorb the chain's autocorrelation into the standard error.
  const Eigen::Index B = opts.batches;
  const Eigen::Index len = R / B;
  Eigen::VectorXd bm(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    double s = 0.0;
    for (Eigen::Index i = b * len; i < (b + 1) * len; ++i)
      s += chain.states(i, 0) <= t ? 1.0 : 0.0;
    bm[b] = s / static_cast<double>(len);
  }
  double mean_b = bm.mean();
  double var_b = (bm.array() - mean_b).square().sum() / static_cast<double>(B - 1);
  double mc_se = std::sqrt(var_b / static_cast<double>(B));
  return PivotReport::make(opts.target, "plugin-randomized", pivot, mc_se);
}

}  // namespace detail

// Pivot for the randomized threshold under the plug-in selective law:
// P(Z <= t | Z + omega > tau) with Z ~ N(m, 1) and omega ~ G independent.
// `grid` integrates the marginal density deterministically (mc_se = 0);
// `mcmc` runs the Langevin sampler on the joint (t, z) density and reports a
// batch-means Monte Carlo standard error.  The rng argument is only touched
// by the mcmc method; when omitted a stream seeded from the options is used.
inline PivotReport plugin_randomized_pivot(double t, double m, double tau, const Randomization& G,
                                           PluginMethod method = PluginMethod::grid,
                                           const PluginOptions& opts = {}, Rng* rng = nullptr) {
  if (method == PluginMethod::grid) return detail::plugin_grid(t, m, tau, G, opts);
  if (rng) return detail::plugin_mcmc(t, m, tau, G, opts, *rng);
  Rng local(opts.seed);
  return detail::plugin_mcmc(t, m, tau, G, opts, local);
}

}  // namespace inferactive
