#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "inferactive/math/normal.hpp"
#include "inferactive/math/rng.hpp"

namespace inferactive {

struct SimplePrior {
  double mean = 0.0;
  double sd = 1.0;  // +inf for a flat prior
};

// Unnormalized log posterior for the mean of a selected Gaussian statistic:
// prior times the truncation-adjusted likelihood
//   pi(theta) * phi(t - sqrt(n) theta) / P_theta(selection),
// with t = sqrt(n) ybar and P_theta(selection) = 1 - Phi((tau - sqrt(n)
// theta)/c), c = sqrt(1 + gamma^2).  Dividing by the selection probability is
// what removes the winner's-curse bias from the posterior.
inline double bayes_log_posterior_simple(double theta, double ybar, long long n, double tau,
                                         double gamma, const SimplePrior& prior) {
  double sqrt_n = std::sqrt(static_cast<double>(n));
  double c = std::sqrt(1.0 + gamma * gamma);
  double lp = log_norm_pdf(sqrt_n * (ybar - theta)) -
              log_norm_sf((tau - sqrt_n * theta) / c);
  if (std::isfinite(prior.sd)) {
    if (!(prior.sd > 0.0)) throw std::invalid_argument("bayes posterior: prior sd must be positive");
    double z = (theta - prior.mean) / prior.sd;
    lp += -0.5 * z * z;
  }
  return lp;
}

struct BayesOptions {
  long long burn_in = 2000;
  long long thin = 3;
  double proposal_sd = 0.0;  // <= 0 selects 2.4 / sqrt(n + 1/prior_sd^2)
};

// Random-walk Metropolis draws from the posterior above.  The proposal scale
// follows the no-selection posterior scale, which the truncation only widens
// on one side; acceptance stays in a healthy band across the regimes the
// tests exercise.
inline Eigen::VectorXd bayes_posterior_simple(double ybar, long long n, double tau, double gamma,
                                              const SimplePrior& prior, long long n_draws,
                                              Rng& rng, const BayesOptions& opts = {}) {
  if (n < 1) throw std::invalid_argument("bayes posterior: n must be positive");
  if (n_draws < 1) throw std::invalid_argument("bayes posterior: need at least one draw");
  if (!(gamma >= 0.0)) throw std::invalid_argument("bayes posterior: gamma must be nonnegative");

  double prec = static_cast<double>(n);
  if (std::isfinite(prior.sd)) {
    if (!(prior.sd > 0.0)) throw std::invalid_argument("bayes posterior: prior sd must be positive");
    prec += 1.0 / (prior.sd * prior.sd);
  }
  double prop = opts.proposal_sd > 0.0 ? opts.proposal_sd : 2.4 / std::sqrt(prec);

  // Precision-weighted compromise between prior and likelihood; without it a
  // tight prior far from ybar would be unreachable within the burn-in.
  double theta = std::isfinite(prior.sd)
                     ? (prior.mean / (prior.sd * prior.sd) + static_cast<double>(n) * ybar) / prec
                     : ybar;
  double lp = bayes_log_posterior_simple(theta, ybar, n, tau, gamma, prior);
  Eigen::VectorXd draws(n_draws);
  long long kept = 0;
  long long total = opts.burn_in + opts.thin * n_draws;
  for (long long s = 0; s < total; ++s) {
    double cand = theta + prop * rng.normal();
    double lp_cand = bayes_log_posterior_simple(cand, ybar, n, tau, gamma, prior);
    if (std::log(rng.uniform()) < lp_cand - lp) {
      theta = cand;
      lp = lp_cand;
    }
    if (s >= opts.burn_in && (s - opts.burn_in) % opts.thin == opts.thin - 1) {
      if (kept < n_draws) draws[kept++] = theta;
    }
  }
  if (kept != n_draws) throw std::logic_error("bayes posterior: draw bookkeeping failed");
  return draws;
}

}  // namespace inferactive
