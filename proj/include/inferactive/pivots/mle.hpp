#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "inferactive/math/normal.hpp"

namespace inferactive {

namespace detail {

// Score equation for the selected Gaussian mean, divided by sqrt(n):
//   F(mu) = sqrt(n)(ybar - mu) - hazard(z)/c,  z = (tau - sqrt(n) mu)/c,
// with c = sqrt(1 + gamma^2).  hazard' = hazard (hazard - z) lies in (0, 1),
// so F' = -sqrt(n)(1 - hazard'/c^2) < 0: F is strictly decreasing and the
// root is unique.
struct MleScore {
  double ybar, sqrt_n, tau, c;
  double operator()(double mu) const {
    double z = (tau - sqrt_n * mu) / c;
    return sqrt_n * (ybar - mu) - norm_hazard(z) / c;
  }
  double deriv(double mu) const {
    double z = (tau - sqrt_n * mu) / c;
    double h = norm_hazard(z);
    return -sqrt_n * (1.0 - h * (h - z) / (c * c));
  }
};

}  // namespace detail

// Maximum-likelihood estimate of the mean given that the noisy statistic
// sqrt(n) ybar + omega cleared tau, with omega Gaussian of scale gamma.
// Newton iterations safeguarded by bisection inside a sign-changing bracket;
// converges to |F| < 1e-10.  The correction term shrinks the naive estimate
// ybar toward the unselected regime (winner's-curse correction).
inline double selective_mle(double ybar, long long n, double tau, double gamma,
                            double tol = 1e-10) {
  if (n < 1) throw std::invalid_argument("selective_mle: n must be positive");
  if (!(gamma >= 0.0)) throw std::invalid_argument("selective_mle: gamma must be nonnegative");
  detail::MleScore F{ybar, std::sqrt(static_cast<double>(n)), tau,
                     std::sqrt(1.0 + gamma * gamma)};

  double hi = ybar + 1.0 / F.sqrt_n;  // F(hi) = -1 - hazard/c < 0 always
  double off = 20.0 / F.sqrt_n;
  double lo = ybar - off;
  int grow = 0;
  while (!(F(lo) > 0.0)) {
    off *= 2.0;
    lo = ybar - off;
    if (++grow > 60)
      throw std::runtime_error("selective_mle: no finite maximizer (statistic at the threshold)");
  }

  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double fx = F(x);
    if (std::fabs(fx) < tol) return x;
    (fx > 0.0 ? lo : hi) = x;
    double d = F.deriv(x);
    double step = fx / d;
    double next = x - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // Newton left the bracket: bisect
    if (next == x) next = 0.5 * (lo + hi);
    x = next;
    if (hi - lo < 1e-15 * (1.0 + std::fabs(x))) break;
  }
  if (std::fabs(F(x)) < 1e3 * tol) return x;  // bracket collapsed just short of tol
  throw std::runtime_error("selective_mle: Newton failed to converge");
}

// Standard error from the observed information at the estimate:
//   -l''(mu) = n (1 - hazard'(z)/c^2).
inline double selective_mle_se(double mu_hat, long long n, double tau, double gamma) {
  double c = std::sqrt(1.0 + gamma * gamma);
  double sqrt_n = std::sqrt(static_cast<double>(n));
  double z = (tau - sqrt_n * mu_hat) / c;
  double h = norm_hazard(z);
  double info = static_cast<double>(n) * (1.0 - h * (h - z) / (c * c));
  if (!(info > 0.0)) throw std::runtime_error("selective_mle_se: nonpositive observed information");
  return 1.0 / std::sqrt(info);
}

}  // namespace inferactive
