#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "inferactive/queries/outcome.hpp"
#include "inferactive/randomization.hpp"

namespace inferactive {

// Marginal screening: select E = { j : |T_j + omega_j| > c } where
// T_j = X_j'y / (sigma_j * ||X_j||) is the marginal z-statistic.
struct MarginalScreenQuery {
  double c = 2.5;
  Randomization randomization;       // one coordinate per feature
  Eigen::VectorXd sigma_estimates;   // per-feature noise scale, all > 0

  void validate(Eigen::Index p) const {
    if (!(c > 0.0)) throw std::invalid_argument("marginal screen: c must be positive");
    if (sigma_estimates.size() != p)
      throw std::invalid_argument("marginal screen: one sigma estimate per feature required");
    for (Eigen::Index j = 0; j < p; ++j)
      if (!(sigma_estimates[j] > 0.0))
        throw std::invalid_argument("marginal screen: sigma estimates must be positive");
  }
};

// Marginal z-statistics T_j = X_j'y / (sigma_j ||X_j||).
inline Eigen::VectorXd marginal_stats(const MarginalScreenQuery& q, const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& y) {
  q.validate(X.cols());
  if (X.rows() != y.size()) throw std::invalid_argument("marginal screen: X rows != y length");
  Eigen::VectorXd T(X.cols());
  const double n = static_cast<double>(X.rows());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double norm = X.col(j).norm();
    if (norm <= 0.0) throw std::invalid_argument("marginal screen: zero-norm column");
    if (std::fabs(X.col(j).mean()) > 1e-6 * norm / std::sqrt(n))
      throw std::invalid_argument("marginal screen: column " + std::to_string(j) +
                                  " is not centered; standardize the design first");
    T[j] = X.col(j).dot(y) / (q.sigma_estimates[j] * norm);
  }
  return T;
}

// Solve given the noise realization.  Throws on an exact tie |T_j+omega_j| = c
// (measure zero); the rng-taking overload retries once before giving up.
inline QueryOutcome screen_solve_with(const MarginalScreenQuery& q, const Eigen::VectorXd& T,
                                      const Eigen::VectorXd& omega) {
  if (T.size() != omega.size())
    throw std::invalid_argument("marginal screen: statistic/noise dimension mismatch");
  QueryOutcome out;
  std::vector<double> o_vals, eta_vals;
  for (Eigen::Index j = 0; j < T.size(); ++j) {
    double v = T[j] + omega[j];
    double a = std::fabs(v);
    if (a == q.c)
      throw std::runtime_error("marginal screen: exact tie |T_j + omega_j| = c at feature " +
                               std::to_string(j));
    if (a > q.c) {
      out.selected.push_back(static_cast<int>(j));
      out.signs.push_back(v > 0.0 ? 1.0 : -1.0);
      o_vals.push_back(a - q.c);
    } else {
      eta_vals.push_back(v);
    }
  }
  out.aux_selected = Eigen::Map<Eigen::VectorXd>(o_vals.data(), static_cast<Eigen::Index>(o_vals.size()));
  out.aux_unselected =
      Eigen::Map<Eigen::VectorXd>(eta_vals.data(), static_cast<Eigen::Index>(eta_vals.size()));
  return out;
}

inline QueryOutcome screen_solve_stats(const MarginalScreenQuery& q, const Eigen::VectorXd& T,
                                       Rng& rng) {
  Eigen::VectorXd omega = q.randomization.sample(T.size(), rng);
  try {
    return screen_solve_with(q, T, omega);
  } catch (const std::runtime_error&) {
    // One fresh draw on a tie; a second tie is a hard error.
    omega = q.randomization.sample(T.size(), rng);
    return screen_solve_with(q, T, omega);
  }
}

inline QueryOutcome screen_solve(const MarginalScreenQuery& q, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y, Rng& rng) {
  return screen_solve_stats(q, marginal_stats(q, X, y), rng);
}

// Reconstruction map: omega_j = c*s_j + s_j*o_j - T_j on E, eta_j - T_j off E.
// (eta_minus, o_E) must lie in the support {||eta||_inf < c, o >= 0}.
inline Eigen::VectorXd screen_reconstruct(const MarginalScreenQuery& q, const Eigen::VectorXd& T,
                                          const Eigen::VectorXd& eta_minus,
                                          const Eigen::VectorXd& o_E, const QueryOutcome& outcome) {
  outcome.validate_basic();
  const auto p = T.size();
  const auto k = static_cast<Eigen::Index>(outcome.selected.size());
  if (o_E.size() != k || eta_minus.size() != p - k)
    throw std::invalid_argument("screen_reconstruct: optimization variable dimension mismatch");
  for (Eigen::Index i = 0; i < k; ++i)
    if (o_E[i] < 0.0)
      throw std::domain_error("screen_reconstruct: slack o_E must be nonnegative");
  for (Eigen::Index i = 0; i < eta_minus.size(); ++i)
    if (std::fabs(eta_minus[i]) >= q.c)
      throw std::domain_error("screen_reconstruct: |eta| must stay strictly below c");

  Eigen::VectorXd omega(p);
  Eigen::Index sel = 0, unsel = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (sel < k && outcome.selected[static_cast<std::size_t>(sel)] == j) {
      double s = outcome.signs[static_cast<std::size_t>(sel)];
      omega[j] = q.c * s + s * o_E[sel] - T[j];
      ++sel;
    } else {
      omega[j] = eta_minus[unsel++] - T[j];
    }
  }
  return omega;
}

// Euclidean projection onto {||eta||_inf <= c - delta, o >= 0} with the small
// interior margin delta keeping Langevin iterates off the |eta| = c face.
inline void screen_support_project(const MarginalScreenQuery& q, Eigen::VectorXd& eta_minus,
                                   Eigen::VectorXd& o_E) {
  const double bound = q.c * (1.0 - 1e-8);
  for (Eigen::Index i = 0; i < eta_minus.size(); ++i)
    eta_minus[i] = std::clamp(eta_minus[i], -bound, bound);
  for (Eigen::Index i = 0; i < o_E.size(); ++i)
    if (o_E[i] < 0.0) o_E[i] = 0.0;
}

}  // namespace inferactive
