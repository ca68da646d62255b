#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "inferactive/queries/outcome.hpp"
#include "inferactive/randomization.hpp"

namespace inferactive {

// Randomized LASSO: minimize over beta
//   1/2 ||y - X beta||^2 + (eps/2) ||beta||^2 - omega' beta + lam ||beta||_1 .
// The ridge term makes the problem strongly convex, so the solution and the
// KKT-based reconstruction are unique.
struct LassoQuery {
  double lam = 1.0;
  double ridge_eps = 0.01;
  Randomization randomization;  // one coordinate per feature
  int max_sweeps = 5000;

  void validate() const {
    if (!(lam > 0.0)) throw std::invalid_argument("lasso: lam must be positive");
    if (!(ridge_eps > 0.0)) throw std::invalid_argument("lasso: ridge_eps must be positive");
    if (max_sweeps < 1) throw std::invalid_argument("lasso: max_sweeps must be >= 1");
  }
};

struct LassoSolution {
  Eigen::VectorXd beta;
  QueryOutcome outcome;
  Eigen::VectorXd omega;  // noise used in the solve
  double kkt_residual = 0.0;
};

namespace detail {

inline double soft_threshold(double x, double lam) {
  if (x > lam) return x - lam;
  if (x < -lam) return x + lam;
  return 0.0;
}

// Max KKT violation of rho = X'(y - X beta) + omega - eps*beta against
// rho_j = lam*sign(beta_j) on the active set, |rho_j| <= lam off it.
inline double lasso_kkt_residual(const Eigen::VectorXd& beta, const Eigen::VectorXd& rho,
                                 double lam) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    double v = beta[j] != 0.0 ? std::fabs(rho[j] - lam * (beta[j] > 0.0 ? 1.0 : -1.0))
                              : std::max(0.0, std::fabs(rho[j]) - lam);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace detail

// Cyclic coordinate descent with the given noise realization.  Converges
// geometrically thanks to the ridge term; throws if the KKT residual is still
// above tolerance after max_sweeps full passes.
inline LassoSolution lasso_solve_with(const LassoQuery& q, const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& y, Eigen::VectorXd omega) {
  q.validate();
  const auto p = X.cols();
  if (X.rows() != y.size()) throw std::invalid_argument("lasso: X rows != y length");
  if (omega.size() != p) throw std::invalid_argument("lasso: noise dimension mismatch");

  Eigen::VectorXd col_sq = X.colwise().squaredNorm();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd residual = y;  // y - X beta
  const double tol = 1e-8 * (1.0 + omega.lpNorm<Eigen::Infinity>());

  double kkt = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < q.max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < p; ++j) {
      double old = beta[j];
      double rho_j = X.col(j).dot(residual) + col_sq[j] * old + omega[j];
      double next = detail::soft_threshold(rho_j, q.lam) / (col_sq[j] + q.ridge_eps);
      if (next != old) {
        beta[j] = next;
        residual += X.col(j) * (old - next);
      }
    }
    Eigen::VectorXd rho = X.transpose() * residual + omega - q.ridge_eps * beta;
    kkt = detail::lasso_kkt_residual(beta, rho, q.lam);
    if (kkt <= tol) break;
  }
  if (kkt > tol)
    throw std::runtime_error("lasso: coordinate descent did not reach tolerance " +
                             std::to_string(tol) + " after " + std::to_string(q.max_sweeps) +
                             " sweeps (residual " + std::to_string(kkt) + ")");

  LassoSolution sol;
  sol.beta = beta;
  sol.omega = std::move(omega);
  sol.kkt_residual = kkt;
  Eigen::VectorXd rho = X.transpose() * residual + sol.omega - q.ridge_eps * beta;
  std::vector<double> beta_vals, u_vals;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (beta[j] != 0.0) {
      sol.outcome.selected.push_back(static_cast<int>(j));
      sol.outcome.signs.push_back(beta[j] > 0.0 ? 1.0 : -1.0);
      beta_vals.push_back(beta[j]);
    } else {
      // Subgradient coordinate; clamp the solver tolerance overshoot.
      u_vals.push_back(std::clamp(rho[j] / q.lam, -1.0, 1.0));
    }
  }
  sol.outcome.aux_selected =
      Eigen::Map<Eigen::VectorXd>(beta_vals.data(), static_cast<Eigen::Index>(beta_vals.size()));
  sol.outcome.aux_unselected =
      Eigen::Map<Eigen::VectorXd>(u_vals.data(), static_cast<Eigen::Index>(u_vals.size()));
  return sol;
}

inline LassoSolution lasso_solve(const LassoQuery& q, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y, Rng& rng) {
  Eigen::VectorXd omega = q.randomization.sample(X.cols(), rng);
  return lasso_solve_with(q, X, y, std::move(omega));
}

// KKT-derived reconstruction map:
//   omega = eps*(beta_E; 0) - X'(y - X_E beta_E) + lam*(s_E; u_{-E}) .
// (beta_E, u_minus) must lie in the support {diag(s_E) beta_E > 0, ||u||_inf <= 1}.
inline Eigen::VectorXd lasso_reconstruct(const LassoQuery& q, const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& y, const Eigen::VectorXd& beta_E,
                                         const Eigen::VectorXd& u_minus,
                                         const QueryOutcome& outcome) {
  outcome.validate_basic();
  const auto p = X.cols();
  const auto k = static_cast<Eigen::Index>(outcome.selected.size());
  if (beta_E.size() != k || u_minus.size() != p - k)
    throw std::invalid_argument("lasso_reconstruct: optimization variable dimension mismatch");
  for (Eigen::Index i = 0; i < k; ++i)
    if (!(outcome.signs[static_cast<std::size_t>(i)] * beta_E[i] > 0.0))
      throw std::domain_error("lasso_reconstruct: diag(s_E) beta_E must be strictly positive");
  for (Eigen::Index i = 0; i < u_minus.size(); ++i)
    if (std::fabs(u_minus[i]) > 1.0)
      throw std::domain_error("lasso_reconstruct: ||u||_inf must be at most 1");

  Eigen::VectorXd fitted = Eigen::VectorXd::Zero(X.rows());
  for (Eigen::Index i = 0; i < k; ++i)
    fitted += X.col(outcome.selected[static_cast<std::size_t>(i)]) * beta_E[i];

  Eigen::VectorXd omega = -(X.transpose() * (y - fitted));
  Eigen::Index sel = 0, unsel = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (sel < k && outcome.selected[static_cast<std::size_t>(sel)] == j) {
      omega[j] += q.ridge_eps * beta_E[sel] + q.lam * outcome.signs[static_cast<std::size_t>(sel)];
      ++sel;
    } else {
      omega[j] += q.lam * u_minus[unsel++];
    }
  }
  return omega;
}

// log |det(X_E' X_E + eps I)|; the fiber over the data is parameterized by
// (beta_E, u_{-E}), and this is the volume element of that change of variables.
inline double lasso_log_jacobian(const LassoQuery& q, const Eigen::MatrixXd& X,
                                 const std::vector<int>& E) {
  if (E.empty()) return 0.0;
  const auto k = static_cast<Eigen::Index>(E.size());
  Eigen::MatrixXd XE(X.rows(), k);
  for (Eigen::Index i = 0; i < k; ++i) XE.col(i) = X.col(E[static_cast<std::size_t>(i)]);
  Eigen::MatrixXd H = XE.transpose() * XE;
  H.diagonal().array() += q.ridge_eps;
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("lasso_log_jacobian: factorization failed");
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return log_det;
}

// Projection onto the closure of the support with interior margin: keeps
// diag(s_E) beta_E >= delta and |u| <= 1.
inline void lasso_support_project(const QueryOutcome& outcome, Eigen::VectorXd& beta_E,
                                  Eigen::VectorXd& u_minus, double delta = 1e-8) {
  for (Eigen::Index i = 0; i < beta_E.size(); ++i) {
    double s = outcome.signs[static_cast<std::size_t>(i)];
    if (s * beta_E[i] < delta) beta_E[i] = s * delta;
  }
  for (Eigen::Index i = 0; i < u_minus.size(); ++i)
    u_minus[i] = std::clamp(u_minus[i], -1.0, 1.0);
}

// Ridge default tied to the design scale.
inline double default_ridge_eps(const Eigen::MatrixXd& X) {
  if (X.size() == 0) throw std::invalid_argument("default_ridge_eps: empty design");
  return 0.01 * X.colwise().squaredNorm().mean();
}

// Theoretical regularization level: 0.8 * sigma_hat * median of ||X' xi||_inf
// over Monte Carlo draws xi ~ N(0, I_n).
inline double theory_lambda(const Eigen::MatrixXd& X, double sigma_hat, Rng& rng,
                            int n_draws = 200) {
  if (n_draws < 2) throw std::invalid_argument("theory_lambda: need at least 2 draws");
  std::vector<double> maxima(static_cast<std::size_t>(n_draws));
  for (int b = 0; b < n_draws; ++b) {
    Eigen::VectorXd xi = rng.normal_vec(X.rows());
    maxima[static_cast<std::size_t>(b)] = (X.transpose() * xi).lpNorm<Eigen::Infinity>();
  }
  std::sort(maxima.begin(), maxima.end());
  std::size_t h = maxima.size() / 2;
  double median = maxima.size() % 2 ? maxima[h] : 0.5 * (maxima[h - 1] + maxima[h]);
  return 0.8 * sigma_hat * median;
}

// Residual standard deviation of OLS on the full design (requires n > p).
inline double full_model_sigma_hat(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const auto n = X.rows(), p = X.cols();
  if (n <= p)
    throw std::invalid_argument("full_model_sigma_hat: need n > p for the full-model fit");
  Eigen::VectorXd coef = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  double rss = (y - X * coef).squaredNorm();
  return std::sqrt(rss / static_cast<double>(n - p));
}

}  // namespace inferactive
