#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "inferactive/dag.hpp"
#include "inferactive/sampler/density.hpp"

namespace inferactive {

// Linear split of a summary vector against a low-dimensional estimate:
//   T = gamma * theta_hat + N,   gamma = Cov(T, theta_hat) Var(theta_hat)^{-1}.
// N is the part of T orthogonal to the target; downstream densities hold it
// fixed and treat theta_hat as Gaussian with its plug-in variance.
struct CltDecomposition {
  Eigen::MatrixXd gamma;     // dim(T) x dim(theta)
  Eigen::VectorXd nuisance;  // N = T - gamma * theta_hat
};

inline CltDecomposition clt_decompose(const Eigen::VectorXd& T, const Eigen::VectorXd& theta_hat,
                                      const Eigen::MatrixXd& cov_T_theta,
                                      const Eigen::MatrixXd& var_theta) {
  const auto k = theta_hat.size();
  if (var_theta.rows() != k || var_theta.cols() != k)
    throw std::invalid_argument("clt_decompose: variance estimate has the wrong shape");
  if (cov_T_theta.rows() != T.size() || cov_T_theta.cols() != k)
    throw std::invalid_argument("clt_decompose: covariance estimate has the wrong shape");
  Eigen::LLT<Eigen::MatrixXd> llt(var_theta);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("clt_decompose: variance estimate is singular or indefinite");
  CltDecomposition out;
  // gamma = cov * var^{-1}  via  var * gamma' = cov'.
  out.gamma = llt.solve(cov_T_theta.transpose()).transpose();
  out.nuisance = T - out.gamma * theta_hat;
  return out;
}

// Log of the data density after marginalizing the optimization variable of a
// randomized threshold event: log phi(t - m) + log P(omega > tau - t).
// Unnormalized in t.
inline double marginal_log_density_threshold(double t, double m, double tau,
                                             const Randomization& G) {
  return log_norm_pdf(t - m) + G.log_sf(tau - t);
}

namespace detail {

inline double randomization_curvature(const Randomization& r) {
  // Upper bound on the curvature of -log g, used only as a diagonal metric for
  // step scaling; 1/scale^2 is exact for the Gaussian family and the right
  // order for the others.
  return 1.0 / (r.scale * r.scale);
}

// Append the optimization block of a recorded screening query.
//   omega = -T + A_v [eta_minus; o_E] + c * pad(s_E),  T = stats map * y.
inline OptBlock screen_block(const Node& qn, Eigen::Index p) {
  const auto& q = qn.screen;
  const auto& outcome = qn.outcome;
  const auto k = static_cast<Eigen::Index>(outcome.selected.size());
  OptBlock blk;
  blk.label = qn.name.empty() ? "marginal-screen" : qn.name;
  blk.randomization = q.randomization;
  blk.log_jacobian = 0.0;
  blk.a_v = Eigen::MatrixXd::Zero(p, p);
  blk.b = Eigen::VectorXd::Zero(p);
  Eigen::Index sel = 0, unsel = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (sel < k && outcome.selected[static_cast<std::size_t>(sel)] == static_cast<int>(j)) {
      double s = outcome.signs[static_cast<std::size_t>(sel)];
      blk.a_v(j, (p - k) + sel) = s;  // slack o_E
      blk.b[j] = q.c * s;
      ++sel;
    } else {
      blk.a_v(j, unsel++) = 1.0;  // eta off the selection
    }
  }
  MarginalScreenQuery q_copy = q;
  const Eigen::Index n_eta = p - k;
  blk.project = [q_copy, n_eta](Eigen::VectorXd& v) {
    Eigen::VectorXd eta = v.head(n_eta);
    Eigen::VectorXd o = v.tail(v.size() - n_eta);
    screen_support_project(q_copy, eta, o);
    v.head(n_eta) = eta;
    v.tail(v.size() - n_eta) = o;
  };
  return blk;
}

// Initial optimization variables of a screening block: recorded eta then slacks.
inline Eigen::VectorXd screen_block_init(const Node& qn) {
  Eigen::VectorXd v(qn.outcome.aux_unselected.size() + qn.outcome.aux_selected.size());
  v << qn.outcome.aux_unselected, qn.outcome.aux_selected;
  return v;
}

// Append the optimization block of a recorded lasso query on its rebuilt design.
//   omega = -X'y + (X'X_E + eps embed_E) beta_E + lam embed_{-E} u + lam pad(s_E).
inline OptBlock lasso_block(const Node& qn, const Eigen::MatrixXd& design) {
  const auto& q = qn.lasso;
  const auto& outcome = qn.outcome;
  const auto p = design.cols();
  const auto k = static_cast<Eigen::Index>(outcome.selected.size());
  OptBlock blk;
  blk.label = qn.name.empty() ? "lasso" : qn.name;
  blk.randomization = q.randomization;
  blk.log_jacobian = lasso_log_jacobian(q, design, outcome.selected);
  blk.a_v = Eigen::MatrixXd::Zero(p, p);
  blk.b = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < k; ++i) {
    int col = outcome.selected[static_cast<std::size_t>(i)];
    blk.a_v.col(i) = design.transpose() * design.col(col);
    blk.a_v(col, i) += q.ridge_eps;
    blk.b[col] = q.lam * outcome.signs[static_cast<std::size_t>(i)];
  }
  Eigen::Index unsel = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!outcome.contains(static_cast<int>(j))) blk.a_v(j, k + unsel++) = q.lam;
  }
  QueryOutcome outcome_copy = outcome;
  blk.project = [outcome_copy, k](Eigen::VectorXd& v) {
    Eigen::VectorXd beta = v.head(k);
    Eigen::VectorXd u = v.tail(v.size() - k);
    lasso_support_project(outcome_copy, beta, u);
    v.head(k) = beta;
    v.tail(v.size() - k) = u;
  };
  return blk;
}

inline Eigen::VectorXd lasso_block_init(const Node& qn) {
  Eigen::VectorXd v(qn.outcome.aux_selected.size() + qn.outcome.aux_unselected.size());
  v << qn.outcome.aux_selected, qn.outcome.aux_unselected;
  return v;
}

// Fill the diagonal sampling metric: for each coordinate an upper bound on the
// curvature of -log p along it, inverted to a scale.
inline void fill_precondition(SelectiveDensity& density) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(density.total_dim());
  for (Eigen::Index i = 0; i < density.data_dim(); ++i)
    diag[i] = 1.0 / (density.data_sd[i] * density.data_sd[i]);
  Eigen::Index off = density.data_dim();
  for (const auto& blk : density.blocks) {
    double curv = randomization_curvature(blk.randomization);
    for (Eigen::Index c = 0; c < blk.a_data.cols(); ++c)
      diag[c] += curv * blk.a_data.col(c).squaredNorm();
    for (Eigen::Index c = 0; c < blk.dim(); ++c)
      diag[off + c] += curv * blk.a_v.col(c).squaredNorm();
    off += blk.dim();
  }
  density.precond_scale = diag.array().rsqrt();
}

// Resolved ingredients of a mean-model session: the statistic node and the
// model's implied mean and sd for the sampled statistic.
struct MeanPlumbing {
  int stat_id = -1;
  double stat_mean = 0.0;
  double stat_sd = 1.0;
};

inline MeanPlumbing resolve_mean(const Dag& dag, const ModelSpec& model) {
  // Locate the statistic node: the shared data parent of the threshold
  // queries, or the unique data node when no query was recorded.
  MeanPlumbing out;
  for (int qid : dag.query_node_ids()) {
    const Node& qn = dag.node(qid);
    if (qn.query_kind != QueryKind::threshold)
      throw std::invalid_argument("build_density: " + query_kind_name(qn.query_kind) +
                                  " queries require a regression model");
    for (int parent : qn.parents) {
      if (dag.node(parent).kind != NodeKind::data) continue;
      if (out.stat_id != -1 && out.stat_id != parent)
        throw std::invalid_argument(
            "build_density: threshold queries must share one statistic node");
      out.stat_id = parent;
    }
  }
  if (out.stat_id == -1) {
    for (std::size_t i = 0; i < dag.nodes().size(); ++i) {
      if (dag.nodes()[i].kind != NodeKind::data) continue;
      if (out.stat_id != -1)
        throw std::invalid_argument("build_density: ambiguous data node for an empty session");
      out.stat_id = static_cast<int>(i);
    }
    if (out.stat_id == -1) throw std::invalid_argument("build_density: session has no data node");
  }
  const Node& dn = dag.node(out.stat_id);
  if (!dn.observed)
    throw std::invalid_argument("build_density: statistic node has no observed values");
  if (dn.shape == ShapeKind::matrix)
    throw std::invalid_argument("build_density: threshold statistic node must be scalar or vector");
  out.stat_mean = dn.shape == ShapeKind::vector
                      ? std::sqrt(static_cast<double>(dn.values.rows())) * model.mean
                      : model.mean;
  out.stat_sd = std::sqrt(model.variance);
  return out;
}

inline SelectiveDensity build_mean_density(const Dag& dag, const ModelSpec& model) {
  MeanPlumbing plumbing = resolve_mean(dag, model);
  const Node& dn = dag.node(plumbing.stat_id);
  std::vector<int> qids = dag.query_node_ids();

  SelectiveDensity density;
  density.data_mean = Eigen::VectorXd::Constant(1, plumbing.stat_mean);
  density.data_sd = Eigen::VectorXd::Constant(1, plumbing.stat_sd);
  const double t_obs = detail::threshold_statistic(dn, dn.values);

  std::vector<double> init_blocks;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool any_deterministic = false;
  for (int qid : qids) {
    const Node& qn = dag.node(qid);
    const ThresholdQuery& q = qn.threshold;
    if (q.randomization) {
      OptBlock blk;
      blk.label = qn.name.empty() ? "threshold" : qn.name;
      blk.randomization = *q.randomization;
      blk.a_data = Eigen::MatrixXd::Constant(1, 1, -1.0);
      blk.a_v = Eigen::MatrixXd::Constant(1, 1, 1.0);
      blk.b = Eigen::VectorXd::Zero(1);
      blk.log_jacobian = 0.0;
      ThresholdQuery q_copy = q;
      bool held = qn.outcome.event_held;
      blk.project = [q_copy, held](Eigen::VectorXd& v) {
        v[0] = threshold_support_project(q_copy, v[0], held);
      };
      density.blocks.push_back(std::move(blk));
      init_blocks.push_back(qn.outcome.aux_selected[0]);
    } else {
      // Deterministic events restrict the statistic coordinate itself.
      any_deterministic = true;
      double margin = 1e-8 * (1.0 + std::fabs(q.tau));
      if (qn.outcome.event_held)
        lower = std::max(lower, q.tau + margin);
      else
        upper = std::min(upper, q.tau - margin);
    }
  }
  if (any_deterministic) {
    if (!(lower < upper))
      throw std::invalid_argument("build_density: deterministic threshold events contradict");
    density.project_data = [lower, upper](Eigen::VectorXd& t) {
      t[0] = std::clamp(t[0], lower, upper);
    };
  }

  density.init_state.resize(density.total_dim());
  density.init_state[0] = t_obs;
  for (std::size_t i = 0; i < init_blocks.size(); ++i)
    density.init_state[1 + static_cast<Eigen::Index>(i)] = init_blocks[i];
  fill_precondition(density);
  density.validate();
  return density;
}

// Resolved ingredients of a regression session, shared by the density builder
// and the rejection oracle so both speak about the same data-block functional.
struct RegressionPlumbing {
  int x_id = -1, y_id = -1;
  Eigen::MatrixXd targets_design;  // n x k columns of the reporting design
  Eigen::MatrixXd weights;         // k x n: theta_hat = weights * y
  Eigen::MatrixXd chol;            // k x k: theta_hat = chol * w + 0 in whitened coords
  Eigen::MatrixXd chol_inv;        // k x k
  Eigen::VectorXd theta_ref;       // target value induced by the model's coefficients
  Eigen::VectorXd w_ref;           // chol^{-1} theta_ref

  Eigen::VectorXd whiten(const Eigen::VectorXd& theta_hat) const {
    return chol_inv * theta_hat;
  }
};

inline RegressionPlumbing resolve_regression(const Dag& dag, const ModelSpec& model) {
  RegressionPlumbing out;
  for (std::size_t i = 0; i < dag.nodes().size(); ++i) {
    const Node& node = dag.nodes()[i];
    if (node.kind != NodeKind::data) continue;
    if (node.shape == ShapeKind::matrix) {
      if (out.x_id != -1)
        throw std::invalid_argument("build_density: more than one design node");
      out.x_id = static_cast<int>(i);
    } else if (node.shape == ShapeKind::vector) {
      if (out.y_id != -1)
        throw std::invalid_argument("build_density: more than one response node");
      out.y_id = static_cast<int>(i);
    }
  }
  if (out.x_id == -1 || out.y_id == -1)
    throw std::invalid_argument("build_density: regression sessions need design and response nodes");
  const Node& xn = dag.node(out.x_id);
  const Node& yn = dag.node(out.y_id);
  if (!xn.observed || !yn.observed)
    throw std::invalid_argument("build_density: regression data nodes must be observed");
  const Eigen::MatrixXd& X = xn.values;
  const Eigen::VectorXd y = yn.values.col(0);
  if (X.rows() != y.size())
    throw std::invalid_argument("build_density: design and response row counts differ");

  // Reporting design: the final lasso's recorded columns when present, the
  // base design otherwise.
  const Node* last_lasso = nullptr;
  for (int qid : dag.query_node_ids()) {
    const Node& qn = dag.node(qid);
    if (qn.query_kind == QueryKind::lasso) last_lasso = &qn;
    if (qn.query_kind == QueryKind::threshold)
      throw std::invalid_argument(
          "build_density: threshold queries are not supported in regression sessions");
  }
  Eigen::MatrixXd drep =
      last_lasso ? lasso_design_from_columns(last_lasso->lasso_columns, X) : X;

  if (model.targets.empty())
    throw std::invalid_argument("build_density: regression model lists no targets");
  const auto k = static_cast<Eigen::Index>(model.targets.size());
  out.targets_design.resize(X.rows(), k);
  for (Eigen::Index i = 0; i < k; ++i) {
    int t = model.targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= drep.cols())
      throw std::invalid_argument("build_density: target " + std::to_string(t) +
                                  " outside the reporting design");
    for (Eigen::Index i2 = 0; i2 < i; ++i2)
      if (model.targets[static_cast<std::size_t>(i2)] == t)
        throw std::invalid_argument("build_density: duplicate target " + std::to_string(t));
    out.targets_design.col(i) = drep.col(t);
  }

  Eigen::MatrixXd gram = out.targets_design.transpose() * out.targets_design;
  Eigen::LLT<Eigen::MatrixXd> gram_llt(gram);
  if (gram_llt.info() != Eigen::Success)
    throw std::invalid_argument("build_density: selected target columns are collinear");
  out.weights = gram_llt.solve(out.targets_design.transpose());

  Eigen::MatrixXd var = model.noise_sd * model.noise_sd * out.weights * out.weights.transpose();
  Eigen::LLT<Eigen::MatrixXd> var_llt(var);
  if (var_llt.info() != Eigen::Success)
    throw std::invalid_argument("build_density: target variance is singular");
  out.chol = var_llt.matrixL();
  out.chol_inv = out.chol.inverse();

  if (model.coef.size() == 0) {
    out.theta_ref = Eigen::VectorXd::Zero(k);
  } else if (model.coef.size() == X.cols()) {
    out.theta_ref = out.weights * (X * model.coef);
  } else {
    throw std::invalid_argument(
        "build_density: model coefficients must be empty or one per design column");
  }
  out.w_ref = out.chol_inv * out.theta_ref;
  return out;
}

inline SelectiveDensity build_regression_density(const Dag& dag, const ModelSpec& model) {
  RegressionPlumbing plumbing = resolve_regression(dag, model);
  const Node& xn = dag.node(plumbing.x_id);
  const Node& yn = dag.node(plumbing.y_id);
  const Eigen::MatrixXd& X = xn.values;
  const Eigen::VectorXd y = yn.values.col(0);
  const auto k = plumbing.w_ref.size();

  SelectiveDensity density;
  density.data_mean = plumbing.w_ref;
  density.data_sd = Eigen::VectorXd::Ones(k);

  const Eigen::VectorXd theta_hat_obs = plumbing.weights * y;
  const Eigen::VectorXd w_obs = plumbing.whiten(theta_hat_obs);
  // Var(theta_hat)^{-1} Cov(theta_hat, S)' for S = M y: gamma = M W' (W W')^{-1};
  // the noise variance cancels.
  Eigen::LLT<Eigen::MatrixXd> ww_llt(
      Eigen::MatrixXd(plumbing.weights * plumbing.weights.transpose()));
  if (ww_llt.info() != Eigen::Success)
    throw std::invalid_argument("build_density: target variance is singular");

  std::vector<Eigen::VectorXd> inits;
  for (int qid : dag.query_node_ids()) {
    const Node& qn = dag.node(qid);
    Eigen::MatrixXd stat_map;  // S = stat_map * y
    OptBlock blk;
    if (qn.query_kind == QueryKind::marginal_screen) {
      qn.screen.validate(X.cols());
      stat_map.resize(X.cols(), X.rows());
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double norm = X.col(j).norm();
        if (norm <= 0.0)
          throw std::invalid_argument("build_density: zero-norm design column");
        stat_map.row(j) = X.col(j).transpose() / (qn.screen.sigma_estimates[j] * norm);
      }
      blk = screen_block(qn, X.cols());
      inits.push_back(screen_block_init(qn));
    } else {
      Eigen::MatrixXd design = lasso_design_from_columns(qn.lasso_columns, X);
      stat_map = design.transpose();
      blk = lasso_block(qn, design);
      inits.push_back(lasso_block_init(qn));
    }
    Eigen::MatrixXd gamma =
        ww_llt.solve(plumbing.weights * stat_map.transpose()).transpose();
    Eigen::VectorXd nuisance = stat_map * y - gamma * theta_hat_obs;
    blk.a_data = -gamma * plumbing.chol;
    blk.b -= nuisance;
    density.blocks.push_back(std::move(blk));
  }

  density.init_state.resize(density.total_dim());
  density.init_state.head(k) = w_obs;
  Eigen::Index off = k;
  for (const auto& v : inits) {
    density.init_state.segment(off, v.size()) = v;
    off += v.size();
  }
  fill_precondition(density);
  density.validate();
  return density;
}

}  // namespace detail

// Assemble the joint sampling density of a recorded session under the given
// model: a Gaussian data block (the statistic itself for mean models, the
// standardized target estimate for regression models) and one reconstruction
// block per recorded query.
inline SelectiveDensity build_density(const Dag& dag, const ModelSpec& model) {
  model.validate();
  dag.validate();
  if (model.family == "gaussian-mean") return detail::build_mean_density(dag, model);
  if (model.family == "gaussian-regression") return detail::build_regression_density(dag, model);
  throw std::invalid_argument("build_density: family '" + model.family +
                              "' has no sampling density; bootstrap sessions use the dedicated "
                              "bootstrap machinery");
}

}  // namespace inferactive
