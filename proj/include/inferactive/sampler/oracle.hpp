#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "inferactive/dag.hpp"
#include "inferactive/math/rng.hpp"
#include "inferactive/sampler/build.hpp"

namespace inferactive {

struct OracleResult {
  // One accepted draw of the session's data block per row: the statistic for
  // mean models, the standardized target estimate for regression models.
  Eigen::MatrixXd data;
  long long proposals = 0;

  double acceptance_rate() const {
    return proposals > 0 ? static_cast<double>(data.rows()) / static_cast<double>(proposals) : 0.0;
  }
};

namespace detail {

inline bool outcomes_agree(const QueryOutcome& a, const QueryOutcome& b) {
  return a.selected == b.selected && a.signs == b.signs;
}

}  // namespace detail

// Brute-force reference sampler for the same conditional law the session
// density targets: simulate the data block under the model (for regression
// models, holding the non-target directions of the response fixed), rerun
// every recorded query with fresh randomization noise, and keep the draws
// whose selection outcomes reproduce the recorded ones exactly.  Slow but
// free of sampler-specific assumptions; it anchors the Langevin chain.
inline OracleResult rejection_oracle(const ModelSpec& model, const Dag& dag, Rng& rng,
                                     Eigen::Index n_target,
                                     long long max_proposals = 100000000LL) {
  model.validate();
  dag.validate();
  if (n_target <= 0) throw std::invalid_argument("rejection oracle: n_target must be positive");
  if (max_proposals <= 0)
    throw std::invalid_argument("rejection oracle: max_proposals must be positive");

  OracleResult out;
  const std::vector<int> qids = dag.query_node_ids();

  if (model.family == "gaussian-mean") {
    detail::MeanPlumbing plumbing = detail::resolve_mean(dag, model);
    out.data.resize(n_target, 1);
    Eigen::Index accepted = 0;
    while (accepted < n_target && out.proposals < max_proposals) {
      ++out.proposals;
      double t = plumbing.stat_mean + plumbing.stat_sd * rng.normal();
      bool match = true;
      for (int qid : qids) {
        const Node& qn = dag.node(qid);
        const ThresholdQuery& q = qn.threshold;
        double omega = q.randomization ? q.randomization->sample1(rng) : 0.0;
        if (threshold_solve_with(q, t, omega).event_held != qn.outcome.event_held) {
          match = false;
          break;
        }
      }
      if (match) out.data(accepted++, 0) = t;
    }
    if (accepted < n_target) {
      std::ostringstream msg;
      msg << "rejection oracle: proposal budget " << max_proposals
          << " exhausted with acceptance rate " << out.acceptance_rate() << " (" << accepted
          << "/" << n_target << " draws)";
      throw std::runtime_error(msg.str());
    }
    return out;
  }

  if (model.family != "gaussian-regression")
    throw std::invalid_argument("rejection oracle: family '" + model.family +
                                "' is not simulable");

  detail::RegressionPlumbing plumbing = detail::resolve_regression(dag, model);
  const Eigen::MatrixXd& X = dag.node(plumbing.x_id).values;
  const Eigen::VectorXd y_obs = dag.node(plumbing.y_id).values.col(0);
  const Eigen::VectorXd theta_obs = plumbing.weights * y_obs;

  // The inference distribution holds the part of the data orthogonal to the
  // target fixed.  Draw the target estimate from its Gaussian law and move the
  // response along the directions that change the estimate and nothing else:
  //   y' = y_obs + Q (theta' - theta_obs),  Q = W'(W W')^{-1},
  // so W y' = theta' while every statistic's nuisance component is unchanged.
  Eigen::MatrixXd ww = plumbing.weights * plumbing.weights.transpose();
  Eigen::MatrixXd Q = ww.llt().solve(plumbing.weights).transpose();

  // Rebuild each lasso node's design once; its column recipe is fixed by the
  // conditioned-on selection path.
  std::vector<Eigen::MatrixXd> lasso_designs;
  for (int qid : qids) {
    const Node& qn = dag.node(qid);
    if (qn.query_kind == QueryKind::lasso)
      lasso_designs.push_back(lasso_design_from_columns(qn.lasso_columns, X));
  }

  out.data.resize(n_target, plumbing.w_ref.size());
  Eigen::Index accepted = 0;
  while (accepted < n_target && out.proposals < max_proposals) {
    ++out.proposals;
    Eigen::VectorXd theta =
        plumbing.theta_ref + plumbing.chol * rng.normal_vec(plumbing.theta_ref.size());
    Eigen::VectorXd y = y_obs + Q * (theta - theta_obs);
    bool match = true;
    std::size_t lasso_idx = 0;
    for (int qid : qids) {
      const Node& qn = dag.node(qid);
      try {
        if (qn.query_kind == QueryKind::marginal_screen) {
          Eigen::VectorXd T = marginal_stats(qn.screen, X, y);
          Eigen::VectorXd omega = qn.screen.randomization.sample(X.cols(), rng);
          if (!detail::outcomes_agree(screen_solve_with(qn.screen, T, omega), qn.outcome))
            match = false;
        } else {
          const Eigen::MatrixXd& design = lasso_designs[lasso_idx++];
          LassoSolution sol = lasso_solve(qn.lasso, design, y, rng);
          if (!detail::outcomes_agree(sol.outcome, qn.outcome)) match = false;
        }
      } catch (const std::runtime_error&) {
        // Exact ties and solver non-convergence are measure-zero or
        // pathological proposals; discard them.
        match = false;
      }
      if (!match) break;
    }
    if (match) out.data.row(accepted++) = plumbing.whiten(theta).transpose();
  }
  if (accepted < n_target) {
    std::ostringstream msg;
    msg << "rejection oracle: proposal budget " << max_proposals
        << " exhausted with acceptance rate " << out.acceptance_rate() << " (" << accepted << "/"
        << n_target << " draws)";
    throw std::runtime_error(msg.str());
  }
  return out;
}

}  // namespace inferactive
