#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "inferactive/queries/interactions.hpp"
#include "inferactive/queries/lasso.hpp"
#include "inferactive/queries/outcome.hpp"
#include "inferactive/queries/screen.hpp"
#include "inferactive/queries/threshold.hpp"

namespace inferactive {

enum class NodeKind { data, query };
enum class QueryKind { threshold, marginal_screen, lasso };

inline std::string query_kind_name(QueryKind k) {
  switch (k) {
    case QueryKind::threshold: return "threshold";
    case QueryKind::marginal_screen: return "marginal-screen";
    case QueryKind::lasso: return "lasso";
  }
  throw std::logic_error("unreachable");
}

enum class ShapeKind { scalar, vector, matrix };

// Statistical model attached to the session.  It may be revised between
// stages: the reference distribution used for inference is whatever the model
// says at the time inference runs.
struct ModelSpec {
  std::string family = "gaussian-mean";  // gaussian-mean | gaussian-regression | empirical-bootstrap
  double mean = 0.0;                     // gaussian-mean: reference mean
  double variance = 1.0;                 // gaussian-mean: per-observation variance
  double noise_sd = 1.0;                 // gaussian-regression: residual standard deviation
  Eigen::VectorXd coef;                  // gaussian-regression: reference coefficients (empty = all zero)
  std::vector<int> targets;              // column indices whose selected-model coefficients are reported

  void validate() const {
    if (family != "gaussian-mean" && family != "gaussian-regression" &&
        family != "empirical-bootstrap")
      throw std::invalid_argument("model: unknown family '" + family + "'");
    if (!(variance > 0.0)) throw std::invalid_argument("model: variance must be positive");
    if (!(noise_sd > 0.0)) throw std::invalid_argument("model: noise sd must be positive");
  }
};

// One vertex of the session graph.  Data nodes carry observed values; query
// nodes carry the query specification, the recorded outcome, and the seed used
// for the randomization draw so the step can be replayed bit-exactly.
struct Node {
  NodeKind kind = NodeKind::data;
  int stage = 0;
  std::vector<int> parents;
  std::string name;

  // data payload
  ShapeKind shape = ShapeKind::scalar;
  bool observed = false;
  Eigen::MatrixXd values;  // vectors stored as n x 1

  // query payload
  QueryKind query_kind = QueryKind::threshold;
  ThresholdQuery threshold;
  MarginalScreenQuery screen;
  LassoQuery lasso;
  std::vector<AugmentedColumn> lasso_columns;  // design of the lasso in terms of the base X columns
  QueryOutcome outcome;
  std::uint64_t seed = 0;
};

class Dag {
 public:
  int add_data_node(ShapeKind shape, Eigen::MatrixXd values, std::string name = "",
                    bool observed = true) {
    if (observed) {
      if (values.size() == 0)
        throw std::invalid_argument("data node: observed flag requires stored values");
      if (!values.allFinite()) throw std::invalid_argument("data node: non-finite values");
      if (shape == ShapeKind::scalar && values.size() != 1)
        throw std::invalid_argument("data node: scalar shape with non-scalar values");
      if (shape == ShapeKind::vector && values.cols() != 1)
        throw std::invalid_argument("data node: vector shape requires a single column");
    }
    Node node;
    node.kind = NodeKind::data;
    node.stage = stage_counter_;
    node.shape = shape;
    node.observed = observed;
    node.values = std::move(values);
    node.name = std::move(name);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int record_threshold_query(std::vector<int> parents, ThresholdQuery q, QueryOutcome outcome,
                             std::uint64_t seed, std::string name = "") {
    Node node;
    node.query_kind = QueryKind::threshold;
    node.threshold = std::move(q);
    if (outcome.event_held && outcome.selected != std::vector<int>{0})
      throw std::invalid_argument("threshold outcome: a held event must select index 0");
    if (outcome.aux_selected.size() != 1)
      throw std::invalid_argument("threshold outcome: optimization value z missing");
    return record_query(std::move(node), std::move(parents), std::move(outcome), seed,
                        std::move(name));
  }

  int record_screen_query(std::vector<int> parents, MarginalScreenQuery q, QueryOutcome outcome,
                          std::uint64_t seed, std::string name = "") {
    Node node;
    node.query_kind = QueryKind::marginal_screen;
    node.screen = std::move(q);
    const auto k = static_cast<Eigen::Index>(outcome.selected.size());
    if (outcome.aux_selected.size() != k)
      throw std::invalid_argument("screen outcome: one slack per selected index required");
    return record_query(std::move(node), std::move(parents), std::move(outcome), seed,
                        std::move(name));
  }

  int record_lasso_query(std::vector<int> parents, LassoQuery q,
                         std::vector<AugmentedColumn> columns, QueryOutcome outcome,
                         std::uint64_t seed, std::string name = "") {
    Node node;
    node.query_kind = QueryKind::lasso;
    node.lasso = std::move(q);
    node.lasso_columns = std::move(columns);
    const auto k = static_cast<Eigen::Index>(outcome.selected.size());
    if (outcome.aux_selected.size() != k)
      throw std::invalid_argument("lasso outcome: one coefficient per selected index required");
    for (int j : outcome.selected)
      if (j < 0 || static_cast<std::size_t>(j) >= node.lasso_columns.size())
        throw std::invalid_argument("lasso outcome: selected index outside the recorded design");
    return record_query(std::move(node), std::move(parents), std::move(outcome), seed,
                        std::move(name));
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  int stage_counter() const { return stage_counter_; }
  void set_stage_counter(int s) { stage_counter_ = s; }  // used by deserialization

  ModelSpec model;

  std::vector<int> query_node_ids() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].kind == NodeKind::query) out.push_back(static_cast<int>(i));
    return out;
  }

  // Structural invariants: ids dense, parents point backwards (acyclic), query
  // stages strictly exceed all parent stages, outcomes well-formed.
  void validate() const {
    model.validate();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& node = nodes_[i];
      for (int parent : node.parents) {
        if (parent < 0 || static_cast<std::size_t>(parent) >= nodes_.size())
          throw std::invalid_argument("dag: edge endpoint " + std::to_string(parent) +
                                      " does not exist");
        if (static_cast<std::size_t>(parent) >= i)
          throw std::invalid_argument("dag: node " + std::to_string(i) +
                                      " has a forward or self edge (cycle)");
      }
      if (node.kind == NodeKind::query) {
        if (node.parents.empty())
          throw std::invalid_argument("dag: query node " + std::to_string(i) + " has no ancestor");
        for (int parent : node.parents)
          if (nodes_[static_cast<std::size_t>(parent)].stage >= node.stage)
            throw std::invalid_argument("dag: query stage must exceed all parent stages");
        node.outcome.validate_basic();
      } else if (node.observed && !node.values.allFinite()) {
        throw std::invalid_argument("dag: observed data node with non-finite values");
      }
    }
  }

 private:
  int record_query(Node&& node, std::vector<int> parents, QueryOutcome outcome,
                   std::uint64_t seed, std::string name) {
    if (parents.empty()) throw std::invalid_argument("query node: at least one parent required");
    for (int parent : parents)
      if (parent < 0 || static_cast<std::size_t>(parent) >= nodes_.size())
        throw std::invalid_argument("query node: unknown parent id " + std::to_string(parent));
    outcome.validate_basic();
    node.kind = NodeKind::query;
    node.stage = ++stage_counter_;
    node.parents = std::move(parents);
    node.outcome = std::move(outcome);
    node.seed = seed;
    node.name = std::move(name);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  int stage_counter_ = 0;
};

using DataAssignment = std::map<int, Eigen::MatrixXd>;

namespace detail {

// Resolve the (X, y) pair a query consumes from its data-node parents: the
// matrix-shaped parent is the design, the vector-shaped parent the response.
struct XyInputs {
  const Eigen::MatrixXd* X = nullptr;
  const Eigen::MatrixXd* y = nullptr;
};

inline XyInputs resolve_xy(const Dag& dag, const Node& query, const DataAssignment& assignment) {
  XyInputs found;
  for (int parent : query.parents) {
    const Node& pn = dag.node(parent);
    if (pn.kind != NodeKind::data) continue;
    auto it = assignment.find(parent);
    if (it == assignment.end())
      throw std::invalid_argument("selective weight: assignment missing data node " +
                                  std::to_string(parent));
    if (pn.shape == ShapeKind::matrix)
      found.X = &it->second;
    else
      found.y = &it->second;
  }
  return found;
}

inline double threshold_statistic(const Node& parent_node, const Eigen::MatrixXd& values) {
  if (parent_node.shape == ShapeKind::scalar) return values(0, 0);
  // Vector data: the statistic is sqrt(n) * mean.
  return std::sqrt(static_cast<double>(values.rows())) * values.col(0).mean();
}

}  // namespace detail

// Rebuild the design a recorded lasso node ran on: main effects and pairwise
// products of the base X columns, each re-centered and scaled to norm sqrt(n).
inline Eigen::MatrixXd lasso_design_from_columns(const std::vector<AugmentedColumn>& columns,
                                                 const Eigen::MatrixXd& X_base) {
  const auto n = X_base.rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(columns.size()));
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    Eigen::VectorXd col = columns[k].is_interaction()
                              ? X_base.col(columns[k].first).cwiseProduct(X_base.col(columns[k].second))
                              : Eigen::VectorXd(X_base.col(columns[k].first));
    Eigen::VectorXd centered = col.array() - col.mean();
    double norm = centered.norm();
    if (norm <= 1e-12 * sqrt_n)
      throw std::runtime_error("lasso design: recorded column " + std::to_string(k) +
                               " is constant under this assignment");
    out.col(static_cast<Eigen::Index>(k)) = centered * (sqrt_n / norm);
  }
  return out;
}

// Log selective likelihood weight of a data assignment: for each recorded
// query, the log probability (over its randomization) of reproducing the
// recorded outcome, or log of the event indicator when there is none.
// -inf is a first-class value meaning "off the selection event".
inline double selective_log_weight(const Dag& dag, const DataAssignment& assignment) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  for (const auto& [id, values] : assignment) {
    const Node& node = dag.node(id);
    if (node.kind != NodeKind::data)
      throw std::invalid_argument("selective weight: assignment key " + std::to_string(id) +
                                  " is not a data node");
    if (!values.allFinite())
      throw std::invalid_argument("selective weight: non-finite assignment values");
  }
  for (std::size_t i = 0; i < dag.nodes().size(); ++i) {
    const Node& node = dag.nodes()[i];
    if (node.kind == NodeKind::data && assignment.find(static_cast<int>(i)) == assignment.end())
      throw std::invalid_argument("selective weight: assignment must cover all data nodes");
  }

  double total = 0.0;
  for (int qid : dag.query_node_ids()) {
    const Node& qn = dag.node(qid);
    switch (qn.query_kind) {
      case QueryKind::threshold: {
        double t = 0.0;
        bool have = false;
        for (int parent : qn.parents) {
          const Node& pn = dag.node(parent);
          if (pn.kind != NodeKind::data) continue;
          t = detail::threshold_statistic(pn, assignment.at(parent));
          have = true;
        }
        if (!have) throw std::invalid_argument("threshold weight: no data parent");
        const auto& q = qn.threshold;
        if (q.randomization) {
          // P(t + omega > tau) for a held event, its complement otherwise.
          total += qn.outcome.event_held ? q.randomization->log_sf(q.tau - t)
                                         : q.randomization->log_cdf(q.tau - t);
        } else {
          bool holds = t > q.tau;
          if (holds != qn.outcome.event_held) return neg_inf;
        }
        break;
      }
      case QueryKind::marginal_screen: {
        auto inputs = detail::resolve_xy(dag, qn, assignment);
        if (!inputs.X || !inputs.y)
          throw std::invalid_argument("screen weight: need matrix and vector data parents");
        Eigen::VectorXd T = marginal_stats(qn.screen, *inputs.X, inputs.y->col(0));
        const auto& q = qn.screen;
        std::size_t sel = 0;
        for (Eigen::Index j = 0; j < T.size(); ++j) {
          bool selected = sel < qn.outcome.selected.size() &&
                          qn.outcome.selected[sel] == static_cast<int>(j);
          if (selected) {
            double s = qn.outcome.signs[sel];
            // P(T_j + omega > c) or P(T_j + omega < -c) depending on the sign.
            total += s > 0.0 ? q.randomization.log_sf(q.c - T[j])
                             : q.randomization.log_cdf(-q.c - T[j]);
            ++sel;
          } else {
            total += q.randomization.log_cdf_diff(-q.c - T[j], q.c - T[j]);
          }
        }
        break;
      }
      case QueryKind::lasso: {
        auto inputs = detail::resolve_xy(dag, qn, assignment);
        if (!inputs.X || !inputs.y)
          throw std::invalid_argument("lasso weight: need matrix and vector data parents");
        Eigen::MatrixXd design = lasso_design_from_columns(qn.lasso_columns, *inputs.X);
        // No closed form for the probability of hitting (E, s_E) over the
        // randomization, so estimate it by Monte Carlo with a substream fixed
        // by the recorded seed: deterministic for a given session.
        const int n_mc = 2048;
        Rng rng = Rng::stream(qn.seed, 0x1a550u + static_cast<std::uint64_t>(qid));
        int hits = 0;
        for (int b = 0; b < n_mc; ++b) {
          Eigen::VectorXd omega = qn.lasso.randomization.sample(design.cols(), rng);
          try {
            LassoSolution sol = lasso_solve_with(qn.lasso, design, inputs.y->col(0), std::move(omega));
            if (sol.outcome.selected == qn.outcome.selected &&
                sol.outcome.signs == qn.outcome.signs)
              ++hits;
          } catch (const std::runtime_error&) {
            // Non-converged proposal counts as a miss.
          }
        }
        if (hits == 0) return neg_inf;
        total += std::log(static_cast<double>(hits) / n_mc);
        break;
      }
    }
  }
  return total;
}

}  // namespace inferactive
