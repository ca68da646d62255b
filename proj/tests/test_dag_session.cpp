#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "inferactive/dag.hpp"
#include "inferactive/session_json.hpp"

using namespace inferactive;

namespace {

Randomization gauss(double s) { return {RandomizationFamily::gaussian, s}; }

Eigen::MatrixXd vec(std::initializer_list<double> xs) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

// A session with one scalar data node and a randomized threshold query.
struct SimpleSession {
  Dag dag;
  int data_id;
  int query_id;
};

SimpleSession make_threshold_session(double t, double tau, bool randomized, double omega) {
  SimpleSession s;
  s.dag.model.family = "gaussian-mean";
  s.data_id = s.dag.add_data_node(ShapeKind::scalar, vec({t}), "t");
  ThresholdQuery q;
  q.tau = tau;
  if (randomized) q.randomization = gauss(1.0);
  QueryOutcome out = threshold_solve_with(q, t, omega);
  s.query_id = s.dag.record_threshold_query({s.data_id}, q, out, 7, "zt");
  return s;
}

}  // namespace

TEST_CASE("data nodes get dense sequential ids") {
  Dag dag;
  int a = dag.add_data_node(ShapeKind::vector, vec({1, 2, 3, 4, 5}), "y");
  CHECK(a == 0);
  CHECK(dag.nodes().size() == 1);
  int b = dag.add_data_node(ShapeKind::scalar, vec({1.0}));
  CHECK(b == 1);
  Eigen::MatrixXd m(3, 2);
  m.setZero();
  int c = dag.add_data_node(ShapeKind::matrix, m, "X");
  CHECK(c == 2);

  Eigen::MatrixXd bad(2, 1);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dag.add_data_node(ShapeKind::vector, bad), std::invalid_argument);
}

TEST_CASE("query recording enforces stages and referential integrity") {
  Dag dag;
  Eigen::MatrixXd X(4, 2);
  X << 1, -1, -1, 1, 1, 1, -1, -1;
  int xid = dag.add_data_node(ShapeKind::matrix, X, "X");
  int yid = dag.add_data_node(ShapeKind::vector, vec({1, 2, 3, 4}), "y");

  MarginalScreenQuery sq;
  sq.c = 1.0;
  sq.randomization = gauss(1.0);
  sq.sigma_estimates = Eigen::VectorXd::Ones(2);
  QueryOutcome so;
  so.selected = {1};
  so.signs = {1.0};
  so.aux_selected = Eigen::VectorXd::Constant(1, 0.4);
  so.aux_unselected = Eigen::VectorXd::Constant(1, 0.2);
  int q1 = dag.record_screen_query({xid, yid}, sq, so, 3, "screen");
  CHECK(dag.node(q1).stage == 1);
  CHECK(dag.stage_counter() == 1);

  LassoQuery lq;
  lq.lam = 1.0;
  lq.ridge_eps = 0.1;
  lq.randomization = gauss(1.0);
  QueryOutcome lo;
  lo.aux_selected.resize(0);
  lo.aux_unselected = Eigen::VectorXd::Zero(1);
  int q2 = dag.record_lasso_query({xid, yid, q1}, lq, {{1, -1}}, lo, 4, "lasso");
  CHECK(dag.node(q2).stage == 2);
  CHECK_NOTHROW(dag.validate());

  CHECK_THROWS_AS(dag.record_screen_query({99}, sq, so, 3), std::invalid_argument);

  QueryOutcome bad = so;
  bad.signs = {1.0, -1.0};
  CHECK_THROWS_AS(dag.record_screen_query({xid, yid}, sq, bad, 3), std::invalid_argument);
}

TEST_CASE("deterministic threshold weight is an indicator") {
  SimpleSession s = make_threshold_session(2.5, 2.0, false, 0.0);
  DataAssignment good{{s.data_id, vec({3.0})}};
  DataAssignment bad{{s.data_id, vec({1.0})}};
  CHECK(selective_log_weight(s.dag, good) == 0.0);
  CHECK(selective_log_weight(s.dag, bad) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("randomized threshold weight marginalizes the noise") {
  SimpleSession s = make_threshold_session(1.5, 2.0, true, 1.0);
  DataAssignment a{{s.data_id, vec({1.0})}};
  // P(1 + omega > 2) = 1 - Phi(1) for standard Gaussian noise.
  double expected = std::log(0.5 * std::erfc(1.0 / std::sqrt(2.0)));
  CHECK(selective_log_weight(s.dag, a) == Catch::Approx(expected).epsilon(1e-12));
  // Weights are log probabilities: nonpositive everywhere.
  for (double t : {-3.0, 0.0, 2.0, 10.0}) {
    DataAssignment at{{s.data_id, vec({t})}};
    CHECK(selective_log_weight(s.dag, at) <= 0.0);
  }
}

TEST_CASE("vector data nodes feed the threshold statistic sqrt(n)*mean") {
  Dag dag;
  dag.model.family = "gaussian-mean";
  int yid = dag.add_data_node(ShapeKind::vector, vec({1.0, 2.0, 3.0, 2.0}), "y");
  ThresholdQuery q;
  q.tau = 2.0;
  q.randomization = gauss(1.0);
  double t_obs = std::sqrt(4.0) * 2.0;  // sqrt(n) * ybar = 4
  QueryOutcome out = threshold_solve_with(q, t_obs, 0.5);
  dag.record_threshold_query({yid}, q, out, 1);
  DataAssignment a{{yid, vec({0.0, 1.0, 0.0, 1.0})}};  // t = 2 * 0.5 = 1
  double expected = std::log(0.5 * std::erfc(1.0 / std::sqrt(2.0)));  // P(omega > 1)
  CHECK(selective_log_weight(dag, a) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("screening weight multiplies per-coordinate selection probabilities") {
  Dag dag;
  dag.model.family = "gaussian-regression";
  const Eigen::Index n = 16;
  Eigen::MatrixXd X(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;
    X(i, 1) = (i % 4 < 2) ? 1.0 : -1.0;
  }
  int xid = dag.add_data_node(ShapeKind::matrix, X, "X");
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = X(i, 0) * 0.8;
  int yid = dag.add_data_node(ShapeKind::vector, y, "y");

  MarginalScreenQuery q;
  q.c = 2.0;
  q.randomization = gauss(1.0);
  q.sigma_estimates = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd T = marginal_stats(q, X, y.col(0));
  Eigen::VectorXd omega(2);
  omega << 3.0, 0.1;  // select feature 0 with sign +, leave feature 1 out
  QueryOutcome out = screen_solve_with(q, T, omega);
  REQUIRE(out.selected == std::vector<int>{0});
  dag.record_screen_query({xid, yid}, q, out, 9);

  DataAssignment a{{xid, X}, {yid, y}};
  // Oracle: product of the normal probabilities, from raw erfc calls.
  auto sf = [](double v) { return 0.5 * std::erfc(v / std::sqrt(2.0)); };
  double expected = std::log(sf(q.c - T[0])) + std::log(1.0 - sf(q.c - T[1]) - (1.0 - sf(-q.c - T[1])));
  CHECK(selective_log_weight(dag, a) == Catch::Approx(expected).epsilon(1e-9));
  CHECK(selective_log_weight(dag, a) <= 0.0);
}

TEST_CASE("session JSON round trip preserves everything") {
  // Build a 2-stage session: threshold + screening on shared data.
  Dag dag;
  dag.model.family = "gaussian-mean";
  dag.model.mean = 0.25;
  dag.model.targets = {0};
  int yid = dag.add_data_node(ShapeKind::vector, vec({0.4, 0.9, -0.2, 1.4}), "y");
  ThresholdQuery tq;
  tq.tau = 0.5;
  tq.randomization = gauss(0.7);
  QueryOutcome out1 = threshold_solve_with(tq, 1.25, 0.33);
  dag.record_threshold_query({yid}, tq, out1, 424242, "stage1");

  Session s;
  s.dag = dag;
  s.column_names = {"a", "b"};
  s.response_name = "resp";
  s.standardization.applied = true;
  s.standardization.center = Eigen::VectorXd::Constant(2, 0.5);
  s.standardization.scale = Eigen::VectorXd::Constant(2, 2.0);
  InferenceReport rep;
  rep.target = "mean";
  rep.method = "plugin-randomized";
  rep.estimate = 0.31;
  rep.pivot = 0.44;
  rep.p_value = 0.88;
  rep.lower = -std::numeric_limits<double>::infinity();
  rep.upper = 0.9;
  rep.seed = 17;
  s.inference.push_back(rep);

  std::string text = serialize_session(s);
  Session back = deserialize_session(text);
  CHECK(serialize_session(back) == text);  // fixed point
  CHECK(back.dag.nodes().size() == 2);
  CHECK(back.dag.node(1).seed == 424242);
  CHECK(back.dag.node(1).threshold.tau == 0.5);
  CHECK(back.dag.node(1).threshold.randomization->scale == 0.7);
  CHECK(back.dag.node(1).outcome.aux_selected[0] == Catch::Approx(1.58));
  CHECK(back.dag.model.mean == 0.25);
  CHECK(back.dag.stage_counter() == 1);
  CHECK(back.column_names == s.column_names);
  CHECK(back.standardization.scale[1] == 2.0);
  REQUIRE(back.inference.size() == 1);
  CHECK(back.inference[0].upper == 0.9);
  CHECK(back.inference[0].lower == -std::numeric_limits<double>::infinity());
  CHECK(back.inference[0].seed == 17);

  // Weight is preserved exactly through the round trip.
  DataAssignment a{{yid, vec({0.1, 0.2, 0.3, 0.4})}};
  CHECK(selective_log_weight(back.dag, a) == selective_log_weight(dag, a));
}

TEST_CASE("malformed session text is rejected with context") {
  CHECK_THROWS_AS(deserialize_session("{ truncated"), std::runtime_error);
  CHECK_THROWS_AS(deserialize_session("{}"), std::runtime_error);
  CHECK_THROWS_AS(deserialize_session("[1,2,3]"), std::runtime_error);
}

TEST_CASE("dag validation catches structural corruption") {
  SimpleSession s = make_threshold_session(2.5, 2.0, true, 0.4);
  CHECK_NOTHROW(s.dag.validate());
  Dag corrupt = s.dag;
  corrupt.node(1).parents = {1};  // self edge
  CHECK_THROWS_AS(corrupt.validate(), std::invalid_argument);
  Dag corrupt2 = s.dag;
  corrupt2.node(1).stage = 0;  // stage must exceed parents
  CHECK_THROWS_AS(corrupt2.validate(), std::invalid_argument);
}
