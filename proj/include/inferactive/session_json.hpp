#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "inferactive/dag.hpp"
#include "inferactive/data/dataset.hpp"
#include "inferactive/pivots/report.hpp"

namespace inferactive {

// A session bundles the analysis graph with the dataset bookkeeping the CLI
// needs (column names, standardization) and any inference results produced so
// far.  The on-disk form is the JSON schema documented in docs/session_schema.md.
struct Session {
  int version = 1;
  Dag dag;
  std::vector<std::string> column_names;
  std::string response_name = "y";
  Standardization standardization;
  std::vector<InferenceReport> inference;
};

namespace detail {

using nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw std::runtime_error("session: " + where + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  if (!j[0].is_array())
    throw std::runtime_error("session: " + where + " rows must be arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::runtime_error("session: ragged matrix in " + where);
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw std::runtime_error("session: " + where + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

inline json randomization_to_json(const Randomization& r) {
  return json{{"family", family_name(r.family)}, {"scale", r.scale}};
}

inline Randomization randomization_from_json(const json& j) {
  std::string fam = j.at("family").get<std::string>();
  double scale = j.at("scale").get<double>();
  if (fam == "gaussian") return Randomization(RandomizationFamily::gaussian, scale);
  if (fam == "laplace") return Randomization(RandomizationFamily::laplace, scale);
  if (fam == "logistic") return Randomization(RandomizationFamily::logistic, scale);
  throw std::runtime_error("session: unknown randomization family '" + fam + "'");
}

inline json outcome_to_json(const QueryOutcome& o) {
  return json{{"selected", o.selected},
              {"signs", o.signs},
              {"aux_selected", vector_to_json(o.aux_selected)},
              {"aux_unselected", vector_to_json(o.aux_unselected)},
              {"event_held", o.event_held}};
}

inline QueryOutcome outcome_from_json(const json& j) {
  QueryOutcome o;
  o.selected = j.at("selected").get<std::vector<int>>();
  o.signs = j.at("signs").get<std::vector<double>>();
  o.aux_selected = vector_from_json(j.at("aux_selected"), "outcome.aux_selected");
  o.aux_unselected = vector_from_json(j.at("aux_unselected"), "outcome.aux_unselected");
  o.event_held = j.at("event_held").get<bool>();
  return o;
}

inline json node_to_json(const Node& node) {
  json out;
  out["name"] = node.name;
  out["stage"] = node.stage;
  out["parents"] = node.parents;
  if (node.kind == NodeKind::data) {
    out["kind"] = "data";
    out["spec"] = nullptr;
    out["outcome"] = nullptr;
    out["seed"] = nullptr;
    switch (node.shape) {
      case ShapeKind::scalar: out["shape"] = "scalar"; break;
      case ShapeKind::vector: out["shape"] = "vector"; break;
      case ShapeKind::matrix: out["shape"] = "matrix"; break;
    }
    out["observed"] = node.observed;
    out["values"] = node.observed ? matrix_to_json(node.values) : json(nullptr);
    return out;
  }
  out["kind"] = "query";
  out["seed"] = node.seed;
  out["outcome"] = outcome_to_json(node.outcome);
  json spec;
  spec["query"] = query_kind_name(node.query_kind);
  switch (node.query_kind) {
    case QueryKind::threshold:
      spec["tau"] = node.threshold.tau;
      spec["randomization"] = node.threshold.randomization
                                  ? randomization_to_json(*node.threshold.randomization)
                                  : json(nullptr);
      break;
    case QueryKind::marginal_screen:
      spec["c"] = node.screen.c;
      spec["randomization"] = randomization_to_json(node.screen.randomization);
      spec["sigma_estimates"] = vector_to_json(node.screen.sigma_estimates);
      break;
    case QueryKind::lasso: {
      spec["lam"] = node.lasso.lam;
      spec["ridge_eps"] = node.lasso.ridge_eps;
      spec["randomization"] = randomization_to_json(node.lasso.randomization);
      json cols = json::array();
      for (const auto& c : node.lasso_columns)
        cols.push_back(json::array({c.first, c.second}));
      spec["columns"] = std::move(cols);
      break;
    }
  }
  out["spec"] = std::move(spec);
  return out;
}

inline json model_to_json(const ModelSpec& m) {
  return json{{"family", m.family},         {"mean", m.mean},
              {"variance", m.variance},     {"noise_sd", m.noise_sd},
              {"coef", vector_to_json(m.coef)}, {"targets", m.targets}};
}

inline ModelSpec model_from_json(const json& j) {
  ModelSpec m;
  m.family = j.at("family").get<std::string>();
  m.mean = j.at("mean").get<double>();
  m.variance = j.at("variance").get<double>();
  m.noise_sd = j.at("noise_sd").get<double>();
  m.coef = vector_from_json(j.at("coef"), "model.coef");
  m.targets = j.at("targets").get<std::vector<int>>();
  m.validate();
  return m;
}

inline json report_to_json(const InferenceReport& r) {
  auto num = [](double v) {
    // JSON has no infinities; use string sentinels for open interval ends.
    if (std::isinf(v)) return json(v > 0 ? "inf" : "-inf");
    return json(v);
  };
  return json{{"target", r.target}, {"method", r.method},   {"estimate", r.estimate},
              {"pivot", r.pivot},   {"p_value", r.p_value}, {"mc_se", r.mc_se},
              {"lower", num(r.lower)}, {"upper", num(r.upper)}, {"level", r.level},
              {"seed", r.seed}};
}

inline InferenceReport report_from_json(const json& j) {
  auto num = [](const json& v, const std::string& where) -> double {
    if (v.is_string()) {
      std::string s = v.get<std::string>();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
      throw std::runtime_error("session: bad numeric sentinel in " + where);
    }
    return v.get<double>();
  };
  InferenceReport r;
  r.target = j.at("target").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.estimate = j.at("estimate").get<double>();
  r.pivot = j.at("pivot").get<double>();
  r.p_value = j.at("p_value").get<double>();
  r.mc_se = j.at("mc_se").get<double>();
  r.lower = num(j.at("lower"), "inference.lower");
  r.upper = num(j.at("upper"), "inference.upper");
  r.level = j.at("level").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

}  // namespace detail

inline std::string serialize_session(const Session& session) {
  using nlohmann::json;
  session.dag.validate();
  json out;
  out["version"] = session.version;
  json nodes = json::array();
  json edges = json::array();
  const auto& ns = session.dag.nodes();
  for (std::size_t i = 0; i < ns.size(); ++i) {
    nodes.push_back(detail::node_to_json(ns[i]));
    for (int parent : ns[i].parents)
      edges.push_back(json::array({parent, static_cast<int>(i)}));
  }
  out["nodes"] = std::move(nodes);
  out["edges"] = std::move(edges);
  out["model"] = detail::model_to_json(session.dag.model);
  out["dataset"] = json{
      {"columns", session.column_names},
      {"response", session.response_name},
      {"standardization",
       session.standardization.applied
           ? json{{"center", detail::vector_to_json(session.standardization.center)},
                  {"scale", detail::vector_to_json(session.standardization.scale)}}
           : json(nullptr)}};
  json inf = json::array();
  for (const auto& r : session.inference) inf.push_back(detail::report_to_json(r));
  out["inference"] = std::move(inf);
  return out.dump(2) + "\n";
}

inline Session deserialize_session(const std::string& text) {
  using nlohmann::json;
  json in;
  try {
    in = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("session: malformed JSON: ") + e.what());
  }
  Session session;
  try {
    session.version = in.at("version").get<int>();
    if (session.version != 1)
      throw std::runtime_error("session: unsupported version " + std::to_string(session.version));
    session.dag.model = detail::model_from_json(in.at("model"));

    const json& nodes = in.at("nodes");
    if (!nodes.is_array()) throw std::runtime_error("session: nodes must be an array");
    int stage_max = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const json& jn = nodes[i];
      std::string kind = jn.at("kind").get<std::string>();
      if (kind == "data") {
        ShapeKind shape;
        std::string sh = jn.at("shape").get<std::string>();
        if (sh == "scalar")
          shape = ShapeKind::scalar;
        else if (sh == "vector")
          shape = ShapeKind::vector;
        else if (sh == "matrix")
          shape = ShapeKind::matrix;
        else
          throw std::runtime_error("session: node " + std::to_string(i) + " has unknown shape");
        bool observed = jn.at("observed").get<bool>();
        Eigen::MatrixXd values;
        if (observed)
          values = detail::matrix_from_json(jn.at("values"), "node " + std::to_string(i));
        session.dag.add_data_node(shape, std::move(values),
                                  jn.value("name", std::string{}), observed);
      } else if (kind == "query") {
        const json& spec = jn.at("spec");
        std::string qk = spec.at("query").get<std::string>();
        QueryOutcome outcome = detail::outcome_from_json(jn.at("outcome"));
        auto parents = jn.at("parents").get<std::vector<int>>();
        auto seed = jn.at("seed").get<std::uint64_t>();
        auto name = jn.value("name", std::string{});
        if (qk == "threshold") {
          ThresholdQuery q;
          q.tau = spec.at("tau").get<double>();
          if (!spec.at("randomization").is_null())
            q.randomization = detail::randomization_from_json(spec.at("randomization"));
          session.dag.record_threshold_query(parents, q, outcome, seed, name);
        } else if (qk == "marginal-screen") {
          MarginalScreenQuery q;
          q.c = spec.at("c").get<double>();
          q.randomization = detail::randomization_from_json(spec.at("randomization"));
          q.sigma_estimates = detail::vector_from_json(spec.at("sigma_estimates"),
                                                       "spec.sigma_estimates");
          session.dag.record_screen_query(parents, q, outcome, seed, name);
        } else if (qk == "lasso") {
          LassoQuery q;
          q.lam = spec.at("lam").get<double>();
          q.ridge_eps = spec.at("ridge_eps").get<double>();
          q.randomization = detail::randomization_from_json(spec.at("randomization"));
          std::vector<AugmentedColumn> columns;
          for (const auto& c : spec.at("columns"))
            columns.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
          session.dag.record_lasso_query(parents, q, std::move(columns), outcome, seed, name);
        } else {
          throw std::runtime_error("session: unknown query kind '" + qk + "'");
        }
      } else {
        throw std::runtime_error("session: node " + std::to_string(i) + " has unknown kind");
      }
      stage_max = std::max(stage_max, nodes[i].at("stage").get<int>());
    }
    session.dag.set_stage_counter(stage_max);

    const json& ds = in.at("dataset");
    session.column_names = ds.at("columns").get<std::vector<std::string>>();
    session.response_name = ds.at("response").get<std::string>();
    if (!ds.at("standardization").is_null()) {
      session.standardization.applied = true;
      session.standardization.center =
          detail::vector_from_json(ds.at("standardization").at("center"), "standardization.center");
      session.standardization.scale =
          detail::vector_from_json(ds.at("standardization").at("scale"), "standardization.scale");
    }
    for (const auto& jr : in.at("inference"))
      session.inference.push_back(detail::report_from_json(jr));
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("session: schema violation: ") + e.what());
  }
  session.dag.validate();
  return session;
}

inline Session load_session(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("session: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_session(buf.str());
}

// Atomic rewrite: serialize to a sibling temp file, then rename over the
// target, so a crash can never leave a half-written session behind.
inline void save_session(const Session& session, const std::string& path) {
  std::string text = serialize_session(session);
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("session: cannot write '" + tmp + "'");
    out << text;
    if (!out) throw std::runtime_error("session: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("session: atomic rename to '" + path + "' failed");
}

}  // namespace inferactive
