// Command-line front end: record interactive selective analyses as session
// files and report selectively valid inference from them.
//
// Exit codes: 0 success, 1 usage error, 2 empty selection, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "inferactive/data/csv.hpp"
#include "inferactive/data/dataset.hpp"
#include "inferactive/pipeline.hpp"
#include "inferactive/queries/interactions.hpp"
#include "inferactive/session_json.hpp"
#include "inferactive/simulate.hpp"

namespace {

using namespace inferactive;

// Raised when a query selects nothing: reported to the user, exit code 2,
// and the session file is left untouched.
struct EmptySelection : std::exception {
  const char* what() const noexcept override { return "nothing selected; inference not defined"; }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string fmt10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path))
    throw std::invalid_argument(what + ": no such file '" + path + "'");
}

// --- session plumbing -------------------------------------------------------

struct DataIds {
  int x_id = -1;  // matrix node (regression only)
  int y_id = -1;  // vector node
};

DataIds find_data_nodes(const Dag& dag) {
  DataIds out;
  for (std::size_t i = 0; i < dag.nodes().size(); ++i) {
    const Node& node = dag.nodes()[i];
    if (node.kind != NodeKind::data) continue;
    if (node.shape == ShapeKind::matrix) out.x_id = static_cast<int>(i);
    if (node.shape == ShapeKind::vector) out.y_id = static_cast<int>(i);
  }
  if (out.y_id == -1) throw std::invalid_argument("session has no response node");
  return out;
}

std::string column_label(const AugmentedColumn& c, const std::vector<std::string>& names) {
  auto base = [&](int j) -> std::string {
    if (j >= 0 && static_cast<std::size_t>(j) < names.size()) return names[static_cast<std::size_t>(j)];
    return "x" + std::to_string(j);
  };
  if (!c.is_interaction()) return base(c.first);
  return base(c.first) + ":" + base(c.second);
}

// Labels of the design the reported coefficients live in: the last lasso's
// recorded columns when one exists, the base columns otherwise.
std::vector<std::string> reporting_labels(const Session& session) {
  const Node* last_lasso = nullptr;
  for (int qid : session.dag.query_node_ids()) {
    const Node& qn = session.dag.node(qid);
    if (qn.query_kind == QueryKind::lasso) last_lasso = &qn;
  }
  if (!last_lasso) return session.column_names;
  std::vector<std::string> out;
  out.reserve(last_lasso->lasso_columns.size());
  for (const auto& c : last_lasso->lasso_columns) out.push_back(column_label(c, session.column_names));
  return out;
}

// Labels of the design a given query's outcome indexes into.
std::vector<std::string> outcome_labels(const Node& qn, const std::vector<std::string>& names) {
  if (qn.query_kind == QueryKind::lasso) {
    std::vector<std::string> out;
    for (const auto& c : qn.lasso_columns) out.push_back(column_label(c, names));
    return out;
  }
  return names;
}

void print_selection(const Node& qn, const std::vector<std::string>& names) {
  if (qn.query_kind == QueryKind::threshold) {
    std::printf("selected (1): mean  [z=%s]\n", fmt(qn.outcome.aux_selected[0]).c_str());
    return;
  }
  std::vector<std::string> labels = outcome_labels(qn, names);
  std::printf("selected (%zu):", qn.outcome.selected.size());
  for (std::size_t i = 0; i < qn.outcome.selected.size(); ++i) {
    int j = qn.outcome.selected[i];
    std::string label = static_cast<std::size_t>(j) < labels.size()
                            ? labels[static_cast<std::size_t>(j)]
                            : "x" + std::to_string(j);
    std::printf(" %s(%c)", label.c_str(), qn.outcome.signs[i] > 0 ? '+' : '-');
  }
  std::printf("\n");
}

// The selection set recorded by the most recent query, as indices into the
// reporting design.  Used to pick a lasso's main-effect pool and the default
// inference targets.
std::vector<int> last_selection(const Dag& dag) {
  const auto& qids = dag.query_node_ids();
  if (qids.empty()) return {};
  return dag.node(qids.back()).outcome.selected;
}

// A lasso's main effects are the previously selected base columns (all of
// them for a first-stage lasso).  Interactions, when requested, are the
// pairwise products within that pool.
std::vector<AugmentedColumn> lasso_column_recipe(const Session& session, bool interactions) {
  const Dag& dag = session.dag;
  std::vector<int> pool;
  if (dag.query_node_ids().empty()) {
    for (int j = 0; j < static_cast<int>(session.column_names.size()); ++j) pool.push_back(j);
  } else {
    const Node& prev = dag.node(dag.query_node_ids().back());
    if (prev.query_kind == QueryKind::lasso) {
      // Map the previous lasso's selected design columns back to base columns.
      std::set<int> bases;
      for (int j : prev.outcome.selected) {
        const AugmentedColumn& c = prev.lasso_columns[static_cast<std::size_t>(j)];
        bases.insert(c.first);
        if (c.is_interaction()) bases.insert(c.second);
      }
      pool.assign(bases.begin(), bases.end());
    } else {
      pool = prev.outcome.selected;
    }
  }
  if (pool.empty()) throw std::invalid_argument("lasso: no columns available for the design");

  std::vector<AugmentedColumn> columns;
  for (int j : pool) columns.push_back({j, -1});
  if (interactions) {
    for (std::size_t a = 0; a < pool.size(); ++a)
      for (std::size_t b = a + 1; b < pool.size(); ++b) columns.push_back({pool[a], pool[b]});
  }
  return columns;
}

bool has_interaction(const Node& node) {
  for (const auto& c : node.lasso_columns)
    if (c.is_interaction()) return true;
  return false;
}

Randomization resolve_randomization(const std::string& spec, const Eigen::MatrixXd& design,
                                    double sigma_hat) {
  if (!spec.empty()) return parse_randomization(spec);
  return Randomization{RandomizationFamily::gaussian, default_regression_scale(design, sigma_hat)};
}

// --- subcommand implementations ---------------------------------------------

struct InitArgs {
  std::string csv, response, out;
  std::string family = "gaussian-regression";
  bool do_standardize = true;
  double noise_sd = 0.0;  // 0 = estimate from the full-model fit
  double mean = 0.0;
  double variance = 0.0;  // 0 = sample variance of the response
};

int cmd_init(const InitArgs& a) {
  require_file(a.csv, "init");
  Dataset ds = load_csv(a.csv, a.response);

  Session session;
  session.column_names = ds.names;
  session.response_name = ds.response_name;

  if (a.family == "gaussian-mean") {
    session.dag.model.family = "gaussian-mean";
    session.dag.model.mean = a.mean;
    if (a.variance > 0.0) {
      session.dag.model.variance = a.variance;
    } else {
      std::vector<double> yv(ds.y.data(), ds.y.data() + ds.y.size());
      session.dag.model.variance = variance_of(yv);
    }
    session.dag.add_data_node(ShapeKind::vector, ds.y, "y");
    save_session(session, a.out);
    std::printf("session written to %s (gaussian-mean, n=%lld, variance=%s%s)\n", a.out.c_str(),
                static_cast<long long>(ds.n()), fmt(session.dag.model.variance).c_str(),
                a.variance > 0.0 ? "" : " estimated");
    return 0;
  }

  if (a.family != "gaussian-regression")
    throw std::invalid_argument("init: unknown family '" + a.family +
                                "' (gaussian-mean | gaussian-regression)");
  if (ds.p() == 0) throw std::invalid_argument("init: regression needs predictor columns");
  if (a.do_standardize) ds = standardize(ds);
  session.standardization = ds.standardization;

  session.dag.model.family = "gaussian-regression";
  bool estimated = !(a.noise_sd > 0.0);
  session.dag.model.noise_sd = estimated ? full_model_sigma_hat(ds.X, ds.y) : a.noise_sd;
  session.dag.add_data_node(ShapeKind::matrix, ds.X, "X");
  session.dag.add_data_node(ShapeKind::vector, ds.y, "y");
  save_session(session, a.out);
  std::printf("session written to %s (gaussian-regression, n=%lld, p=%lld, noise sd=%s%s%s)\n",
              a.out.c_str(), static_cast<long long>(ds.n()), static_cast<long long>(ds.p()),
              fmt(session.dag.model.noise_sd).c_str(), estimated ? " estimated" : "",
              a.do_standardize ? ", standardized" : "");
  return 0;
}

struct QueryArgs {
  std::string session_path;
  std::uint64_t seed = 0;
  double tau = 0.0;
  double c = 2.5;
  std::string lam = "theory";
  std::string rand_spec;
  bool interactions = false;
};

int cmd_query_threshold(const QueryArgs& a) {
  require_file(a.session_path, "query");
  Session session = load_session(a.session_path);
  if (session.dag.model.family != "gaussian-mean")
    throw std::invalid_argument("threshold queries need a gaussian-mean session");

  DataIds ids = find_data_nodes(session.dag);
  const Node& yn = session.dag.node(ids.y_id);
  double t = detail::threshold_statistic(yn, yn.values);

  ThresholdQuery q;
  q.tau = a.tau;
  if (!a.rand_spec.empty()) q.randomization = parse_randomization(a.rand_spec);
  Rng rng(a.seed);
  QueryOutcome outcome = threshold_solve(q, t, rng);
  if (!outcome.event_held) throw EmptySelection{};

  int id = session.dag.record_threshold_query({ids.y_id}, q, outcome, a.seed, "threshold");
  session.dag.validate();
  save_session(session, a.session_path);
  print_selection(session.dag.node(id), session.column_names);
  std::printf("session updated: %s\n", a.session_path.c_str());
  return 0;
}

int cmd_query_screen(const QueryArgs& a) {
  require_file(a.session_path, "query");
  Session session = load_session(a.session_path);
  if (session.dag.model.family != "gaussian-regression")
    throw std::invalid_argument("marginal-screen queries need a gaussian-regression session");

  DataIds ids = find_data_nodes(session.dag);
  if (ids.x_id == -1) throw std::invalid_argument("session has no design node");
  const Eigen::MatrixXd& X = session.dag.node(ids.x_id).values;
  const Eigen::VectorXd y = session.dag.node(ids.y_id).values.col(0);
  const double sigma_hat = session.dag.model.noise_sd;

  MarginalScreenQuery q;
  q.c = a.c;
  q.randomization = resolve_randomization(a.rand_spec, X, sigma_hat);
  q.sigma_estimates = Eigen::VectorXd::Constant(X.cols(), sigma_hat);
  Eigen::VectorXd T = marginal_stats(q, X, y);
  Rng rng(a.seed);
  Eigen::VectorXd omega = q.randomization.sample(X.cols(), rng);
  QueryOutcome outcome = screen_solve_with(q, T, omega);
  if (outcome.selected.empty()) throw EmptySelection{};

  int id = session.dag.record_screen_query({ids.x_id, ids.y_id}, q, outcome, a.seed, "screen");
  session.dag.validate();
  save_session(session, a.session_path);
  print_selection(session.dag.node(id), session.column_names);
  std::printf("session updated: %s\n", a.session_path.c_str());
  return 0;
}

int cmd_query_lasso(const QueryArgs& a) {
  require_file(a.session_path, "query");
  Session session = load_session(a.session_path);
  if (session.dag.model.family != "gaussian-regression")
    throw std::invalid_argument("lasso queries need a gaussian-regression session");

  DataIds ids = find_data_nodes(session.dag);
  if (ids.x_id == -1) throw std::invalid_argument("session has no design node");
  const Eigen::MatrixXd& X = session.dag.node(ids.x_id).values;
  const Eigen::VectorXd y = session.dag.node(ids.y_id).values.col(0);
  const double sigma_hat = session.dag.model.noise_sd;

  std::vector<AugmentedColumn> columns = lasso_column_recipe(session, a.interactions);
  Eigen::MatrixXd design = lasso_design_from_columns(columns, X);

  LassoQuery q;
  q.ridge_eps = default_ridge_eps(design);
  q.randomization = resolve_randomization(a.rand_spec, design, sigma_hat);
  Rng rng(a.seed);
  if (a.lam == "theory") {
    q.lam = theory_lambda(design, sigma_hat, rng, 200);
  } else {
    try {
      std::size_t pos = 0;
      q.lam = std::stod(a.lam, &pos);
      if (pos != a.lam.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("lasso: --lam must be 'theory' or a number, got '" + a.lam + "'");
    }
    if (!(q.lam > 0.0)) throw std::invalid_argument("lasso: --lam must be positive");
  }
  LassoSolution sol = lasso_solve(q, design, y, rng);
  if (sol.outcome.selected.empty()) throw EmptySelection{};

  int id = session.dag.record_lasso_query({ids.x_id, ids.y_id}, q, columns, sol.outcome, a.seed,
                                          "lasso");
  session.dag.validate();
  save_session(session, a.session_path);
  std::printf("lambda=%s\n", fmt(q.lam).c_str());
  print_selection(session.dag.node(id), session.column_names);
  std::printf("session updated: %s\n", a.session_path.c_str());
  return 0;
}

struct InferArgs {
  std::string session_path;
  std::string targets_csv;
  double level = 0.9;
  std::string method = "auto";
  std::uint64_t seed = 1;
  int steps = 30000;
  int chains = 2;
  double null_value = 0.0;
};

int cmd_infer(const InferArgs& a) {
  require_file(a.session_path, "infer");
  Session session = load_session(a.session_path);

  InferOptions opts;
  opts.level = a.level;
  opts.method = a.method;
  opts.seed = a.seed;
  opts.steps = a.steps;
  opts.chains = a.chains;
  opts.null_value = a.null_value;

  if (session.dag.model.family == "gaussian-regression") {
    std::vector<std::string> labels = reporting_labels(session);
    std::vector<int> targets;
    if (!a.targets_csv.empty()) {
      std::stringstream ss(a.targets_csv);
      std::string item;
      while (std::getline(ss, item, ',')) {
        auto it = std::find(labels.begin(), labels.end(), item);
        if (it == labels.end()) {
          std::string avail;
          for (const auto& l : labels) avail += (avail.empty() ? "" : ", ") + l;
          throw std::invalid_argument("infer: unknown target '" + item +
                                      "'; reporting design columns: " + avail);
        }
        targets.push_back(static_cast<int>(it - labels.begin()));
      }
    } else {
      targets = last_selection(session.dag);
      if (targets.empty() && !session.dag.model.targets.empty())
        targets = session.dag.model.targets;
    }
    if (targets.empty())
      throw std::invalid_argument("infer: no targets (run a selecting query or pass --targets)");
    session.dag.model.targets = targets;
    opts.target_labels.clear();
    for (int j : targets)
      opts.target_labels.push_back("coef[" + labels[static_cast<std::size_t>(j)] + "]");
  }

  std::vector<InferenceReport> reports = run_inference(session.dag, opts);
  for (auto& r : reports) session.inference.push_back(r);
  save_session(session, a.session_path);

  std::printf("%-24s %-18s %12s %12s %12s %10s %10s\n", "target", "method", "estimate", "lower",
              "upper", "pvalue", "mc_se");
  for (const auto& r : reports)
    std::printf("%-24s %-18s %12s %12s %12s %10s %10s\n", r.target.c_str(), r.method.c_str(),
                fmt(r.estimate).c_str(), fmt(r.lower).c_str(), fmt(r.upper).c_str(),
                fmt(r.p_value).c_str(), fmt(r.mc_se).c_str());
  std::printf("session updated: %s\n", a.session_path.c_str());
  return 0;
}

int cmd_show(const std::string& path) {
  require_file(path, "show");
  Session session = load_session(path);
  const Dag& dag = session.dag;

  std::printf("session %s\n", path.c_str());
  const ModelSpec& m = dag.model;
  if (m.family == "gaussian-mean") {
    std::printf("model: gaussian-mean (mean=%s, variance=%s)\n", fmt(m.mean).c_str(),
                fmt(m.variance).c_str());
  } else {
    std::printf("model: %s (noise sd=%s)\n", m.family.c_str(), fmt(m.noise_sd).c_str());
  }
  if (session.standardization.applied) std::printf("data: columns standardized\n");

  int stage = -1;
  for (std::size_t i = 0; i < dag.nodes().size(); ++i) {
    const Node& node = dag.nodes()[i];
    if (node.stage != stage) {
      stage = node.stage;
      std::printf("stage %d:\n", stage);
    }
    if (node.kind == NodeKind::data) {
      const char* shape = node.shape == ShapeKind::matrix   ? "matrix"
                          : node.shape == ShapeKind::vector ? "vector"
                                                            : "scalar";
      std::printf("  [%zu] data %s: %s %lldx%lld%s\n", i, node.name.c_str(), shape,
                  static_cast<long long>(node.values.rows()),
                  static_cast<long long>(node.values.cols()),
                  node.observed ? " (observed)" : "");
      continue;
    }
    std::string parents;
    for (std::size_t k = 0; k < node.parents.size(); ++k)
      parents += (k ? "," : "") + std::to_string(node.parents[k]);
    std::printf("  [%zu] query %s (parents %s, seed %llu)\n", i,
                query_kind_name(node.query_kind).c_str(), parents.c_str(),
                static_cast<unsigned long long>(node.seed));
    if (node.query_kind == QueryKind::threshold) {
      std::printf("      tau=%s randomization=%s\n", fmt(node.threshold.tau).c_str(),
                  node.threshold.randomization
                      ? format_randomization(*node.threshold.randomization).c_str()
                      : "none");
      std::printf("      event %s\n", node.outcome.event_held ? "held" : "failed");
    } else if (node.query_kind == QueryKind::marginal_screen) {
      std::printf("      c=%s randomization=%s\n", fmt(node.screen.c).c_str(),
                  format_randomization(node.screen.randomization).c_str());
    } else {
      std::printf("      lambda=%s ridge=%s randomization=%s columns=%zu%s\n",
                  fmt(node.lasso.lam).c_str(), fmt(node.lasso.ridge_eps).c_str(),
                  format_randomization(node.lasso.randomization).c_str(),
                  node.lasso_columns.size(), has_interaction(node) ? " (with interactions)" : "");
    }
    if (node.query_kind != QueryKind::threshold) {
      std::vector<std::string> labels = outcome_labels(node, session.column_names);
      std::printf("      selected:");
      for (std::size_t k = 0; k < node.outcome.selected.size(); ++k) {
        int j = node.outcome.selected[k];
        std::printf(" %s(%c)",
                    static_cast<std::size_t>(j) < labels.size()
                        ? labels[static_cast<std::size_t>(j)].c_str()
                        : ("x" + std::to_string(j)).c_str(),
                    node.outcome.signs[k] > 0 ? '+' : '-');
      }
      std::printf("\n");
    }
  }

  if (session.inference.empty()) {
    std::printf("inference: none recorded\n");
  } else {
    std::printf("inference: %zu reports\n", session.inference.size());
    for (const auto& r : session.inference)
      std::printf("  %s: estimate=%s, %g%% interval [%s, %s], p=%s (%s)\n", r.target.c_str(),
                  fmt(r.estimate).c_str(), 100.0 * r.level, fmt(r.lower).c_str(),
                  fmt(r.upper).c_str(), fmt(r.p_value).c_str(), r.method.c_str());
  }
  return 0;
}

int cmd_simulate(const std::string& scenario_path, std::uint64_t seed, const std::string& out) {
  require_file(scenario_path, "simulate");
  std::ifstream in(scenario_path);
  std::stringstream buf;
  buf << in.rdbuf();
  Scenario sc = parse_scenario_text(buf.str());
  sc.seed = seed;

  auto t0 = std::chrono::steady_clock::now();
  std::string csv = run_simulation(sc);
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "simulate: %d replications in %.1fs\n", sc.replications, elapsed);

  if (out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("simulate: cannot write '" + out + "'");
    os << csv;
    std::printf("results written to %s\n", out.c_str());
  }
  return 0;
}

int cmd_plotdata(const std::string& session_path, const std::string& out) {
  require_file(session_path, "plotdata");
  Session session = load_session(session_path);
  if (session.inference.empty())
    throw std::invalid_argument("plotdata: no inference recorded in session");

  std::string csv = "name,estimate,lower,upper,pvalue\n";
  for (const auto& r : session.inference)
    csv += r.target + "," + fmt10(r.estimate) + "," + fmt10(r.lower) + "," + fmt10(r.upper) + "," +
           fmt10(r.p_value) + "\n";

  if (out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("plotdata: cannot write '" + out + "'");
    os << csv;
    std::printf("plot data written to %s\n", out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inferactive: record selective analyses, report selectively valid inference"};
  app.require_subcommand(1);

  // session ------------------------------------------------------------
  auto* session = app.add_subcommand("session", "create, extend, and inspect session files");
  session->require_subcommand(1);

  InitArgs init_args;
  auto* s_init = session->add_subcommand("init", "start a session from a CSV file");
  s_init->add_option("--csv", init_args.csv, "input CSV with a header row")->required();
  s_init->add_option("--response", init_args.response, "name of the response column")->required();
  s_init->add_option("--out", init_args.out, "session file to write")->required();
  s_init->add_option("--family", init_args.family, "gaussian-mean | gaussian-regression");
  s_init->add_flag("--standardize,!--no-standardize", init_args.do_standardize,
                   "center predictors and scale each to norm sqrt(n) (default on; "
                   "screening and lasso queries assume it)");
  s_init->add_option("--noise-sd", init_args.noise_sd,
                     "regression noise sd (default: full-model residual estimate)");
  s_init->add_option("--mean", init_args.mean, "gaussian-mean reference mean (default 0)");
  s_init->add_option("--variance", init_args.variance,
                     "gaussian-mean per-observation variance (default: sample variance)");

  QueryArgs query_args;
  auto* s_query = session->add_subcommand("query", "run a selection query and record its outcome");
  s_query->add_option("--session", query_args.session_path, "session file to extend")->required();
  s_query->add_option("--seed", query_args.seed, "seed for the randomization draw")->required();
  s_query->require_subcommand(1);
  auto* q_threshold = s_query->add_subcommand("threshold", "keep the mean if sqrt(n)*ybar > tau");
  q_threshold->add_option("--tau", query_args.tau, "threshold")->required();
  q_threshold->add_option("--rand", query_args.rand_spec,
                          "randomization family:scale (default: none)");
  auto* q_screen = s_query->add_subcommand("marginal-screen", "keep columns with |z_j + omega_j| > c");
  q_screen->add_option("--c", query_args.c, "screening threshold")->required();
  q_screen->add_option("--rand", query_args.rand_spec,
                       "randomization family:scale (default: gaussian, auto scale)");
  auto* q_lasso = s_query->add_subcommand("lasso", "randomized lasso on the current column pool");
  q_lasso->add_option("--lam", query_args.lam, "'theory' or a positive penalty value")->required();
  q_lasso->add_option("--rand", query_args.rand_spec,
                      "randomization family:scale (default: gaussian, auto scale)");
  q_lasso->add_flag("--interactions", query_args.interactions,
                    "add pairwise interactions of the current pool to the design");

  InferArgs infer_args;
  auto* s_infer = session->add_subcommand("infer", "selective inference for the selected targets");
  s_infer->add_option("--session", infer_args.session_path, "session file")->required();
  s_infer->add_option("--targets", infer_args.targets_csv,
                      "comma-separated column names (default: last selection set)");
  s_infer->add_option("--level", infer_args.level, "interval level (default 0.9)");
  s_infer->add_option("--method", infer_args.method, "auto | tg | plugin | sampler");
  s_infer->add_option("--seed", infer_args.seed, "sampler seed (default 1)");
  s_infer->add_option("--steps", infer_args.steps, "Langevin steps per chain");
  s_infer->add_option("--chains", infer_args.chains, "number of chains");
  s_infer->add_option("--null", infer_args.null_value, "null value for every target (default 0)");

  std::string show_path;
  auto* s_show = session->add_subcommand("show", "print the session graph");
  s_show->add_option("--session", show_path, "session file")->required();

  // simulate -----------------------------------------------------------
  std::string scenario_path, sim_out;
  std::uint64_t sim_seed = 0;
  auto* sim = app.add_subcommand("simulate", "run a replication study from a scenario file");
  sim->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  sim->add_option("--seed", sim_seed, "master seed")->required();
  sim->add_option("--out", sim_out, "results CSV (default: stdout)");

  // plotdata -----------------------------------------------------------
  std::string plot_session, plot_out;
  auto* plot = app.add_subcommand("plotdata", "export recorded inference as plot-ready CSV");
  plot->add_option("--session", plot_session, "session file")->required();
  plot->add_option("--out", plot_out, "output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(session)) {
      if (session->got_subcommand(s_init)) return cmd_init(init_args);
      if (session->got_subcommand(s_query)) {
        if (s_query->got_subcommand(q_threshold)) return cmd_query_threshold(query_args);
        if (s_query->got_subcommand(q_screen)) return cmd_query_screen(query_args);
        return cmd_query_lasso(query_args);
      }
      if (session->got_subcommand(s_infer)) return cmd_infer(infer_args);
      return cmd_show(show_path);
    }
    if (app.got_subcommand(sim)) return cmd_simulate(scenario_path, sim_seed, sim_out);
    return cmd_plotdata(plot_session, plot_out);
  } catch (const EmptySelection& e) {
    std::printf("%s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
