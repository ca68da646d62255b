#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "inferactive/dag.hpp"
#include "inferactive/data/dataset.hpp"
#include "inferactive/data/synthetic.hpp"
#include "inferactive/math/parallel.hpp"
#include "inferactive/math/rng.hpp"
#include "inferactive/math/stats.hpp"
#include "inferactive/pipeline.hpp"
#include "inferactive/pivots/boot.hpp"
#include "inferactive/pivots/invert.hpp"
#include "inferactive/pivots/plugin.hpp"
#include "inferactive/pivots/tg.hpp"

namespace inferactive {

// A replication study described by a JSON scenario file.  Two problem shapes:
//   threshold-mean: n Gaussian observations, selection sqrt(n)*ybar (+ omega)
//     > tau, pivots for the mean via the listed methods.
//   two-stage: synthetic regression, marginal screen then randomized lasso,
//     sampler pivots at the true selected-model coefficients for E1 n E2.
struct Scenario {
  std::string problem;  // threshold-mean | two-stage
  Eigen::Index n = 100;
  int replications = 100;
  std::uint64_t seed = 1;
  double level = 0.9;

  // threshold-mean
  double mean = 0.0;
  double tau = 0.0;
  std::optional<Randomization> randomization;
  std::vector<std::string> methods;  // tg | plugin | boot-nonrand | boot-weighted
  int boot_b = 2000;

  // two-stage
  Eigen::Index p = 10;
  Eigen::Index sparsity = 0;
  double amplitude = 0.0;
  double rho = 0.0;
  double noise_sd = 1.0;
  double screen_c = 2.5;
  Randomization screen_randomization{RandomizationFamily::gaussian, 1.0};
  bool lasso_lambda_theory = true;
  double lasso_lambda_value = 0.0;
  Randomization lasso_randomization{RandomizationFamily::gaussian, 1.0};
  long long steps = 20000;
  int chains = 2;
};

namespace detail {

inline void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("scenario: unknown field '" + it.key() + "'");
}

inline double num_field(const nlohmann::json& j, const std::string& key, double fallback,
                        bool required = false) {
  if (!j.contains(key)) {
    if (required) throw std::invalid_argument("scenario: missing field '" + key + "'");
    return fallback;
  }
  if (!j.at(key).is_number())
    throw std::invalid_argument("scenario: field '" + key + "' must be a number");
  return j.at(key).get<double>();
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("scenario: top level must be a JSON object");
  if (!j.contains("problem") || !j.at("problem").is_string())
    throw std::invalid_argument("scenario: missing field 'problem'");
  Scenario sc;
  sc.problem = j.at("problem").get<std::string>();

  const std::set<std::string> shared = {"problem", "n", "replications", "seed", "level"};
  if (sc.problem == "threshold-mean") {
    std::set<std::string> allowed = shared;
    allowed.insert({"mean", "tau", "randomization", "methods", "boot_b"});
    detail::require_keys(j, allowed);
  } else if (sc.problem == "two-stage") {
    std::set<std::string> allowed = shared;
    allowed.insert({"p", "sparsity", "amplitude", "rho", "noise_sd", "screen_c",
                    "screen_randomization", "lasso_lambda", "lasso_randomization", "steps",
                    "chains"});
    detail::require_keys(j, allowed);
  } else {
    throw std::invalid_argument("scenario: unknown problem '" + sc.problem +
                                "' (expected threshold-mean or two-stage)");
  }

  sc.n = static_cast<Eigen::Index>(detail::num_field(j, "n", 100, true));
  sc.replications = static_cast<int>(detail::num_field(j, "replications", 100, true));
  sc.seed = static_cast<std::uint64_t>(detail::num_field(j, "seed", 1));
  sc.level = detail::num_field(j, "level", 0.9);
  if (sc.n < 2) throw std::invalid_argument("scenario: need n >= 2");
  if (sc.replications < 1) throw std::invalid_argument("scenario: need replications >= 1");
  if (!(sc.level > 0.0 && sc.level < 1.0))
    throw std::invalid_argument("scenario: level must lie in (0, 1)");

  if (sc.problem == "threshold-mean") {
    sc.mean = detail::num_field(j, "mean", 0.0);
    sc.tau = detail::num_field(j, "tau", 0.0, true);
    sc.boot_b = static_cast<int>(detail::num_field(j, "boot_b", 2000));
    if (j.contains("randomization") && !j.at("randomization").is_null()) {
      if (!j.at("randomization").is_string())
        throw std::invalid_argument(
            "scenario: randomization must be a 'family:scale' string or null");
      sc.randomization = parse_randomization(j.at("randomization").get<std::string>());
    }
    if (!j.contains("methods") || !j.at("methods").is_array() || j.at("methods").empty())
      throw std::invalid_argument("scenario: 'methods' must be a non-empty array");
    for (const auto& m : j.at("methods")) {
      if (!m.is_string()) throw std::invalid_argument("scenario: methods must be strings");
      std::string name = m.get<std::string>();
      if (name != "tg" && name != "plugin" && name != "boot-nonrand" && name != "boot-weighted")
        throw std::invalid_argument("scenario: unknown method '" + name + "'");
      if ((name == "plugin" || name == "boot-weighted") && !sc.randomization)
        throw std::invalid_argument("scenario: method '" + name + "' requires a randomization");
      sc.methods.push_back(name);
    }
  } else {
    sc.p = static_cast<Eigen::Index>(detail::num_field(j, "p", 10));
    sc.sparsity = static_cast<Eigen::Index>(detail::num_field(j, "sparsity", 0));
    sc.amplitude = detail::num_field(j, "amplitude", 0.0);
    sc.rho = detail::num_field(j, "rho", 0.0);
    sc.noise_sd = detail::num_field(j, "noise_sd", 1.0);
    sc.screen_c = detail::num_field(j, "screen_c", 2.5);
    sc.steps = static_cast<long long>(detail::num_field(j, "steps", 20000));
    sc.chains = static_cast<int>(detail::num_field(j, "chains", 2));
    if (j.contains("screen_randomization"))
      sc.screen_randomization =
          parse_randomization(j.at("screen_randomization").get<std::string>());
    if (j.contains("lasso_randomization"))
      sc.lasso_randomization =
          parse_randomization(j.at("lasso_randomization").get<std::string>());
    if (j.contains("lasso_lambda")) {
      const auto& lam = j.at("lasso_lambda");
      if (lam.is_string()) {
        if (lam.get<std::string>() != "theory")
          throw std::invalid_argument("scenario: lasso_lambda must be 'theory' or a number");
        sc.lasso_lambda_theory = true;
      } else if (lam.is_number()) {
        sc.lasso_lambda_theory = false;
        sc.lasso_lambda_value = lam.get<double>();
        if (!(sc.lasso_lambda_value > 0.0))
          throw std::invalid_argument("scenario: lasso_lambda must be positive");
      } else {
        throw std::invalid_argument("scenario: lasso_lambda must be 'theory' or a number");
      }
    }
  }
  return sc;
}

inline Scenario parse_scenario_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: not valid JSON: ") + e.what());
  }
  return parse_scenario(j);
}

namespace detail {

struct SimRow {
  std::string method;
  std::string target;
  double pivot = 0.0;
  bool covered = false;
  double lower = std::numeric_limits<double>::quiet_NaN();   // NaN = blank cell
  double upper = std::numeric_limits<double>::quiet_NaN();
  double width = std::numeric_limits<double>::quiet_NaN();
};

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string fmt_cell(double v) { return std::isnan(v) ? std::string() : fmt_num(v); }

// One threshold-mean replication: returns no rows when the threshold query
// does not select, one row per applicable method otherwise.
inline std::vector<SimRow> threshold_mean_rep(const Scenario& sc, int rep) {
  std::vector<SimRow> rows;
  Rng rng = Rng::stream(sc.seed, static_cast<std::uint64_t>(rep) * 8);
  Eigen::VectorXd y = rng.normal_vec(sc.n);
  y.array() += sc.mean;
  const double root_n = std::sqrt(static_cast<double>(sc.n));
  const double t = root_n * y.mean();
  const double omega = sc.randomization ? sc.randomization->sample1(rng) : 0.0;
  if (!(t + omega > sc.tau)) return rows;

  const double alpha = 1.0 - sc.level;
  const double se = 1.0 / root_n;
  InvertOptions io;
  io.half_width_se = 10.0;
  io.mc_se = 1e-6;  // tolerate last-digit wiggles of the deterministic grids

  for (std::size_t mi = 0; mi < sc.methods.size(); ++mi) {
    const std::string& method = sc.methods[mi];
    SimRow row;
    row.method = method;
    row.target = "mean";
    try {
      if (method == "tg") {
        if (!(t > sc.tau)) continue;  // carried over the threshold by omega alone
        auto piv = [&](double mu) { return tg_pivot(t, root_n * mu, sc.tau); };
        row.pivot = piv(sc.mean);
        IntervalReport ci = invert_pivot(piv, y.mean(), se, alpha, io);
        row.lower = ci.lower;
        row.upper = ci.upper;
        row.covered = ci.lower <= sc.mean && sc.mean <= ci.upper;
        row.width = ci.upper - ci.lower;
      } else if (method == "plugin") {
        auto piv = [&](double mu) {
          return plugin_randomized_pivot(t, root_n * mu, sc.tau, *sc.randomization).pivot;
        };
        row.pivot = piv(sc.mean);
        IntervalReport ci = invert_pivot(piv, y.mean(), se, alpha, io);
        row.lower = ci.lower;
        row.upper = ci.upper;
        row.covered = ci.lower <= sc.mean && sc.mean <= ci.upper;
        row.width = ci.upper - ci.lower;
      } else if (method == "boot-nonrand") {
        if (!(t > sc.tau)) continue;
        Rng brng = Rng::stream(sc.seed, static_cast<std::uint64_t>(rep) * 8 + 1 + mi);
        PivotReport pr = boot_pivot_nonrand(y, sc.mean, sc.tau, sc.boot_b, brng);
        row.pivot = pr.pivot;
        row.covered = 0.5 * alpha <= pr.pivot && pr.pivot <= 1.0 - 0.5 * alpha;
      } else {  // boot-weighted
        Rng brng = Rng::stream(sc.seed, static_cast<std::uint64_t>(rep) * 8 + 1 + mi);
        PivotReport pr =
            weighted_boot_pivot(y, sc.mean, sc.tau, *sc.randomization, sc.boot_b, brng);
        row.pivot = pr.pivot;
        row.covered = 0.5 * alpha <= pr.pivot && pr.pivot <= 1.0 - 0.5 * alpha;
      }
    } catch (const std::runtime_error&) {
      continue;  // degenerate resampling or unreachable threshold: no pivot to report
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// One two-stage replication: screen, lasso, E = E1 n E2, sampler pivots at the
// true selected-model coefficients.  No rows when either stage selects nothing.
inline std::vector<SimRow> two_stage_rep(const Scenario& sc, int rep) {
  std::vector<SimRow> rows;
  const std::uint64_t base = static_cast<std::uint64_t>(rep) * 8;
  SyntheticData syn = gen_synthetic(sc.n, sc.p, sc.sparsity, sc.amplitude, sc.noise_sd, sc.rho,
                                    mix_seed(sc.seed, base));
  Eigen::VectorXd mu_true = syn.dataset.X * syn.beta;
  Dataset ds = standardize(syn.dataset);
  const Eigen::MatrixXd& X = ds.X;
  const Eigen::VectorXd& y = ds.y;

  Rng qrng = Rng::stream(sc.seed, base + 1);
  MarginalScreenQuery screen_q;
  screen_q.c = sc.screen_c;
  screen_q.randomization = sc.screen_randomization;
  screen_q.sigma_estimates = Eigen::VectorXd::Constant(sc.p, sc.noise_sd);
  Eigen::VectorXd T = marginal_stats(screen_q, X, y);
  Eigen::VectorXd omega = screen_q.randomization.sample(sc.p, qrng);
  QueryOutcome screen_out = screen_solve_with(screen_q, T, omega);
  if (screen_out.selected.empty()) return rows;

  std::vector<AugmentedColumn> columns;
  for (int jcol = 0; jcol < static_cast<int>(sc.p); ++jcol) columns.push_back({jcol, -1});
  LassoQuery lasso_q;
  lasso_q.ridge_eps = default_ridge_eps(X);
  lasso_q.randomization = sc.lasso_randomization;
  lasso_q.lam = sc.lasso_lambda_theory ? theory_lambda(X, sc.noise_sd, qrng, 200)
                                       : sc.lasso_lambda_value;
  LassoSolution sol = lasso_solve(lasso_q, X, y, qrng);
  if (sol.outcome.selected.empty()) return rows;

  std::vector<int> final_set;
  for (int jcol : screen_out.selected)
    if (sol.outcome.contains(jcol)) final_set.push_back(jcol);
  if (final_set.empty()) return rows;

  Dag dag;
  int x_id = dag.add_data_node(ShapeKind::matrix, X, "X");
  int y_id = dag.add_data_node(ShapeKind::vector, y, "y");
  dag.record_screen_query({x_id, y_id}, screen_q, screen_out, mix_seed(sc.seed, base + 2),
                          "screen");
  dag.record_lasso_query({x_id, y_id}, lasso_q, columns, sol.outcome,
                         mix_seed(sc.seed, base + 3), "lasso");
  dag.model.family = "gaussian-regression";
  dag.model.noise_sd = sc.noise_sd;
  dag.model.targets = final_set;

  // True value of each reported target: the population projection of the
  // signal onto the selected columns.
  const auto k = static_cast<Eigen::Index>(final_set.size());
  Eigen::MatrixXd D(sc.n, k);
  for (Eigen::Index i = 0; i < k; ++i)
    D.col(i) = X.col(final_set[static_cast<std::size_t>(i)]);
  Eigen::VectorXd theta_true =
      (D.transpose() * D).llt().solve(D.transpose() * mu_true);

  InferOptions opts;
  opts.level = sc.level;
  opts.intervals = false;
  opts.steps = sc.steps;
  opts.chains = sc.chains;
  opts.seed = mix_seed(sc.seed, base + 4);
  opts.null_values = theta_true;
  std::vector<InferenceReport> reports = run_inference(dag, opts);

  const double alpha = 1.0 - sc.level;
  for (const auto& rep_out : reports) {
    SimRow row;
    row.method = "sampler";
    row.target = rep_out.target;
    row.pivot = rep_out.pivot;
    row.covered = 0.5 * alpha <= rep_out.pivot && rep_out.pivot <= 1.0 - 0.5 * alpha;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// Run the scenario and return the results CSV: one row per replication per
// method that produced a pivot, then one summary comment line per method with
// the KS distance of the pivots to Unif[0,1] and the empirical coverage.
// Deterministic given the scenario (including its seed) for any thread count.
inline std::string run_simulation(const Scenario& sc) {
  std::vector<std::vector<detail::SimRow>> per_rep(static_cast<std::size_t>(sc.replications));
  parallel_for(static_cast<std::size_t>(sc.replications), [&](std::size_t r) {
    per_rep[r] = sc.problem == "threshold-mean"
                     ? detail::threshold_mean_rep(sc, static_cast<int>(r))
                     : detail::two_stage_rep(sc, static_cast<int>(r));
  });

  std::string out = "rep,method,target,pivot,covered,lower,upper,width\n";
  std::map<std::string, std::vector<double>> pivots;
  std::map<std::string, std::vector<double>> covers;
  std::map<std::string, std::vector<double>> widths;
  for (std::size_t r = 0; r < per_rep.size(); ++r) {
    for (const auto& row : per_rep[r]) {
      out += std::to_string(r);
      out += ',';
      out += row.method;
      out += ',';
      out += row.target;
      out += ',';
      out += detail::fmt_num(row.pivot);
      out += ',';
      out += row.covered ? '1' : '0';
      out += ',';
      out += detail::fmt_cell(row.lower);
      out += ',';
      out += detail::fmt_cell(row.upper);
      out += ',';
      out += detail::fmt_cell(row.width);
      out += '\n';
      pivots[row.method].push_back(row.pivot);
      covers[row.method].push_back(row.covered ? 1.0 : 0.0);
      if (!std::isnan(row.width)) widths[row.method].push_back(row.width);
    }
  }
  for (const auto& [method, vals] : pivots) {
    out += "# summary method=" + method;
    out += " reps=" + std::to_string(vals.size());
    out += " ks=" + detail::fmt_num(ks_uniform(vals));
    out += " coverage=" + detail::fmt_num(mean_of(covers.at(method)));
    auto w = widths.find(method);
    if (w != widths.end() && !w->second.empty())
      out += " mean_width=" + detail::fmt_num(mean_of(w->second));
    out += '\n';
  }
  return out;
}

}  // namespace inferactive
