#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "inferactive/dag.hpp"
#include "inferactive/math/rng.hpp"
#include "inferactive/math/stats.hpp"
#include "inferactive/sampler/build.hpp"
#include "inferactive/sampler/langevin.hpp"
#include "inferactive/sampler/oracle.hpp"

using namespace inferactive;
using Catch::Approx;

namespace {

Randomization gauss(double s) { return {RandomizationFamily::gaussian, s}; }

// Inverse-CDF draws from an unnormalized log density tabulated on a fine grid.
// Independent of the Langevin machinery; used as a reference distribution.
std::vector<double> grid_draws(const std::function<double(double)>& log_f, double lo, double hi,
                               int n_grid, int n_draws, Rng& rng) {
  std::vector<double> xs(static_cast<std::size_t>(n_grid)), f(static_cast<std::size_t>(n_grid));
  const double dx = (hi - lo) / (n_grid - 1);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_grid; ++i) {
    xs[static_cast<std::size_t>(i)] = lo + dx * i;
    f[static_cast<std::size_t>(i)] = log_f(xs[static_cast<std::size_t>(i)]);
    mx = std::max(mx, f[static_cast<std::size_t>(i)]);
  }
  for (auto& v : f) v = std::exp(v - mx);
  std::vector<double> cdf(static_cast<std::size_t>(n_grid), 0.0);
  for (int i = 1; i < n_grid; ++i)
    cdf[static_cast<std::size_t>(i)] =
        cdf[static_cast<std::size_t>(i - 1)] +
        0.5 * (f[static_cast<std::size_t>(i - 1)] + f[static_cast<std::size_t>(i)]) * dx;
  const double total = cdf.back();
  REQUIRE(total > 0.0);
  std::vector<double> draws(static_cast<std::size_t>(n_draws));
  for (auto& d : draws) {
    double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t i = std::min(static_cast<std::size_t>(it - cdf.begin()),
                             cdf.size() - 1);
    double c0 = cdf[i - 1], c1 = cdf[i];
    double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
    d = xs[i - 1] + frac * dx;
  }
  return draws;
}

std::vector<double> column_of(const Eigen::MatrixXd& m, Eigen::Index j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

// --- session fixtures ----------------------------------------------------

struct ThresholdSession {
  Dag dag;
  double t_obs = 0.0;
  double z_obs = 0.0;
};

ThresholdSession make_threshold_session(double t_obs, double omega_obs, double tau, double scale,
                                        double model_mean) {
  ThresholdSession s;
  s.t_obs = t_obs;
  s.z_obs = t_obs + omega_obs;
  int stat = s.dag.add_data_node(ShapeKind::scalar, Eigen::MatrixXd::Constant(1, 1, t_obs), "t");
  ThresholdQuery q;
  q.tau = tau;
  if (scale > 0.0) q.randomization = gauss(scale);
  QueryOutcome outcome = threshold_solve_with(q, t_obs, scale > 0.0 ? omega_obs : 0.0);
  REQUIRE(outcome.event_held);
  s.dag.record_threshold_query({stat}, q, outcome, 7, "gate");
  s.dag.model.family = "gaussian-mean";
  s.dag.model.mean = model_mean;
  s.dag.model.variance = 1.0;
  return s;
}

Eigen::MatrixXd test_design(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = rng.normal();
    X.col(j).array() -= X.col(j).mean();
    X.col(j) *= std::sqrt(static_cast<double>(n)) / X.col(j).norm();
  }
  return X;
}

struct RegressionSession {
  Dag dag;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  int x_id = -1, y_id = -1;
  int query_id = -1;
};

RegressionSession make_screen_session(Eigen::Index n, Eigen::Index p, double c, double scale,
                                      std::uint64_t seed) {
  Rng rng(seed);
  RegressionSession s;
  s.X = test_design(n, p, seed + 1);
  // Search over response draws for a session whose screen keeps 1-2 features,
  // so that the rejection oracle's target event has workable probability.
  MarginalScreenQuery q;
  q.c = c;
  q.randomization = gauss(scale);
  q.sigma_estimates = Eigen::VectorXd::Ones(p);
  for (int attempt = 0; attempt < 200; ++attempt) {
    Eigen::VectorXd y = rng.normal_vec(n);
    Eigen::VectorXd T = marginal_stats(q, s.X, y);
    Eigen::VectorXd omega = q.randomization.sample(p, rng);
    QueryOutcome outcome = screen_solve_with(q, T, omega);
    if (outcome.selected.size() < 1 || outcome.selected.size() > 2) continue;
    s.y = y;
    s.x_id = s.dag.add_data_node(ShapeKind::matrix, s.X, "X");
    s.y_id = s.dag.add_data_node(ShapeKind::vector, y, "y");
    s.query_id = s.dag.record_screen_query({s.x_id, s.y_id}, q, outcome, 11, "screen");
    s.dag.model.family = "gaussian-regression";
    s.dag.model.noise_sd = 1.0;
    s.dag.model.targets = {outcome.selected.front()};
    return s;
  }
  FAIL("no screen session with a small selection found");
  return s;
}

RegressionSession make_lasso_session(Eigen::Index n, Eigen::Index p, double lam, double scale,
                                     std::uint64_t seed) {
  Rng rng(seed);
  RegressionSession s;
  s.X = test_design(n, p, seed + 1);
  std::vector<AugmentedColumn> columns;
  for (int j = 0; j < static_cast<int>(p); ++j) columns.push_back({j, -1});
  Eigen::MatrixXd design = lasso_design_from_columns(columns, s.X);
  LassoQuery q;
  q.lam = lam;
  q.ridge_eps = default_ridge_eps(design);
  q.randomization = gauss(scale);
  for (int attempt = 0; attempt < 200; ++attempt) {
    Eigen::VectorXd y = rng.normal_vec(n);
    LassoSolution sol = lasso_solve(q, design, y, rng);
    if (sol.outcome.selected.size() < 1 || sol.outcome.selected.size() > 2) continue;
    s.y = y;
    s.x_id = s.dag.add_data_node(ShapeKind::matrix, s.X, "X");
    s.y_id = s.dag.add_data_node(ShapeKind::vector, y, "y");
    s.query_id = s.dag.record_lasso_query({s.x_id, s.y_id}, q, columns, sol.outcome, 13, "lasso");
    s.dag.model.family = "gaussian-regression";
    s.dag.model.noise_sd = 1.0;
    s.dag.model.targets = {sol.outcome.selected.front()};
    return s;
  }
  FAIL("no lasso session with a small selection found");
  return s;
}

double finite_difference(const SelectiveDensity& density, const Eigen::VectorXd& x,
                         Eigen::Index i, double h) {
  Eigen::VectorXd hi = x, lo = x;
  hi[i] += h;
  lo[i] -= h;
  if (!density.in_support(hi) || !density.in_support(lo))
    return std::numeric_limits<double>::quiet_NaN();
  return (density.log_density(hi) - density.log_density(lo)) / (2.0 * h);
}

void check_gradient(const SelectiveDensity& density, const Eigen::VectorXd& x) {
  Eigen::VectorXd grad = density.grad_log_density(x);
  int tested = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double h = 1e-6 * std::max(1.0, std::fabs(x[i]));
    double fd = finite_difference(density, x, i, h);
    if (!std::isfinite(fd)) continue;  // too close to the support boundary
    ++tested;
    REQUIRE(grad[i] == Approx(fd).margin(2e-4 * (1.0 + std::fabs(grad[i]))));
  }
  REQUIRE(tested >= static_cast<int>(x.size()) - 1);
}

}  // namespace

TEST_CASE("threshold density reproduces the solver reconstruction") {
  ThresholdSession s = make_threshold_session(2.8, 0.4, 2.0, 1.0, 0.8);
  SelectiveDensity density = build_density(s.dag, s.dag.model);
  REQUIRE(density.data_dim() == 1);
  REQUIRE(density.blocks.size() == 1);
  REQUIRE(density.init_state[0] == Approx(s.t_obs));
  REQUIRE(density.init_state[1] == Approx(s.z_obs));

  const ThresholdQuery& q = s.dag.node(1).threshold;
  const auto& blk = density.blocks[0];
  Eigen::VectorXd t(1), v(1);
  t << s.t_obs;
  v << s.z_obs;
  Eigen::VectorXd omega = blk.omega(t, v);
  REQUIRE(omega.size() == 1);
  REQUIRE(omega[0] == Approx(threshold_reconstruct(q, s.z_obs, s.t_obs)).margin(1e-12));

  // Also at a perturbed in-support state.
  t << 1.1;
  v << 2.6;
  REQUIRE(blk.omega(t, v)[0] == Approx(threshold_reconstruct(q, 2.6, 1.1)).margin(1e-12));

  REQUIRE(density.in_support(density.init_state));
  REQUIRE(std::isfinite(density.log_density(density.init_state)));
  Eigen::VectorXd bad = density.init_state;
  bad[1] = 1.9;  // z below tau
  REQUIRE(density.log_density(bad) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("screen density reproduces the solver reconstruction") {
  RegressionSession s = make_screen_session(60, 4, 1.2, 1.0, 101);
  SelectiveDensity density = build_density(s.dag, s.dag.model);
  const Node& qn = s.dag.node(s.query_id);
  const auto k = static_cast<Eigen::Index>(qn.outcome.selected.size());
  REQUIRE(density.data_dim() == 1);
  REQUIRE(density.blocks.size() == 1);
  REQUIRE(density.blocks[0].dim() == s.X.cols());

  detail::RegressionPlumbing plumbing = detail::resolve_regression(s.dag, s.dag.model);
  Eigen::VectorXd theta_obs = plumbing.weights * s.y;
  Eigen::VectorXd w_obs = plumbing.whiten(theta_obs);
  REQUIRE(density.init_state.head(1).isApprox(w_obs, 1e-10));

  Eigen::VectorXd T_obs = marginal_stats(qn.screen, s.X, s.y);
  Eigen::VectorXd expected = screen_reconstruct(qn.screen, T_obs, qn.outcome.aux_unselected,
                                                qn.outcome.aux_selected, qn.outcome);
  Eigen::VectorXd v = density.init_state.tail(s.X.cols());
  Eigen::VectorXd omega = density.blocks[0].omega(w_obs, v);
  REQUIRE(omega.isApprox(expected, 1e-8));

  // Perturb the target and the optimization variables: the affine block must
  // track the statistic's dependence on the target exactly.
  Eigen::VectorXd w2 = w_obs.array() + 0.37;
  Eigen::VectorXd v2 = v;
  v2.head(v2.size() - k).array() *= 0.8;   // eta stays inside (-c, c)
  v2.tail(k).array() += 0.25;              // slacks stay positive
  // Statistic consistent with the moved target: S = gamma * theta + nuisance.
  Eigen::VectorXd theta2 = plumbing.chol * w2;
  Eigen::MatrixXd stat_map(s.X.cols(), s.X.rows());
  for (Eigen::Index j = 0; j < s.X.cols(); ++j)
    stat_map.row(j) = s.X.col(j).transpose() / (qn.screen.sigma_estimates[j] * s.X.col(j).norm());
  Eigen::MatrixXd ww = plumbing.weights * plumbing.weights.transpose();
  Eigen::MatrixXd gamma =
      ww.llt().solve(plumbing.weights * stat_map.transpose()).transpose();
  Eigen::VectorXd nuisance = stat_map * s.y - gamma * theta_obs;
  Eigen::VectorXd T2 = gamma * theta2 + nuisance;
  Eigen::VectorXd expected2 =
      screen_reconstruct(qn.screen, T2, v2.head(v2.size() - k), v2.tail(k), qn.outcome);
  REQUIRE(density.blocks[0].omega(w2, v2).isApprox(expected2, 1e-8));

  REQUIRE(density.in_support(density.init_state));
  Eigen::VectorXd bad = density.init_state;
  bad[density.total_dim() - 1] = -0.3;  // negative slack
  REQUIRE(density.log_density(bad) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("lasso density reproduces the solver reconstruction") {
  RegressionSession s = make_lasso_session(80, 5, 14.0, 2.0, 202);
  SelectiveDensity density = build_density(s.dag, s.dag.model);
  const Node& qn = s.dag.node(s.query_id);
  const auto k = static_cast<Eigen::Index>(qn.outcome.selected.size());
  Eigen::MatrixXd design = lasso_design_from_columns(qn.lasso_columns, s.X);

  detail::RegressionPlumbing plumbing = detail::resolve_regression(s.dag, s.dag.model);
  Eigen::VectorXd w_obs = plumbing.whiten(plumbing.weights * s.y);

  Eigen::VectorXd expected = lasso_reconstruct(qn.lasso, design, s.y, qn.outcome.aux_selected,
                                               qn.outcome.aux_unselected, qn.outcome);
  Eigen::VectorXd v = density.init_state.tail(design.cols());
  REQUIRE(v.head(k).isApprox(qn.outcome.aux_selected, 1e-12));
  Eigen::VectorXd omega = density.blocks[0].omega(w_obs, v);
  REQUIRE(omega.isApprox(expected, 1e-7));

  REQUIRE(density.blocks[0].log_jacobian ==
          Approx(lasso_log_jacobian(qn.lasso, design, qn.outcome.selected)));

  REQUIRE(density.in_support(density.init_state));
  Eigen::VectorXd bad = density.init_state;
  bad[1] = -bad[1];  // flip the first active coefficient's sign
  REQUIRE(density.log_density(bad) == -std::numeric_limits<double>::infinity());
  bad = density.init_state;
  bad[density.total_dim() - 1] = 1.4;  // subgradient outside [-1, 1]
  REQUIRE(density.log_density(bad) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("density gradients match finite differences") {
  ThresholdSession ts = make_threshold_session(2.8, 0.4, 2.0, 1.0, 0.8);
  SelectiveDensity d1 = build_density(ts.dag, ts.dag.model);
  check_gradient(d1, d1.init_state);

  RegressionSession ss = make_screen_session(60, 4, 1.2, 1.0, 101);
  SelectiveDensity d2 = build_density(ss.dag, ss.dag.model);
  check_gradient(d2, d2.init_state);

  RegressionSession ls = make_lasso_session(80, 5, 14.0, 2.0, 202);
  SelectiveDensity d3 = build_density(ls.dag, ls.dag.model);
  check_gradient(d3, d3.init_state);

  // Away from the observed state as well.
  Rng rng(5);
  Eigen::VectorXd x = d2.project(d2.init_state + 0.2 * rng.normal_vec(d2.total_dim()));
  check_gradient(d2, x);
}

TEST_CASE("projection is idempotent and respects the support") {
  RegressionSession ls = make_lasso_session(80, 5, 14.0, 2.0, 202);
  SelectiveDensity density = build_density(ls.dag, ls.dag.model);
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd x = density.init_state + 2.0 * rng.normal_vec(density.total_dim());
    Eigen::VectorXd p1 = density.project(x);
    Eigen::VectorXd p2 = density.project(p1);
    REQUIRE((p1 - p2).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE(density.in_support(p1));
  }
}

TEST_CASE("langevin chains are reproducible and thread-count independent") {
  ThresholdSession s = make_threshold_session(2.8, 0.4, 2.0, 1.0, 0.8);
  SelectiveDensity density = build_density(s.dag, s.dag.model);
  LangevinOptions options;
  options.steps = 4000;
  options.step_size = 0.05;

  Rng r1(42), r2(42);
  LangevinChain a = langevin_sample(density, density.init_state, options, r1);
  LangevinChain b = langevin_sample(density, density.init_state, options, r2);
  REQUIRE((a.states.array() == b.states.array()).all());

  setenv("INFERACTIVE_THREADS", "1", 1);
  Eigen::MatrixXd m1 = langevin_sample_parallel(density, density.init_state, 4, options, 99);
  setenv("INFERACTIVE_THREADS", "3", 1);
  Eigen::MatrixXd m2 = langevin_sample_parallel(density, density.init_state, 4, options, 99);
  unsetenv("INFERACTIVE_THREADS");
  REQUIRE((m1.array() == m2.array()).all());
  REQUIRE(m1.rows() == 4 * a.states.rows());
}

TEST_CASE("langevin reproduces an unconstrained gaussian") {
  SelectiveDensity density;
  density.data_mean = Eigen::VectorXd::Constant(1, 1.5);
  density.data_sd = Eigen::VectorXd::Constant(1, 2.0);
  density.init_state = Eigen::VectorXd::Constant(1, 1.5);
  density.validate();

  LangevinOptions options;
  options.steps = 300000;
  options.step_size = 0.16;  // per-step variance inflation factor 1/(1 - eta/(2 sd^2)) = 1.0204
  Rng rng(7);
  LangevinChain chain = langevin_sample(density, density.init_state, options, rng);
  std::vector<double> draws = column_of(chain.states, 0);
  REQUIRE(mean_of(draws) == Approx(1.5).margin(0.1));
  REQUIRE(variance_of(draws) == Approx(4.0 * 1.0204).margin(0.25));
}

TEST_CASE("langevin halves the step size on divergence") {
  SelectiveDensity density;
  density.data_mean = Eigen::VectorXd::Zero(1);
  density.data_sd = Eigen::VectorXd::Ones(1);
  density.validate();
  Eigen::VectorXd init = Eigen::VectorXd::Constant(1, 0.5);

  LangevinOptions options;
  options.steps = 20000;
  options.step_size = 4.0;  // |1 - eta| = 3: geometric blow-up until halved
  Rng rng(3);
  LangevinChain chain = langevin_sample(density, init, options, rng);
  REQUIRE(chain.step_size < 4.0);
  REQUIRE(chain.states.allFinite());

  options.max_step_halvings = 0;
  Rng rng2(3);
  REQUIRE_THROWS_WITH(langevin_sample(density, init, options, rng2),
                      Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("threshold marginal density integrates the randomization tail") {
  // Against the gaussian-convolution identity:
  //   integral phi(t - m) (1 - Phi((tau - t)/g)) dt = 1 - Phi((tau - m)/sqrt(1 + g^2)).
  const double m = 0.6, tau = 2.0, g = 1.3;
  Randomization G = gauss(g);
  const int n_grid = 40001;
  const double lo = m - 14.0, hi = m + 14.0, dx = (hi - lo) / (n_grid - 1);
  double mass = 0.0;
  for (int i = 0; i < n_grid; ++i) {
    double t = lo + dx * i;
    double f = std::exp(marginal_log_density_threshold(t, m, tau, G));
    mass += (i == 0 || i == n_grid - 1 ? 0.5 : 1.0) * f * dx;
  }
  double expected = 0.5 * std::erfc((tau - m) / std::sqrt(1.0 + g * g) / std::sqrt(2.0));
  REQUIRE(mass == Approx(expected).epsilon(1e-6));

  // And the formula is the reference log density plus the survival term.
  REQUIRE(marginal_log_density_threshold(1.1, m, tau, G) ==
          Approx(log_norm_pdf(1.1 - m) + G.log_sf(tau - 1.1)).margin(1e-13));
}

TEST_CASE("langevin matches the marginalized threshold law") {
  ThresholdSession s = make_threshold_session(2.8, 0.4, 2.0, 1.0, 0.8);
  SelectiveDensity density = build_density(s.dag, s.dag.model);

  LangevinOptions options;
  options.steps = 2500000;
  options.step_size = 0.015;
  options.thin = 250;
  options.retain = Eigen::MatrixXd::Zero(1, density.total_dim());
  options.retain(0, 0) = 1.0;
  Rng rng(2024);
  LangevinChain chain = langevin_sample(density, density.init_state, options, rng);
  std::vector<double> mcmc = column_of(chain.states, 0);

  Randomization G = gauss(1.0);
  auto log_f = [&](double t) { return marginal_log_density_threshold(t, 0.8, 2.0, G); };
  Rng grid_rng(55);
  std::vector<double> ref = grid_draws(log_f, -12.0, 14.0, 20001, 50000, grid_rng);

  double ks = ks_two_sample(mcmc, ref);
  INFO("ks = " << ks << " with " << mcmc.size() << " retained states");
  REQUIRE(ks < 0.025);
}

TEST_CASE("langevin matches a hard truncation without randomization") {
  ThresholdSession s = make_threshold_session(2.8, 0.0, 2.0, 0.0, 0.8);
  SelectiveDensity density = build_density(s.dag, s.dag.model);
  REQUIRE(density.blocks.empty());
  REQUIRE(density.total_dim() == 1);

  LangevinOptions options;
  options.steps = 1200000;
  options.step_size = 0.015;
  options.thin = 150;
  Rng rng(31);
  LangevinChain chain = langevin_sample(density, density.init_state, options, rng);
  std::vector<double> mcmc = column_of(chain.states, 0);
  REQUIRE(*std::min_element(mcmc.begin(), mcmc.end()) > 2.0);

  auto log_f = [](double t) {
    return t > 2.0 ? log_norm_pdf(t - 0.8) : -std::numeric_limits<double>::infinity();
  };
  Rng grid_rng(56);
  std::vector<double> ref = grid_draws(log_f, 2.0, 12.0, 20001, 50000, grid_rng);
  double ks = ks_two_sample(mcmc, ref);
  INFO("ks = " << ks);
  REQUIRE(ks < 0.03);
}

TEST_CASE("rejection oracle matches the marginalized threshold law") {
  ThresholdSession s = make_threshold_session(2.8, 0.4, 2.0, 1.0, 0.8);
  Rng rng(606);
  OracleResult oracle = rejection_oracle(s.dag.model, s.dag, rng, 20000);
  REQUIRE(oracle.proposals > 20000);

  Randomization G = gauss(1.0);
  auto log_f = [&](double t) { return marginal_log_density_threshold(t, 0.8, 2.0, G); };
  Rng grid_rng(57);
  std::vector<double> ref = grid_draws(log_f, -12.0, 14.0, 20001, 50000, grid_rng);
  double ks = ks_two_sample(column_of(oracle.data, 0), ref);
  INFO("ks = " << ks << ", acceptance rate = " << oracle.acceptance_rate());
  REQUIRE(ks < 0.016);
}

TEST_CASE("rejection oracle reports an exhausted budget") {
  ThresholdSession s = make_threshold_session(50.0, 0.5, 49.0, 1.0, 0.0);
  Rng rng(1);
  REQUIRE_THROWS_WITH(rejection_oracle(s.dag.model, s.dag, rng, 100, 20000),
                      Catch::Matchers::ContainsSubstring("acceptance rate"));
}

TEST_CASE("whitened regression draws are standard normal without selection") {
  // Query-free session: the oracle accepts everything, so its whitened target
  // draws must be iid N(w_ref, I).  Pins the whitening plumbing to raw
  // simulation, including a nonzero signal and two targets.
  Eigen::MatrixXd X = test_design(50, 3, 909);
  Eigen::VectorXd coef(3);
  coef << 0.8, -0.4, 0.0;
  Rng data_rng(4);
  Eigen::VectorXd y = X * coef + 0.7 * data_rng.normal_vec(50);

  Dag dag;
  dag.add_data_node(ShapeKind::matrix, X, "X");
  dag.add_data_node(ShapeKind::vector, y, "y");
  dag.model.family = "gaussian-regression";
  dag.model.noise_sd = 0.7;
  dag.model.coef = coef;
  dag.model.targets = {0, 1};

  Rng rng(777);
  OracleResult oracle = rejection_oracle(dag.model, dag, rng, 20000);
  REQUIRE(oracle.proposals == 20000);

  detail::RegressionPlumbing plumbing = detail::resolve_regression(dag, dag.model);
  Eigen::RowVectorXd mean = oracle.data.colwise().mean();
  REQUIRE(mean[0] == Approx(plumbing.w_ref[0]).margin(0.05));
  REQUIRE(mean[1] == Approx(plumbing.w_ref[1]).margin(0.05));
  Eigen::MatrixXd centered = oracle.data.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / (oracle.data.rows() - 1.0);
  REQUIRE(cov(0, 0) == Approx(1.0).margin(0.05));
  REQUIRE(cov(1, 1) == Approx(1.0).margin(0.05));
  REQUIRE(cov(0, 1) == Approx(0.0).margin(0.05));

  // theta_ref is the population value of the selected-model fit.
  REQUIRE((plumbing.chol * plumbing.w_ref).isApprox(plumbing.weights * (X * coef), 1e-10));
}

TEST_CASE("langevin matches the rejection oracle after screening") {
  RegressionSession s = make_screen_session(60, 4, 1.2, 1.0, 101);
  SelectiveDensity density = build_density(s.dag, s.dag.model);

  LangevinOptions options;
  options.steps = 1500000;
  options.step_size = 0.02;
  options.thin = 150;
  options.retain = Eigen::MatrixXd::Zero(1, density.total_dim());
  options.retain(0, 0) = 1.0;
  Rng rng(71);
  LangevinChain chain = langevin_sample(density, density.init_state, options, rng);
  std::vector<double> mcmc = column_of(chain.states, 0);

  Rng oracle_rng(72);
  OracleResult oracle = rejection_oracle(s.dag.model, s.dag, oracle_rng, 8000);
  INFO("oracle acceptance rate = " << oracle.acceptance_rate());
  double ks = ks_two_sample(mcmc, column_of(oracle.data, 0));
  INFO("ks = " << ks << " with " << mcmc.size() << " retained states");
  REQUIRE(ks < 0.03);
}

TEST_CASE("langevin matches the rejection oracle after a lasso") {
  RegressionSession s = make_lasso_session(80, 5, 14.0, 2.0, 202);
  SelectiveDensity density = build_density(s.dag, s.dag.model);

  LangevinOptions options;
  options.steps = 1500000;
  options.step_size = 0.02;
  options.thin = 150;
  options.retain = Eigen::MatrixXd::Zero(1, density.total_dim());
  options.retain(0, 0) = 1.0;
  Rng rng(81);
  LangevinChain chain = langevin_sample(density, density.init_state, options, rng);
  std::vector<double> mcmc = column_of(chain.states, 0);

  Rng oracle_rng(82);
  OracleResult oracle = rejection_oracle(s.dag.model, s.dag, oracle_rng, 8000);
  INFO("oracle acceptance rate = " << oracle.acceptance_rate());
  double ks = ks_two_sample(mcmc, column_of(oracle.data, 0));
  INFO("ks = " << ks << " with " << mcmc.size() << " retained states");
  REQUIRE(ks < 0.03);
}

TEST_CASE("clt decomposition removes the estimated component") {
  SECTION("population algebra") {
    Eigen::MatrixXd var(2, 2);
    var << 2.0, 0.3, 0.3, 1.0;
    Eigen::MatrixXd cov(3, 2);
    cov << 0.5, -0.2, 1.1, 0.7, 0.0, 0.4;
    Eigen::VectorXd T(3), theta(2);
    T << 1.0, -2.0, 0.5;
    theta << 0.3, 0.9;
    CltDecomposition d = clt_decompose(T, theta, cov, var);
    REQUIRE((cov - d.gamma * var).lpNorm<Eigen::Infinity>() < 1e-12);
    REQUIRE((T - (d.gamma * theta + d.nuisance)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SECTION("identity when T is the estimate") {
    Eigen::MatrixXd var(1, 1);
    var << 1.7;
    Eigen::VectorXd T(1), theta(1);
    T << 0.4;
    theta << 0.4;
    CltDecomposition d = clt_decompose(T, theta, var, var);
    REQUIRE(d.gamma(0, 0) == Approx(1.0));
    REQUIRE(d.nuisance[0] == Approx(0.0).margin(1e-14));
  }
  SECTION("shape and definiteness errors") {
    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 2);
    Eigen::VectorXd T = Eigen::VectorXd::Zero(3), theta = Eigen::VectorXd::Zero(2);
    REQUIRE_THROWS_AS(clt_decompose(T, theta, cov, var), std::invalid_argument);
    Eigen::MatrixXd bad_cov = Eigen::MatrixXd::Zero(3, 1);
    Eigen::MatrixXd good_var = Eigen::MatrixXd::Identity(2, 2);
    REQUIRE_THROWS_AS(clt_decompose(T, theta, bad_cov, good_var), std::invalid_argument);
  }
}

TEST_CASE("bootstrap clt decomposition decorrelates the nuisance") {
  // Correlated design, statistics S = X'y, targets = first two coefficients.
  // n large enough that the pairs-bootstrap covariance (a sandwich estimate,
  // O(n^{-1/2}) from the model covariance on any one dataset) pins gamma well.
  const Eigen::Index n = 1000, p = 5;
  Rng rng(4040);
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    double shared = rng.normal();
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = shared + rng.normal();  // pairwise corr 1/2
  }
  Eigen::VectorXd y = rng.normal_vec(n);

  Eigen::MatrixXd D = X.leftCols(2);
  Eigen::MatrixXd W = (D.transpose() * D).llt().solve(D.transpose());

  // Pairs bootstrap for the joint covariance of S = X'y and theta_hat = W y.
  const int B = 2000;
  Eigen::MatrixXd S_b(B, p), theta_b(B, 2);
  for (int b = 0; b < B; ++b) {
    Eigen::MatrixXd Xb(n, p);
    Eigen::VectorXd yb(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto r = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      Xb.row(i) = X.row(r);
      yb[i] = y[r];
    }
    Eigen::MatrixXd Db = Xb.leftCols(2);
    S_b.row(b) = (Xb.transpose() * yb).transpose();
    theta_b.row(b) = ((Db.transpose() * Db).llt().solve(Db.transpose() * yb)).transpose();
  }
  Eigen::RowVectorXd S_mean = S_b.colwise().mean();
  Eigen::RowVectorXd th_mean = theta_b.colwise().mean();
  Eigen::MatrixXd S_c = S_b.rowwise() - S_mean;
  Eigen::MatrixXd th_c = theta_b.rowwise() - th_mean;
  Eigen::MatrixXd cov = S_c.transpose() * th_c / (B - 1.0);
  Eigen::MatrixXd var = th_c.transpose() * th_c / (B - 1.0);

  CltDecomposition d = clt_decompose(X.transpose() * y, W * y, cov, var);

  // The bootstrap estimate should land near the analytic fixed-design value.
  Eigen::MatrixXd ww = W * W.transpose();
  Eigen::MatrixXd gamma_exact = ww.llt().solve(W * X).transpose();
  REQUIRE((d.gamma - gamma_exact).lpNorm<Eigen::Infinity>() <
          0.15 * (1.0 + gamma_exact.lpNorm<Eigen::Infinity>()));

  // Fresh replications: the nuisance with the frozen gamma is uncorrelated
  // with the target estimate.
  const int reps = 3000;
  Eigen::MatrixXd N_r(reps, p), th_r(reps, 2);
  for (int r = 0; r < reps; ++r) {
    Eigen::VectorXd yr = rng.normal_vec(n);
    Eigen::VectorXd th = W * yr;
    N_r.row(r) = (X.transpose() * yr - d.gamma * th).transpose();
    th_r.row(r) = th.transpose();
  }
  Eigen::RowVectorXd N_mean = N_r.colwise().mean();
  Eigen::RowVectorXd t_mean = th_r.colwise().mean();
  Eigen::MatrixXd N_c = N_r.rowwise() - N_mean;
  Eigen::MatrixXd t_c = th_r.rowwise() - t_mean;
  // The first two statistics are exact linear functions of the estimate, so
  // their nuisance is (numerically) nothing but bootstrap error: check it is
  // negligible next to the statistic's own spread.  The rest must decorrelate.
  for (Eigen::Index i = 0; i < 2; ++i) {
    double stat_sd = std::sqrt((X.col(i).squaredNorm()));  // sd of X_i'y under unit noise
    REQUIRE(N_c.col(i).norm() / std::sqrt(reps - 1.0) < 0.15 * stat_sd);
  }
  for (Eigen::Index i = 2; i < p; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      double corr = (N_c.col(i).dot(t_c.col(j))) /
                    (N_c.col(i).norm() * t_c.col(j).norm());
      REQUIRE(std::fabs(corr) < 0.1);
    }
  }
}

TEST_CASE("build_density rejects unusable sessions") {
  ThresholdSession ts = make_threshold_session(2.8, 0.4, 2.0, 1.0, 0.8);
  ModelSpec boot = ts.dag.model;
  boot.family = "empirical-bootstrap";
  REQUIRE_THROWS_AS(build_density(ts.dag, boot), std::invalid_argument);

  RegressionSession ss = make_screen_session(60, 4, 1.2, 1.0, 101);
  ModelSpec mean_model;
  mean_model.family = "gaussian-mean";
  REQUIRE_THROWS_AS(build_density(ss.dag, mean_model), std::invalid_argument);

  ModelSpec no_targets = ss.dag.model;
  no_targets.targets.clear();
  REQUIRE_THROWS_AS(build_density(ss.dag, no_targets), std::invalid_argument);

  ModelSpec bad_target = ss.dag.model;
  bad_target.targets = {99};
  REQUIRE_THROWS_AS(build_density(ss.dag, bad_target), std::invalid_argument);

  ModelSpec dup_target = ss.dag.model;
  dup_target.targets = {1, 1};
  REQUIRE_THROWS_AS(build_density(ss.dag, dup_target), std::invalid_argument);
}
