#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "inferactive/dag.hpp"
#include "inferactive/math/normal.hpp"
#include "inferactive/pivots/invert.hpp"
#include "inferactive/pivots/mle.hpp"
#include "inferactive/pivots/plugin.hpp"
#include "inferactive/pivots/report.hpp"
#include "inferactive/pivots/tg.hpp"
#include "inferactive/sampler/build.hpp"
#include "inferactive/sampler/langevin.hpp"

namespace inferactive {

// End-to-end inference on a recorded session: for each target, a pivot at the
// null, a two-sided p-value, a point estimate, and (optionally) a confidence
// interval, all under the distribution conditioned on every recorded outcome.
struct InferOptions {
  double level = 0.9;           // confidence level of the reported intervals
  double null_value = 0.0;      // null hypothesis for every target...
  Eigen::VectorXd null_values;  // ...or one per target (overrides null_value)
  std::string method = "auto";  // auto | tg | plugin | sampler
  long long steps = 30000;      // Langevin steps per chain (sampler paths)
  double step_size = 0.0;       // 0 = auto
  int chains = 2;               // parallel chains per sampling run
  long long thin = 5;
  std::uint64_t seed = 1;
  int grid_points = 401;        // pivot-inversion grid resolution
  double half_width_se = 8.0;   // inversion window: estimate +/- this many se
  double anchor_spread = 1.5;   // max standardized tilt distance per chain
  bool intervals = true;        // false: pivot at the null only (no inversion)
  std::vector<std::string> target_labels;  // optional display names, one per target

  void validate(std::size_t n_targets) const {
    if (!(level > 0.0 && level < 1.0))
      throw std::invalid_argument("infer: level must lie in (0, 1)");
    if (steps < 100) throw std::invalid_argument("infer: need at least 100 steps");
    if (chains < 1) throw std::invalid_argument("infer: need at least one chain");
    if (thin < 1) throw std::invalid_argument("infer: thin must be >= 1");
    if (grid_points < 3) throw std::invalid_argument("infer: need at least 3 grid points");
    if (!(half_width_se > 0.0)) throw std::invalid_argument("infer: window width must be positive");
    if (!(anchor_spread > 0.0)) throw std::invalid_argument("infer: anchor spread must be positive");
    if (method != "auto" && method != "tg" && method != "plugin" && method != "sampler")
      throw std::invalid_argument("infer: unknown method '" + method + "'");
    if (null_values.size() != 0 && static_cast<std::size_t>(null_values.size()) != n_targets)
      throw std::invalid_argument("infer: null_values must be empty or one per target");
  }
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined words; decorrelates sampling runs.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// P(T <= t | T in (lower, upper)) for T ~ N(m, 1), stable in either tail.
inline double truncated_gauss_pivot(double t, double m, double lower, double upper) {
  if (!(lower < upper))
    throw std::invalid_argument("truncated pivot: empty selection interval");
  if (!(t >= lower) || !(t <= upper))
    throw std::invalid_argument("truncated pivot: statistic outside the selection event");
  const bool lo_inf = !(lower > -std::numeric_limits<double>::infinity());
  const bool up_inf = !(upper < std::numeric_limits<double>::infinity());
  if (lo_inf && up_inf) return norm_cdf(t - m);
  if (!lo_inf && up_inf) return tg_pivot(t, m, lower);
  if (lo_inf)
    return std::clamp(std::exp(log_norm_cdf(t - m) - log_norm_cdf(upper - m)), 0.0, 1.0);
  if (t <= lower) return 0.0;
  if (t >= upper) return 1.0;
  const double num = log_norm_cdf_diff(lower - m, t - m);
  const double den = log_norm_cdf_diff(lower - m, upper - m);
  return std::clamp(std::exp(num - den), 0.0, 1.0);
}

// Pivot as a function of the hypothesized target value, estimated from a small
// set of anchored chains.  Each anchor holds draws sampled with the data mean
// set to the anchor's hypothesis; evaluating at a nearby hypothesis tilts the
// closest anchor by exponential reweighting, so one pass of sampling serves
// the whole inversion window.
struct TiltedPivotCurve {
  std::vector<double> anchor_g;           // anchor hypotheses, increasing
  std::vector<Eigen::VectorXd> stat;      // target-statistic draws per anchor
  std::vector<Eigen::VectorXd> tilt;      // tilt-functional draws per anchor
  double stat_obs = 0.0;
  double mc_se = 0.0;                     // Monte Carlo se of one evaluation, measured at cell edges

  // Tilted estimate from a single anchor's draws.
  double eval_at(std::size_t a, double g) const {
    const double dg = g - anchor_g[a];
    // log weight per draw: dg * u_i up to a constant that cancels in the ratio.
    Eigen::ArrayXd lw = dg * tilt[a].array();
    const double m = lw.maxCoeff();
    Eigen::ArrayXd w = (lw - m).exp();
    const double den = w.sum();
    double num = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (stat[a][i] <= stat_obs) num += w[i];
    // num and den accumulate in different orders; clamp away the last-ulp slip.
    return std::clamp(num / den, 0.0, 1.0);
  }

  // Between anchors the two bracketing estimates are blended linearly, which
  // keeps the curve continuous; independent-chain jumps at anchor switches
  // would otherwise defeat the monotonicity check during inversion.
  double operator()(double g) const {
    if (g <= anchor_g.front()) return eval_at(0, g);
    if (g >= anchor_g.back()) return eval_at(anchor_g.size() - 1, g);
    std::size_t hi = 1;
    while (anchor_g[hi] < g) ++hi;
    const std::size_t lo = hi - 1;
    const double span = anchor_g[hi] - anchor_g[lo];
    const double lam = span > 0.0 ? (g - anchor_g[lo]) / span : 0.0;
    return std::clamp((1.0 - lam) * eval_at(lo, g) + lam * eval_at(hi, g), 0.0, 1.0);
  }
};

// Sample the anchored chains behind a pivot curve.  The data mean is the
// affine path mean0 + g * dmean_dg; anchors are spaced so that no evaluation
// inside the window is more than `anchor_spread` standardized units from its
// chain.  window_halfwidth == 0 collapses to a single chain at g_center.
inline TiltedPivotCurve build_pivot_curve(const SelectiveDensity& base,
                                          const Eigen::VectorXd& mean0,
                                          const Eigen::VectorXd& dmean_dg, double g_center,
                                          double window_halfwidth,
                                          const Eigen::VectorXd& stat_fun, double stat_obs,
                                          const InferOptions& opts, std::uint64_t salt) {
  if (mean0.size() != base.data_dim() || dmean_dg.size() != base.data_dim() ||
      stat_fun.size() != base.data_dim())
    throw std::invalid_argument("pivot curve: functional dimension mismatch");

  // Curvature of -log density along the tilt path, per unit g.
  double quad = 0.0;
  for (Eigen::Index i = 0; i < base.data_dim(); ++i) {
    const double r = dmean_dg[i] / base.data_sd[i];
    quad += r * r;
  }
  if (!(quad > 0.0)) throw std::invalid_argument("pivot curve: tilt direction is degenerate");
  const double tilt_sd = 1.0 / std::sqrt(quad);

  int n_anchor = 1;
  if (window_halfwidth > 0.0) {
    const double spacing = 2.0 * opts.anchor_spread * tilt_sd;
    n_anchor = static_cast<int>(std::ceil(2.0 * window_halfwidth / spacing)) + 1;
    n_anchor = std::clamp(n_anchor, 1, 41);
  }

  TiltedPivotCurve curve;
  curve.stat_obs = stat_obs;
  curve.anchor_g.resize(static_cast<std::size_t>(n_anchor));
  if (n_anchor == 1) {
    curve.anchor_g[0] = g_center;
  } else {
    const double step = 2.0 * window_halfwidth / (n_anchor - 1);
    for (int a = 0; a < n_anchor; ++a)
      curve.anchor_g[static_cast<std::size_t>(a)] = g_center - window_halfwidth + step * a;
  }

  // Retained functionals: the target statistic and the tilt statistic
  //   u(w) = sum_i dmean_dg_i * w_i / sd_i^2,
  // the sufficient direction for mean shifts along the path.
  Eigen::MatrixXd retain = Eigen::MatrixXd::Zero(2, base.total_dim());
  retain.row(0).head(base.data_dim()) = stat_fun.transpose();
  for (Eigen::Index i = 0; i < base.data_dim(); ++i)
    retain(1, i) = dmean_dg[i] / (base.data_sd[i] * base.data_sd[i]);

  LangevinOptions lo;
  lo.steps = opts.steps;
  lo.step_size = opts.step_size;
  lo.thin = opts.thin;
  lo.retain = retain;

  curve.stat.resize(curve.anchor_g.size());
  curve.tilt.resize(curve.anchor_g.size());
  for (std::size_t a = 0; a < curve.anchor_g.size(); ++a) {
    SelectiveDensity density = base;
    density.data_mean = mean0 + curve.anchor_g[a] * dmean_dg;
    Eigen::MatrixXd merged = langevin_sample_parallel(
        density, density.init_state, opts.chains, lo,
        mix_seed(opts.seed, salt * 131 + a));
    curve.stat[a] = merged.col(0);
    curve.tilt[a] = merged.col(1);
  }

  // Batch-means se of the tilted ratio, measured per anchor at the anchor's
  // own hypothesis and at the edges of its cell (the worst tilt it serves).
  double worst_se = 0.0;
  const int n_batch = 32;
  for (std::size_t a = 0; a < curve.anchor_g.size(); ++a) {
    const Eigen::Index rows = curve.stat[a].size();
    if (rows < 2 * n_batch) continue;
    const Eigen::Index blen = rows / n_batch;
    std::vector<double> offsets = {0.0};
    if (a > 0) offsets.push_back(0.5 * (curve.anchor_g[a - 1] - curve.anchor_g[a]));
    if (a + 1 < curve.anchor_g.size())
      offsets.push_back(0.5 * (curve.anchor_g[a + 1] - curve.anchor_g[a]));
    for (double dg : offsets) {
      Eigen::ArrayXd lw = dg * curve.tilt[a].array();
      Eigen::ArrayXd w = (lw - lw.maxCoeff()).exp();
      std::vector<double> bm;
      bm.reserve(static_cast<std::size_t>(n_batch));
      for (int b = 0; b < n_batch; ++b) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index i = b * blen; i < (b + 1) * blen; ++i) {
          den += w[i];
          if (curve.stat[a][i] <= stat_obs) num += w[i];
        }
        if (den > 0.0) bm.push_back(num / den);
      }
      if (bm.size() < 2) continue;
      double mu = 0.0;
      for (double v : bm) mu += v;
      mu /= static_cast<double>(bm.size());
      double var = 0.0;
      for (double v : bm) var += (v - mu) * (v - mu);
      var /= static_cast<double>(bm.size() - 1);
      worst_se = std::max(worst_se, std::sqrt(var / static_cast<double>(bm.size())));
    }
  }
  curve.mc_se = worst_se;
  return curve;
}

// Turn a pivot curve into a full report: pivot and p-value at the null,
// median-unbiased estimate and level-(1-alpha) interval by inversion.
inline InferenceReport report_from_curve(const TiltedPivotCurve& curve, const std::string& label,
                                         const std::string& method, double g_obs, double se,
                                         double null_g, const InferOptions& opts) {
  InferenceReport rep;
  rep.target = label;
  rep.method = method;
  rep.seed = opts.seed;
  rep.level = opts.level;
  const double piv = std::clamp(curve(null_g), 0.0, 1.0);
  rep.pivot = piv;
  rep.p_value = two_sided_p(piv);
  rep.mc_se = curve.mc_se;
  rep.estimate = g_obs;
  if (opts.intervals) {
    InvertOptions io;
    io.grid_points = opts.grid_points;
    io.half_width_se = opts.half_width_se;
    io.mc_se = curve.mc_se;
    io.target = label;
    IntervalReport med = invert_pivot(curve, g_obs, se, 1.0, io);
    if (std::isfinite(med.lower)) rep.estimate = med.lower;
    IntervalReport ci = invert_pivot(curve, g_obs, se, 1.0 - opts.level, io);
    rep.lower = ci.lower;
    rep.upper = ci.upper;
  }
  return rep;
}

// Closed-form path for mean-model sessions whose recorded queries admit one:
// every query deterministic (truncated Gaussian) or a single held randomized
// threshold (randomized survivor pivot).
struct MeanSessionShape {
  double t_obs = 0.0;      // threshold-scale statistic
  double root_n = 1.0;     // t = root_n * mean estimate
  double sigma = 1.0;      // sd of t under the model
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool all_deterministic = true;
  bool single_held_randomized = false;
  double rand_tau = 0.0;
  Randomization rand_g;
};

inline MeanSessionShape mean_session_shape(const Dag& dag) {
  MeanPlumbing plumbing = resolve_mean(dag, dag.model);
  const Node& dn = dag.node(plumbing.stat_id);
  MeanSessionShape shape;
  shape.t_obs = threshold_statistic(dn, dn.values);
  shape.root_n =
      dn.shape == ShapeKind::vector ? std::sqrt(static_cast<double>(dn.values.rows())) : 1.0;
  shape.sigma = std::sqrt(dag.model.variance);

  int n_randomized = 0;
  for (int qid : dag.query_node_ids()) {
    const Node& qn = dag.node(qid);
    const ThresholdQuery& q = qn.threshold;
    if (q.randomization) {
      shape.all_deterministic = false;
      ++n_randomized;
      if (qn.outcome.event_held) {
        shape.single_held_randomized = true;
        shape.rand_tau = q.tau;
        shape.rand_g = *q.randomization;
      } else {
        shape.single_held_randomized = false;
      }
    } else {
      if (qn.outcome.event_held)
        shape.lower = std::max(shape.lower, q.tau);
      else
        shape.upper = std::min(shape.upper, q.tau);
    }
  }
  if (n_randomized != 1) shape.single_held_randomized = false;
  const bool unconstrained_interval = !(shape.lower > -std::numeric_limits<double>::infinity()) &&
                                      !(shape.upper < std::numeric_limits<double>::infinity());
  if (!unconstrained_interval) shape.single_held_randomized = false;
  return shape;
}

inline std::vector<InferenceReport> infer_mean(const Dag& dag, const InferOptions& opts) {
  const ModelSpec& model = dag.model;
  MeanSessionShape shape = mean_session_shape(dag);
  const double sigma = shape.sigma;
  const double root_n = shape.root_n;
  const double mean_obs = shape.t_obs / root_n;
  const double se = sigma / root_n;
  const double null_g = opts.null_values.size() == 1 ? opts.null_values[0] : opts.null_value;
  const std::string label =
      !opts.target_labels.empty() ? opts.target_labels.front() : std::string("mean");

  std::string method = opts.method;
  if (method == "auto") {
    if (shape.all_deterministic)
      method = "tg";
    else if (shape.single_held_randomized)
      method = "plugin";
    else
      method = "sampler";
  }
  if (method == "tg" && !shape.all_deterministic)
    throw std::invalid_argument(
        "infer: the tg method needs non-randomized threshold queries; use plugin or sampler");
  if (method == "plugin" && !shape.single_held_randomized)
    throw std::invalid_argument(
        "infer: the plugin method needs a single held randomized threshold; use sampler");

  if (method == "sampler") {
    SelectiveDensity base = build_density(dag, model);
    Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd dvec = Eigen::VectorXd::Constant(1, root_n);
    Eigen::VectorXd stat_fun = Eigen::VectorXd::Ones(1);
    const double window = opts.intervals ? opts.half_width_se * se : 0.0;
    const double center = opts.intervals ? mean_obs : null_g;
    TiltedPivotCurve curve =
        build_pivot_curve(base, mean0, dvec, center, window, stat_fun, shape.t_obs, opts, 0);
    std::vector<InferenceReport> out;
    out.push_back(report_from_curve(curve, label, "sampler", mean_obs, se, null_g, opts));
    return out;
  }

  // Closed forms, expressed on the unit-sd scale t' = t / sigma ~ N(root_n * mu / sigma, 1).
  const double t_s = shape.t_obs / sigma;
  auto pivot_at = [&](double mu) {
    const double m_s = root_n * mu / sigma;
    if (method == "tg")
      return truncated_gauss_pivot(t_s, m_s, shape.lower / sigma, shape.upper / sigma);
    Randomization g_s = shape.rand_g;
    g_s.scale /= sigma;
    return plugin_randomized_pivot(t_s, m_s, shape.rand_tau / sigma, g_s, PluginMethod::grid)
        .pivot;
  };

  InferenceReport rep;
  rep.target = label;
  rep.method = method == "tg" ? "tg" : "plugin-randomized";
  rep.seed = opts.seed;
  rep.level = opts.level;
  rep.pivot = std::clamp(pivot_at(null_g), 0.0, 1.0);
  rep.p_value = two_sided_p(rep.pivot);
  rep.mc_se = 0.0;

  // Point estimate: the exact conditional maximum likelihood when the event is
  // one-sided with Gaussian (or no) randomization, the pivot median otherwise.
  bool have_mle = false;
  if (method == "tg" && shape.upper == std::numeric_limits<double>::infinity() &&
      shape.lower > -std::numeric_limits<double>::infinity()) {
    rep.estimate =
        sigma * selective_mle(t_s / root_n, root_n * root_n, shape.lower / sigma, 0.0);
    have_mle = true;
  } else if (method == "plugin" && shape.rand_g.family == RandomizationFamily::gaussian) {
    rep.estimate = sigma * selective_mle(t_s / root_n, root_n * root_n, shape.rand_tau / sigma,
                                         shape.rand_g.scale / sigma);
    have_mle = true;
  }

  InvertOptions io;
  io.grid_points = opts.grid_points;
  io.half_width_se = opts.half_width_se;
  io.target = label;
  if (!have_mle) {
    IntervalReport med = invert_pivot(pivot_at, mean_obs, se, 1.0, io);
    rep.estimate = std::isfinite(med.lower) ? med.lower : mean_obs;
  }
  if (opts.intervals) {
    IntervalReport ci = invert_pivot(pivot_at, mean_obs, se, 1.0 - opts.level, io);
    rep.lower = ci.lower;
    rep.upper = ci.upper;
  }
  return {rep};
}

inline std::vector<InferenceReport> infer_regression(const Dag& dag, const InferOptions& opts) {
  const ModelSpec& model = dag.model;
  if (opts.method == "tg" || opts.method == "plugin")
    throw std::invalid_argument("infer: method '" + opts.method +
                                "' applies to mean-model sessions; regression targets use the "
                                "sampler");
  RegressionPlumbing plumbing = resolve_regression(dag, model);
  SelectiveDensity base = build_regression_density(dag, model);
  const Eigen::VectorXd y = dag.node(plumbing.y_id).values.col(0);
  const Eigen::VectorXd theta_obs = plumbing.weights * y;
  const Eigen::VectorXd w_obs = plumbing.whiten(theta_obs);
  const auto k = theta_obs.size();

  std::vector<InferenceReport> out;
  for (Eigen::Index r = 0; r < k; ++r) {
    const Eigen::VectorXd colj = plumbing.chol_inv.col(r);
    const Eigen::VectorXd mean0 = w_obs - theta_obs[r] * colj;
    const Eigen::VectorXd stat_fun = plumbing.chol.row(r).transpose();
    const double se = plumbing.chol.row(r).norm();
    const double g_obs = theta_obs[r];
    const double null_g =
        opts.null_values.size() == k ? opts.null_values[r] : opts.null_value;
    const double window = opts.intervals ? opts.half_width_se * se : 0.0;
    const double center = opts.intervals ? g_obs : null_g;
    std::string label;
    if (!opts.target_labels.empty()) {
      label = opts.target_labels[static_cast<std::size_t>(r)];
    } else {
      label = "coef[" + std::to_string(model.targets[static_cast<std::size_t>(r)]) + "]";
    }
    TiltedPivotCurve curve =
        build_pivot_curve(base, mean0, colj, center, window, stat_fun, g_obs, opts,
                          static_cast<std::uint64_t>(r) + 1);
    out.push_back(report_from_curve(curve, label, "sampler", g_obs, se, null_g, opts));
  }
  return out;
}

}  // namespace detail

// Run selective inference on every target the session's model declares.
// Mean-model sessions use closed forms when the recorded queries admit them
// (or when forced via opts.method); everything else runs anchored Langevin
// chains and inverts the tilted pivot curve.
inline std::vector<InferenceReport> run_inference(const Dag& dag, const InferOptions& opts = {}) {
  dag.validate();
  const ModelSpec& model = dag.model;
  if (model.family == "empirical-bootstrap")
    throw std::invalid_argument(
        "run_inference: bootstrap sessions use the resampling pivots directly");
  const std::size_t n_targets =
      model.family == "gaussian-mean" ? 1 : model.targets.size();
  opts.validate(n_targets);
  if (!opts.target_labels.empty() && opts.target_labels.size() != n_targets)
    throw std::invalid_argument("infer: target_labels must be empty or one per target");
  if (model.family == "gaussian-mean") return detail::infer_mean(dag, opts);
  return detail::infer_regression(dag, opts);
}

}  // namespace inferactive
