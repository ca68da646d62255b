#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "inferactive/math/parallel.hpp"
#include "inferactive/math/rng.hpp"
#include "inferactive/sampler/density.hpp"

namespace inferactive {

struct LangevinOptions {
  long long steps = 50000;
  // <= 0 selects the default eta = 0.5 / sqrt(d + ||grad||^2) at the start
  // state, with the gradient measured in the preconditioned metric.
  double step_size = 0.0;
  double burn_in_fraction = 0.2;
  long long thin = 1;
  // A NaN state or gradient halves the step size and restarts, this many times
  // before giving up.
  int max_step_halvings = 8;
  // Optional linear functional of the state recorded per retained step instead
  // of the full state (rows of `retain` times the state).  Keeps memory flat
  // when only a low-dimensional summary is needed.
  Eigen::MatrixXd retain;
};

struct LangevinChain {
  Eigen::MatrixXd states;  // one retained state (or retained functional) per row
  double step_size = 0.0;  // step size actually used after any halvings
  long long steps = 0;     // steps taken in the successful pass
};

// Unadjusted Langevin with reflection at the support boundary:
//   raw  = x + eta D^2 grad + sqrt(2 eta) D xi
//   x    = Project(2 Project(raw) - raw)
// with D the density's diagonal scale.  All support projectors are
// per-coordinate clamps, so 2 Project(raw) - raw mirrors an out-of-support
// proposal back across the wall it crossed (in-support proposals are returned
// unchanged); reflection avoids the boundary atom a plain clamp would create.
// The outer projection only catches jumps so large that the mirror image
// overshoots the far wall of an interval.  Burn-in is discarded inside; the
// returned rows are the post-burn-in states, thinned.
inline LangevinChain langevin_sample(const SelectiveDensity& density, const Eigen::VectorXd& init,
                                     const LangevinOptions& options, Rng& rng) {
  density.validate();
  if (options.steps <= 0) throw std::invalid_argument("langevin: steps must be positive");
  if (options.thin <= 0) throw std::invalid_argument("langevin: thin must be positive");
  if (!(options.burn_in_fraction >= 0.0 && options.burn_in_fraction < 1.0))
    throw std::invalid_argument("langevin: burn-in fraction must lie in [0, 1)");
  if (!init.allFinite() || init.size() != density.total_dim())
    throw std::invalid_argument("langevin: init state is not projectable");
  if (options.retain.size() != 0 && options.retain.cols() != density.total_dim())
    throw std::invalid_argument("langevin: retain functional width mismatch");

  const Eigen::Index d = density.total_dim();
  const Eigen::VectorXd scale = density.scales();
  const Eigen::VectorXd scale_sq = scale.cwiseProduct(scale);
  const Eigen::VectorXd x0 = density.project(init);

  double eta = options.step_size;
  if (eta <= 0.0) {
    double g = (scale.cwiseProduct(density.grad_log_density(x0))).norm();
    eta = 0.5 / std::sqrt(static_cast<double>(d) + g * g);
  }

  const long long burn = static_cast<long long>(options.burn_in_fraction *
                                                static_cast<double>(options.steps));
  const long long retained = (options.steps - burn + options.thin - 1) / options.thin;
  const Eigen::Index out_width = options.retain.size() != 0 ? options.retain.rows() : d;

  LangevinChain chain;
  chain.states.resize(retained, out_width);

  for (int attempt = 0; attempt <= options.max_step_halvings; ++attempt) {
    Eigen::VectorXd x = x0;
    bool diverged = false;
    long long row = 0;
    for (long long step = 0; step < options.steps; ++step) {
      Eigen::VectorXd grad = density.grad_log_density(x);
      if (!grad.allFinite()) {
        diverged = true;
        break;
      }
      Eigen::VectorXd noise = rng.normal_vec(d);
      x += eta * scale_sq.cwiseProduct(grad) +
           std::sqrt(2.0 * eta) * scale.cwiseProduct(noise);
      x = density.project(2.0 * density.project(x) - x);
      if (!x.allFinite()) {
        diverged = true;
        break;
      }
      if (step >= burn && (step - burn) % options.thin == 0) {
        if (options.retain.size() != 0)
          chain.states.row(row++) = (options.retain * x).transpose();
        else
          chain.states.row(row++) = x.transpose();
      }
    }
    if (!diverged) {
      chain.step_size = eta;
      chain.steps = options.steps;
      return chain;
    }
    eta *= 0.5;
  }

  std::ostringstream msg;
  msg << "langevin: chain diverged (non-finite state or gradient) even after " <<
      options.max_step_halvings << " step halvings; start state [";
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(x0.size(), 8); ++i)
    msg << (i ? ", " : "") << x0[i];
  if (x0.size() > 8) msg << ", ...";
  msg << "]";
  throw std::runtime_error(msg.str());
}

// Convenience overload taking the two knobs callers usually touch.
inline LangevinChain langevin_sample(const SelectiveDensity& density, const Eigen::VectorXd& init,
                                     long long steps, double step_size, Rng& rng) {
  LangevinOptions options;
  options.steps = steps;
  options.step_size = step_size;
  return langevin_sample(density, init, options, rng);
}

// Several independent chains with per-chain substreams, merged in chain order:
// the result depends only on (seed, options), never on the thread count.
inline Eigen::MatrixXd langevin_sample_parallel(const SelectiveDensity& density,
                                                const Eigen::VectorXd& init, int n_chains,
                                                const LangevinOptions& options,
                                                std::uint64_t seed) {
  if (n_chains <= 0) throw std::invalid_argument("langevin: need at least one chain");
  std::vector<LangevinChain> chains(static_cast<std::size_t>(n_chains));
  parallel_for(n_chains, [&](int c) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(c));
    chains[static_cast<std::size_t>(c)] = langevin_sample(density, init, options, rng);
  });
  const Eigen::Index rows_each = chains[0].states.rows();
  Eigen::MatrixXd merged(rows_each * n_chains, chains[0].states.cols());
  for (int c = 0; c < n_chains; ++c)
    merged.middleRows(rows_each * c, rows_each) = chains[static_cast<std::size_t>(c)].states;
  return merged;
}

}  // namespace inferactive
