#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "inferactive/math/normal.hpp"
#include "inferactive/randomization.hpp"

namespace inferactive {

// One recorded query's optimization-variable block.  The reconstruction map is
// affine in the sampled state,
//   omega = a_data * t + a_v * v + b,
// where t is the data block and v are this block's optimization variables.
// The volume element of the change of variables (t, omega) -> (t, v) is
// constant once the query outcome is fixed, so it enters as a single additive
// log term.
struct OptBlock {
  std::string label;       // used in error messages
  Eigen::MatrixXd a_data;  // p_omega x data_dim
  Eigen::MatrixXd a_v;     // p_omega x dim()
  Eigen::VectorXd b;       // p_omega
  Randomization randomization{RandomizationFamily::gaussian, 1.0};
  double log_jacobian = 0.0;
  // In-place Euclidean projection of v onto the closure of the block support
  // (with a small interior margin); must be idempotent and exact for
  // in-support inputs.
  std::function<void(Eigen::VectorXd&)> project;

  Eigen::Index dim() const { return a_v.cols(); }

  Eigen::VectorXd omega(const Eigen::VectorXd& t, const Eigen::VectorXd& v) const {
    return a_data * t + a_v * v + b;
  }

  void validate() const {
    if (a_data.rows() != a_v.rows() || a_data.rows() != b.size())
      throw std::invalid_argument("opt block '" + label + "': inconsistent map dimensions");
    if (!a_data.allFinite() || !a_v.allFinite() || !b.allFinite() || !std::isfinite(log_jacobian))
      throw std::invalid_argument("opt block '" + label + "': non-finite map entries");
    if (!project) throw std::invalid_argument("opt block '" + label + "': missing projector");
  }
};

// Joint density over the packed state x = [t; v_1; ...; v_k]: a Gaussian
// reference on the data block t times, per query block, the randomization
// density evaluated at the reconstructed noise, times the constant volume
// element.  Support is the product of the block supports (handled purely by
// projection); evaluation off the support returns -inf.
struct SelectiveDensity {
  Eigen::VectorXd data_mean;
  Eigen::VectorXd data_sd;  // independent coordinates, all > 0
  // Deterministic selection events restrict the data block directly (e.g. a
  // hard threshold on the statistic); identity when absent.
  std::function<void(Eigen::VectorXd&)> project_data;
  std::vector<OptBlock> blocks;

  // Per-coordinate sampling scales (a diagonal metric): Langevin moves
  // coordinate i with step eta * scale_i^2 and noise sqrt(2 eta) * scale_i.
  // Filled by the builder; ones when empty.
  Eigen::VectorXd precond_scale;

  // A feasible starting state assembled from the observed data and the
  // recorded optimization variables.
  Eigen::VectorXd init_state;

  Eigen::Index data_dim() const { return data_mean.size(); }

  Eigen::Index total_dim() const {
    Eigen::Index d = data_dim();
    for (const auto& blk : blocks) d += blk.dim();
    return d;
  }

  Eigen::Index block_offset(std::size_t j) const {
    Eigen::Index off = data_dim();
    for (std::size_t i = 0; i < j; ++i) off += blocks[i].dim();
    return off;
  }

  void validate() const {
    if (data_mean.size() == 0) throw std::invalid_argument("selective density: empty data block");
    if (data_sd.size() != data_mean.size())
      throw std::invalid_argument("selective density: data mean/sd size mismatch");
    for (Eigen::Index i = 0; i < data_sd.size(); ++i)
      if (!(data_sd[i] > 0.0))
        throw std::invalid_argument("selective density: data sd must be positive");
    for (const auto& blk : blocks) {
      blk.validate();
      if (blk.a_data.cols() != data_dim())
        throw std::invalid_argument("opt block '" + blk.label + "': data map width mismatch");
    }
    if (precond_scale.size() != 0 && precond_scale.size() != total_dim())
      throw std::invalid_argument("selective density: preconditioner size mismatch");
    if (init_state.size() != 0 && init_state.size() != total_dim())
      throw std::invalid_argument("selective density: init state size mismatch");
  }

  Eigen::VectorXd scales() const {
    if (precond_scale.size() != 0) return precond_scale;
    return Eigen::VectorXd::Ones(total_dim());
  }

  // Blockwise projection onto the support closure.  Exact fixed point for
  // in-support states, hence idempotent.
  Eigen::VectorXd project(Eigen::VectorXd x) const {
    check_size(x);
    if (project_data) {
      Eigen::VectorXd t = x.head(data_dim());
      project_data(t);
      x.head(data_dim()) = t;
    }
    Eigen::Index off = data_dim();
    for (const auto& blk : blocks) {
      Eigen::VectorXd v = x.segment(off, blk.dim());
      blk.project(v);
      x.segment(off, blk.dim()) = v;
      off += blk.dim();
    }
    return x;
  }

  bool in_support(const Eigen::VectorXd& x) const {
    if (!x.allFinite()) return false;
    Eigen::VectorXd p = project(x);
    return (p.array() == x.array()).all();
  }

  double log_density(const Eigen::VectorXd& x) const {
    check_size(x);
    if (!in_support(x)) return -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (Eigen::Index i = 0; i < data_dim(); ++i)
      total += log_norm_pdf((x[i] - data_mean[i]) / data_sd[i]) - std::log(data_sd[i]);
    Eigen::VectorXd t = x.head(data_dim());
    Eigen::Index off = data_dim();
    for (const auto& blk : blocks) {
      Eigen::VectorXd omega = blk.omega(t, x.segment(off, blk.dim()));
      total += blk.randomization.log_density(omega) + blk.log_jacobian;
      off += blk.dim();
    }
    return total;
  }

  // Gradient of the smooth part (reference Gaussian and randomization terms);
  // the support enters through projection only, never through the gradient.
  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& x) const {
    check_size(x);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
    for (Eigen::Index i = 0; i < data_dim(); ++i)
      grad[i] = -(x[i] - data_mean[i]) / (data_sd[i] * data_sd[i]);
    Eigen::VectorXd t = x.head(data_dim());
    Eigen::Index off = data_dim();
    for (const auto& blk : blocks) {
      Eigen::VectorXd omega = blk.omega(t, x.segment(off, blk.dim()));
      Eigen::VectorXd g = blk.randomization.grad_log_density(omega);
      grad.head(data_dim()) += blk.a_data.transpose() * g;
      grad.segment(off, blk.dim()) += blk.a_v.transpose() * g;
      off += blk.dim();
    }
    return grad;
  }

 private:
  void check_size(const Eigen::VectorXd& x) const {
    if (x.size() != total_dim())
      throw std::invalid_argument("selective density: state has dimension " +
                                  std::to_string(x.size()) + ", expected " +
                                  std::to_string(total_dim()));
  }
};

}  // namespace inferactive
