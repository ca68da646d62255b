#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace inferactive {

struct TiltedChain {
  Eigen::VectorXd weights;  // self-normalizing; scaled so the largest is 1
  double ess = 0.0;         // effective sample size (sum w)^2 / sum w^2
};

// Reweights draws of the latent statistic sampled under mean m0 to the law
// under mean m.  The Gaussian reference factor is the only term that moves
// with the mean, so the density ratio is exp((m - m0) t - (m^2 - m0^2)/2);
// the selection factors cancel exactly.  Weights are rescaled by their
// maximum (ratios are all that matter downstream), and a collapsed effective
// sample size is reported as an error rather than silently degrading.
inline TiltedChain tilt_reweight(const Eigen::VectorXd& data_coord, double m0, double m,
                                 double min_ess = 50.0) {
  if (data_coord.size() == 0) throw std::invalid_argument("tilt_reweight: empty chain");
  TiltedChain out;
  Eigen::ArrayXd loge = (m - m0) * data_coord.array() - 0.5 * (m * m - m0 * m0);
  double mx = loge.maxCoeff();
  out.weights = (loge - mx).exp().matrix();
  double sw = out.weights.sum();
  out.ess = sw * sw / out.weights.squaredNorm();
  if (!(out.ess >= min_ess))
    throw std::runtime_error(
        "tilt_reweight: effective sample size " + std::to_string(out.ess) +
        " below " + std::to_string(min_ess) +
        "; rerun the chain at a reference mean closer to the requested one");
  return out;
}

// Weighted fraction of the chain at or below t under the tilted law.
inline double tilted_cdf(const Eigen::VectorXd& data_coord, const Eigen::VectorXd& weights,
                         double t) {
  if (data_coord.size() != weights.size())
    throw std::invalid_argument("tilted_cdf: chain/weight length mismatch");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < data_coord.size(); ++i) {
    den += weights[i];
    if (data_coord[i] <= t) num += weights[i];
  }
  if (!(den > 0.0)) throw std::runtime_error("tilted_cdf: total weight underflow");
  return num / den;
}

}  // namespace inferactive
