#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "inferactive/data/dataset.hpp"
#include "inferactive/math/rng.hpp"

namespace inferactive {

struct SyntheticData {
  Dataset dataset;
  Eigen::VectorXd beta;  // true coefficients aligned with dataset columns
};

// Gaussian design with equicorrelated columns (correlation rho), sparse linear
// signal on the first s coordinates, y = X beta + noise_sd * eps.
inline SyntheticData gen_synthetic(Eigen::Index n, Eigen::Index p, Eigen::Index s,
                                   double amplitude, double noise_sd, double rho,
                                   std::uint64_t seed) {
  if (n < 2 || p < 1) throw std::invalid_argument("gen_synthetic: need n >= 2, p >= 1");
  if (s < 0 || s > p) throw std::invalid_argument("gen_synthetic: need 0 <= s <= p");
  if (rho < 0.0 || rho >= 1.0) throw std::invalid_argument("gen_synthetic: need rho in [0,1)");
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("gen_synthetic: noise sd must be >= 0");

  Rng rng(seed);
  SyntheticData out;
  out.dataset.X.resize(n, p);
  const double a = std::sqrt(1.0 - rho);
  const double b = std::sqrt(rho);
  for (Eigen::Index i = 0; i < n; ++i) {
    double shared = b * rng.normal();
    for (Eigen::Index j = 0; j < p; ++j)
      out.dataset.X(i, j) = a * rng.normal() + shared;
  }
  out.beta = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < s; ++j) out.beta[j] = amplitude;
  out.dataset.y = out.dataset.X * out.beta;
  for (Eigen::Index i = 0; i < n; ++i) out.dataset.y[i] += noise_sd * rng.normal();
  out.dataset.names.reserve(p);
  for (Eigen::Index j = 0; j < p; ++j)
    out.dataset.names.push_back("x" + std::to_string(j + 1));
  out.dataset.validate();
  return out;
}

// Binary mutation-style design: X_ij ~ Bernoulli(prevalence_j) independently,
// rare columns (10 or fewer ones) dropped, linear effects on the surviving
// columns with unit Gaussian noise.
inline SyntheticData gen_binary_mutations(Eigen::Index n,
                                          const std::vector<double>& prevalences,
                                          const std::vector<double>& effects,
                                          std::uint64_t seed) {
  const auto p = static_cast<Eigen::Index>(prevalences.size());
  if (n < 2 || p < 1)
    throw std::invalid_argument("gen_binary_mutations: need n >= 2 and at least one column");
  if (effects.size() != prevalences.size())
    throw std::invalid_argument("gen_binary_mutations: one effect per column required");
  for (double q : prevalences)
    if (!(q > 0.0 && q < 1.0))
      throw std::invalid_argument("gen_binary_mutations: prevalences must lie in (0,1)");

  Rng rng(seed);
  Eigen::MatrixXd X_full(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      X_full(i, j) = rng.uniform() <= prevalences[j] ? 1.0 : 0.0;

  // Mirror the rare-variant filter: keep only columns seen more than 10 times.
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < p; ++j)
    if (X_full.col(j).sum() > 10.0) kept.push_back(j);
  if (kept.empty())
    throw std::runtime_error("gen_binary_mutations: all columns dropped by the rare filter");

  SyntheticData out;
  out.dataset.X.resize(n, static_cast<Eigen::Index>(kept.size()));
  out.beta.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    out.dataset.X.col(static_cast<Eigen::Index>(k)) = X_full.col(kept[k]);
    out.beta[static_cast<Eigen::Index>(k)] = effects[static_cast<std::size_t>(kept[k])];
    out.dataset.names.push_back("m" + std::to_string(kept[k] + 1));
  }
  out.dataset.y = out.dataset.X * out.beta;
  for (Eigen::Index i = 0; i < n; ++i) out.dataset.y[i] += rng.normal();
  out.dataset.validate();
  return out;
}

}  // namespace inferactive
