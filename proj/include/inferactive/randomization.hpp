#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "inferactive/math/normal.hpp"
#include "inferactive/math/rng.hpp"

namespace inferactive {

enum class RandomizationFamily { gaussian, laplace, logistic };

inline double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

// Smooth noise added to selection statistics.  Coordinates are iid with a
// common scale; densities, gradients and tail probabilities are exact so the
// same object serves sampling, reweighting and selection-probability terms.
struct Randomization {
  RandomizationFamily family = RandomizationFamily::gaussian;
  double scale = 1.0;

  Randomization() = default;
  Randomization(RandomizationFamily f, double s) : family(f), scale(s) {
    if (!(scale > 0.0)) throw std::invalid_argument("randomization scale must be positive");
  }

  double log_density1(double w) const {
    switch (family) {
      case RandomizationFamily::gaussian: {
        double z = w / scale;
        return -0.5 * z * z - log_sqrt_2pi - std::log(scale);
      }
      case RandomizationFamily::laplace:
        return -std::fabs(w) / scale - std::log(2.0 * scale);
      case RandomizationFamily::logistic: {
        double z = w / scale;
        return -z - 2.0 * softplus(-z) - std::log(scale);
      }
    }
    throw std::logic_error("unreachable");
  }

  double grad_log_density1(double w) const {
    switch (family) {
      case RandomizationFamily::gaussian:
        return -w / (scale * scale);
      case RandomizationFamily::laplace:
        // Subgradient 0 at the kink.
        return w == 0.0 ? 0.0 : (w > 0.0 ? -1.0 / scale : 1.0 / scale);
      case RandomizationFamily::logistic:
        return -std::tanh(w / (2.0 * scale)) / scale;
    }
    throw std::logic_error("unreachable");
  }

  double log_density(const Eigen::VectorXd& w) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) s += log_density1(w[i]);
    return s;
  }

  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& w) const {
    Eigen::VectorXd g(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) g[i] = grad_log_density1(w[i]);
    return g;
  }

  double cdf(double w) const {
    switch (family) {
      case RandomizationFamily::gaussian:
        return norm_cdf(w / scale);
      case RandomizationFamily::laplace:
        return w < 0.0 ? 0.5 * std::exp(w / scale) : 1.0 - 0.5 * std::exp(-w / scale);
      case RandomizationFamily::logistic:
        return 1.0 / (1.0 + std::exp(-w / scale));
    }
    throw std::logic_error("unreachable");
  }

  // log P(omega > w), stable in both tails.
  double log_sf(double w) const {
    switch (family) {
      case RandomizationFamily::gaussian:
        return log_norm_sf(w / scale);
      case RandomizationFamily::laplace:
        return w >= 0.0 ? -w / scale - std::log(2.0)
                        : std::log1p(-0.5 * std::exp(w / scale));
      case RandomizationFamily::logistic:
        return -softplus(w / scale);
    }
    throw std::logic_error("unreachable");
  }

  // log P(omega <= w); all three families are symmetric about zero.
  double log_cdf(double w) const { return log_sf(-w); }

  // log P(a < omega <= b), stable when both endpoints sit in the same tail.
  double log_cdf_diff(double a, double b) const {
    if (!(a < b)) throw std::invalid_argument("log_cdf_diff: requires a < b");
    if (a + b >= 0.0) {
      // Work in the upper tail: P = sf(a) - sf(b).
      double la = log_sf(a), lb = log_sf(b);
      if (lb >= la) return -std::numeric_limits<double>::infinity();  // tails too deep to resolve
      return la + log1mexp(lb - la);
    }
    double la = log_cdf(a), lb = log_cdf(b);
    if (la >= lb) return -std::numeric_limits<double>::infinity();
    return lb + log1mexp(la - lb);
  }

  double sample1(Rng& rng) const {
    switch (family) {
      case RandomizationFamily::gaussian:
        return scale * rng.normal();
      case RandomizationFamily::laplace:
        return rng.laplace(scale);
      case RandomizationFamily::logistic:
        return rng.logistic(scale);
    }
    throw std::logic_error("unreachable");
  }

  Eigen::VectorXd sample(Eigen::Index dim, Rng& rng) const {
    Eigen::VectorXd w(dim);
    for (Eigen::Index i = 0; i < dim; ++i) w[i] = sample1(rng);
    return w;
  }
};

inline std::string family_name(RandomizationFamily f) {
  switch (f) {
    case RandomizationFamily::gaussian: return "gaussian";
    case RandomizationFamily::laplace: return "laplace";
    case RandomizationFamily::logistic: return "logistic";
  }
  throw std::logic_error("unreachable");
}

// Parse "family:scale", e.g. "gaussian:1.0" or "laplace:0.7".
inline Randomization parse_randomization(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("randomization must look like family:scale, got '" + text + "'");
  std::string name = text.substr(0, colon);
  RandomizationFamily family;
  if (name == "gaussian")
    family = RandomizationFamily::gaussian;
  else if (name == "laplace")
    family = RandomizationFamily::laplace;
  else if (name == "logistic")
    family = RandomizationFamily::logistic;
  else
    throw std::invalid_argument("unknown randomization family '" + name +
                                "' (expected gaussian, laplace or logistic)");
  std::size_t used = 0;
  double scale = 0.0;
  try {
    scale = std::stod(text.substr(colon + 1), &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("could not parse randomization scale in '" + text + "'");
  }
  if (used != text.size() - colon - 1)
    throw std::invalid_argument("trailing characters in randomization scale '" + text + "'");
  if (!(scale > 0.0)) throw std::invalid_argument("randomization scale must be positive");
  return Randomization(family, scale);
}

inline std::string format_randomization(const Randomization& r) {
  std::string s = std::to_string(r.scale);
  // Trim trailing zeros that std::to_string pads with.
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return family_name(r.family) + ":" + s;
}

// Default noise scale for regression-type selection statistics:
// half the residual scale times the root-mean-square column norm of X.
inline double default_regression_scale(const Eigen::MatrixXd& X, double sigma_hat) {
  if (X.size() == 0) throw std::invalid_argument("default_regression_scale: empty design");
  double mean_diag = X.colwise().squaredNorm().mean();
  return 0.5 * sigma_hat * std::sqrt(mean_diag);
}

}  // namespace inferactive
