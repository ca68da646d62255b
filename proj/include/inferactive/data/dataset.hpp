#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace inferactive {

// Centering/scaling applied to design columns: standardized = (raw - center) / scale.
struct Standardization {
  bool applied = false;
  Eigen::VectorXd center;  // per-column mean removed
  Eigen::VectorXd scale;   // per-column divisor, chosen so each column has norm sqrt(n)
};

// Immutable after construction; all pipeline stages share it by const reference.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> names;  // one per column of X
  std::string response_name = "y";
  Standardization standardization;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }

  void validate() const {
    if (X.rows() != y.size()) throw std::invalid_argument("dataset: X rows and y length differ");
    if (static_cast<Eigen::Index>(names.size()) != X.cols())
      throw std::invalid_argument("dataset: one name per column required");
    if (X.rows() < 2) throw std::invalid_argument("dataset: need n >= 2");
    if (!X.allFinite() || !y.allFinite())
      throw std::invalid_argument("dataset: non-finite values");
    std::set<std::string> seen(names.begin(), names.end());
    if (seen.size() != names.size())
      throw std::invalid_argument("dataset: duplicate column names");
  }
};

// Center each column to mean 0 and scale to norm sqrt(n), so that for unit
// noise the statistic X_j'y / ||X_j|| is a z-statistic.  Keeps the record
// needed to undo the transformation exactly.
inline Dataset standardize(const Dataset& ds) {
  ds.validate();
  const auto n = ds.n();
  Dataset out = ds;
  out.standardization.applied = true;
  out.standardization.center.resize(ds.p());
  out.standardization.scale.resize(ds.p());
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < ds.p(); ++j) {
    double mu = ds.X.col(j).mean();
    Eigen::VectorXd centered = ds.X.col(j).array() - mu;
    double norm = centered.norm();
    if (norm <= 1e-12 * sqrt_n)
      throw std::invalid_argument("standardize: column '" + ds.names[j] + "' is constant");
    double scale = norm / sqrt_n;
    out.X.col(j) = centered / scale;
    out.standardization.center[j] = mu;
    out.standardization.scale[j] = scale;
  }
  return out;
}

// Exact inverse of standardize.
inline Dataset destandardize(const Dataset& ds) {
  if (!ds.standardization.applied)
    throw std::invalid_argument("destandardize: dataset has no standardization record");
  Dataset out = ds;
  for (Eigen::Index j = 0; j < ds.p(); ++j) {
    out.X.col(j) = ds.X.col(j).array() * ds.standardization.scale[j] +
                   ds.standardization.center[j];
  }
  out.standardization = Standardization{};
  return out;
}

}  // namespace inferactive
