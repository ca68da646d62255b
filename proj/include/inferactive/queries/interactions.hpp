#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace inferactive {

// Column bookkeeping for an augmented design: a main effect keeps (j, -1),
// an interaction records the ordered pair (i, j) of original columns.
struct AugmentedColumn {
  int first = -1;
  int second = -1;  // -1 for a main effect
  bool is_interaction() const { return second >= 0; }
};

struct AugmentedDesign {
  Eigen::MatrixXd X;
  std::vector<AugmentedColumn> columns;

  std::string column_name(std::size_t k, const std::vector<std::string>& base_names) const {
    const auto& c = columns.at(k);
    if (!c.is_interaction()) return base_names.at(static_cast<std::size_t>(c.first));
    return base_names.at(static_cast<std::size_t>(c.first)) + ":" +
           base_names.at(static_cast<std::size_t>(c.second));
  }
};

// Build [X_E | pairwise products X_i o X_j, i<j in E], dropping products with
// no variation (identically zero in particular), then center every column to
// mean 0 and scale to norm sqrt(n).
inline AugmentedDesign expand_interactions(const Eigen::MatrixXd& X, const std::vector<int>& E) {
  if (E.empty()) throw std::invalid_argument("expand_interactions: need at least one column");
  const auto n = X.rows();
  for (int j : E)
    if (j < 0 || j >= X.cols())
      throw std::invalid_argument("expand_interactions: column index out of range");

  std::vector<Eigen::VectorXd> cols;
  std::vector<AugmentedColumn> meta;
  for (int j : E) {
    cols.push_back(X.col(j));
    meta.push_back({j, -1});
  }
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (std::size_t a = 0; a < E.size(); ++a) {
    for (std::size_t b = a + 1; b < E.size(); ++b) {
      Eigen::VectorXd prod = X.col(E[a]).cwiseProduct(X.col(E[b]));
      Eigen::VectorXd centered = prod.array() - prod.mean();
      if (centered.norm() <= 1e-12 * sqrt_n) continue;  // no information in this product
      cols.push_back(std::move(prod));
      meta.push_back({E[a], E[b]});
    }
  }

  AugmentedDesign out;
  out.X.resize(n, static_cast<Eigen::Index>(cols.size()));
  out.columns = std::move(meta);
  for (std::size_t k = 0; k < cols.size(); ++k) {
    Eigen::VectorXd centered = cols[k].array() - cols[k].mean();
    double norm = centered.norm();
    if (norm <= 1e-12 * sqrt_n)
      throw std::invalid_argument("expand_interactions: main-effect column " +
                                  std::to_string(out.columns[k].first) + " is constant");
    out.X.col(static_cast<Eigen::Index>(k)) = centered * (sqrt_n / norm);
  }
  return out;
}

}  // namespace inferactive
