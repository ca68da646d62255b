#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <vector>

namespace inferactive {

// Recorded result of one selection query: the selection set E, the signs on E,
// and the optimization values observed at solve time.  These are stored rather
// than re-derived so that replay does not depend on solver tolerance drift.
//
//   threshold: selected = {0} and aux_selected = [z] when the event held
//   screening: aux_selected = o_E (slacks), aux_unselected = eta off E
//   lasso:     aux_selected = beta_E, aux_unselected = subgradient u off E
struct QueryOutcome {
  std::vector<int> selected;        // ascending indices
  std::vector<double> signs;        // +/-1, aligned with selected
  Eigen::VectorXd aux_selected;
  Eigen::VectorXd aux_unselected;   // aligned with ascending complement indices
  bool event_held = true;           // threshold queries only

  bool contains(int j) const {
    return std::binary_search(selected.begin(), selected.end(), j);
  }

  void validate_basic() const {
    if (signs.size() != selected.size())
      throw std::invalid_argument("query outcome: one sign per selected index required");
    for (double s : signs)
      if (s != 1.0 && s != -1.0)
        throw std::invalid_argument("query outcome: signs must be +/-1");
    if (!std::is_sorted(selected.begin(), selected.end()) ||
        std::adjacent_find(selected.begin(), selected.end()) != selected.end())
      throw std::invalid_argument("query outcome: selected indices must be strictly ascending");
  }
};

// Complement of outcome.selected inside {0, ..., p-1}, ascending.
inline std::vector<int> complement_indices(const std::vector<int>& selected, int p) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(p) - selected.size());
  std::size_t k = 0;
  for (int j = 0; j < p; ++j) {
    if (k < selected.size() && selected[k] == j)
      ++k;
    else
      out.push_back(j);
  }
  return out;
}

}  // namespace inferactive
