#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "fcomb/panel.hpp"
#include "fcomb/rng.hpp"

namespace fcomb::testing {

inline Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline Eigen::VectorXd random_vector(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Small hand-built panel: `diseases` disease series and `env` covariates of
// length n, values drawn around a positive level.
inline SeriesPanel toy_panel(int n, int diseases, int env, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<NamedSeries> d, e;
  for (int k = 0; k < diseases; ++k) {
    NamedSeries s{"d" + std::to_string(k), {}};
    double level = 100.0 + 10.0 * k;
    for (int t = 0; t < n; ++t) {
      level = std::max(5.0, level + 3.0 * rng.normal());
      s.values.push_back(std::round(level));
    }
    d.push_back(s);
  }
  for (int k = 0; k < env; ++k) {
    NamedSeries s{"e" + std::to_string(k), {}};
    for (int t = 0; t < n; ++t) s.values.push_back(rng.normal());
    e.push_back(s);
  }
  return SeriesPanel(epiweek::sequence({2015, 1}, static_cast<std::size_t>(n)), d, e);
}

}  // namespace fcomb::testing
