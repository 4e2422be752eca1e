#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace fcomb {

struct KnnResult {
  double forecast = 0.0;
  std::vector<int> neighbors;  ///< fit-row indices, nearest first
  std::uint32_t flags = 0;
};

/// Mean target of the k fit rows nearest (Euclidean) to `query`.
/// Ties in distance go to the earlier row. With fewer than k rows every row
/// is used and kFlagFewerRowsThanK is set.
KnnResult knn_forecast(const Eigen::Ref<const Eigen::MatrixXd>& fit_x, const Eigen::Ref<const Eigen::VectorXd>& fit_y,
                       const Eigen::Ref<const Eigen::VectorXd>& query, int k = 5);

}  // namespace fcomb
