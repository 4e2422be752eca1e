#include "fcomb/knn.hpp"

#include <algorithm>
#include <numeric>

#include "fcomb/error.hpp"

namespace fcomb {

KnnResult knn_forecast(const Eigen::Ref<const Eigen::MatrixXd>& fit_x, const Eigen::Ref<const Eigen::VectorXd>& fit_y,
                       const Eigen::Ref<const Eigen::VectorXd>& query, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  const auto n = static_cast<int>(fit_x.rows());
  if (n == 0) throw Error(ErrorCode::TooFewRows, "knn needs at least one fit row");
  KnnResult result;
  if (n < k) {
    result.flags |= kFlagFewerRowsThanK;
    k = n;
  }
  const Eigen::VectorXd dist = (fit_x.rowwise() - query.transpose()).rowwise().squaredNorm();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    return dist(a) < dist(b) || (dist(a) == dist(b) && a < b);
  });
  order.resize(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (int r : order) sum += fit_y(r);
  result.forecast = sum / k;
  result.neighbors = std::move(order);
  return result;
}

}  // namespace fcomb
