#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fcomb/parallel.hpp"

namespace fcomb {

/// Axis-aligned binary regression tree stored as a flat node array; node 0 is the root.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;  ///< go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double predict_row(const Eigen::MatrixXd& x, Eigen::Index row) const;
  int leaf_count() const;
  int depth() const;
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& mutable_nodes() { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

enum class EnsembleMode { Bagged, Boosted };

/// Leaf-mean tree ensemble: plain average of trees (bagged) or a base value
/// plus the sum of shrunken trees (boosted).
struct TreeEnsemble {
  EnsembleMode mode = EnsembleMode::Bagged;
  std::vector<RegressionTree> trees;
  double base = 0.0;           ///< boosted: initial constant
  double learning_rate = 1.0;  ///< boosted: already folded into leaf values
  int mtry = 0;                ///< bagged: features tried per split
  std::vector<double> train_rmse;  ///< boosted: training RMSE after each tree (index 0 = base only)

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd predict_rows(const Eigen::MatrixXd& x) const;
};

struct ForestParams {
  int trees = 1000;
  int mtry = 0;  ///< 0 means floor(sqrt(P))
  int min_leaf = 2;
  std::uint64_t seed = 0;
};

int default_mtry(int predictors);

/// Bootstrap-aggregated CART trees (sample size n with replacement), each split
/// chosen exactly to minimize squared error over `mtry` randomly drawn features.
/// Tree t draws from its own seed, so Serial and Parallel give identical forests.
TreeEnsemble fit_random_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestParams& params,
                               Exec exec = Exec::Parallel);

enum class GrowthStrategy { DepthWise, LeafWise };

struct GbmParams {
  int trees = 1000;
  double learning_rate = 0.1;
  GrowthStrategy growth = GrowthStrategy::DepthWise;
  int max_depth = 3;    ///< depth-wise limit; -1 = unlimited
  int max_leaves = 8;   ///< leaf-wise limit
  int min_leaf = 1;
  int max_bins = 64;
  /// Stop once the relative training-RMSE improvement of a round drops below this.
  double tolerance = 1e-7;
};

/// Quantile-binned feature matrix for histogram split finding.
struct BinnedMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<double>> edges;  ///< per feature, ascending; bin b is (edges[b-1], edges[b]]
  std::vector<std::uint8_t> codes;         ///< feature-major, codes[f * rows + i]

  int bins(int feature) const { return static_cast<int>(edges[feature].size()) + 1; }
  std::uint8_t code(int feature, int row) const { return codes[static_cast<std::size_t>(feature) * rows + row]; }
};

BinnedMatrix bin_features(const Eigen::MatrixXd& x, int max_bins);

/// Gradient boosting under squared loss: f_m = f_{m-1} + η h_m with h_m fitted
/// to the current residuals. Histogram accumulation is parallel over features
/// under Exec::Parallel; the result is identical to Exec::Serial.
TreeEnsemble fit_gbm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GbmParams& params,
                     Exec exec = Exec::Parallel);

/// One histogram tree fitted to `target` (exposed for tests).
RegressionTree fit_histogram_tree(const BinnedMatrix& bins, const Eigen::VectorXd& target, const GbmParams& params,
                                  Exec exec, std::vector<int>* leaf_of_row = nullptr);

}  // namespace fcomb
