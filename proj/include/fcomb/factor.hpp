#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "fcomb/design.hpp"
#include "fcomb/linalg.hpp"

namespace fcomb {

inline constexpr double kFactorVarianceThreshold = 0.85;

/// Principal components of a standardized predictor block.
struct FactorBasis {
  Eigen::MatrixXd loadings;                 ///< columns × R, orthonormal columns
  int components = 0;                       ///< R
  Eigen::VectorXd explained_variance_ratio; ///< every component, descending
  Eigen::VectorXd mean;                     ///< standardization of the block
  Eigen::VectorXd scale;                    ///< 0 for zero-variance columns
  Eigen::MatrixXd scores;                   ///< fit rows × R

  double cumulative_explained() const;
  /// Factor scores of one raw row of the block.
  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& raw) const;
};

/// Smallest R whose cumulative explained variance reaches `threshold`.
/// `system` must be a standardized Gram system of the block over the fit rows.
/// Returns components = 0 when the block carries no variance.
FactorBasis extract_factors(const GramSystem& system, const Eigen::Ref<const Eigen::MatrixXd>& fit_block,
                            double threshold = kFactorVarianceThreshold);

/// Own-lag autoregression augmented with principal-component factors of the
/// exogenous block (environmental and cross-disease lags).
struct FactorModel {
  FactorBasis basis;
  Coefficients coefficients;  ///< over [own lags, factor scores]
  ColumnBlock own;
  ColumnBlock exog;
  std::uint32_t flags = 0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const;
};

/// Fit on rows [0, fit_end). `standardized` may carry a precomputed
/// standardized system over all design columns for those rows.
/// Degenerate exogenous blocks fall back to the own-lag regression
/// (kFlagDegeneratePca).
FactorModel fit_factor_model(const LagDesign& design, int fit_end, const GramSystem* standardized = nullptr,
                             double threshold = kFactorVarianceThreshold);

}  // namespace fcomb
