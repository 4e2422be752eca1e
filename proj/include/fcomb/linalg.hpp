#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace fcomb {

/// Sums of centered cross-products of predictors x and target y over n rows.
struct CenteredMoments {
  int n = 0;
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;
  Eigen::MatrixXd cxx;  ///< sum (x - x̄)(x - x̄)'
  Eigen::VectorXd cxy;  ///< sum (x - x̄)(y - ȳ)
  double cyy = 0.0;     ///< sum (y - ȳ)²

  int dim() const { return static_cast<int>(cxx.rows()); }

  static CenteredMoments from_data(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y);
  CenteredMoments subset(std::span<const int> cols) const;
  /// Moments of the derived predictors x'T.
  CenteredMoments transform(const Eigen::Ref<const Eigen::MatrixXd>& t) const;
};

/// Incrementally accumulates moments of appended rows.
///
/// Rows are shifted by a fixed reference vector before accumulation, which
/// keeps the centered cross-products accurate for series with large means.
class MomentAccumulator {
 public:
  MomentAccumulator() = default;
  MomentAccumulator(const Eigen::Ref<const Eigen::VectorXd>& x_shift, double y_shift);

  void add_row(const Eigen::Ref<const Eigen::RowVectorXd>& x, double y);
  /// Append rows [begin, end) of a matrix in one blocked update.
  void add_rows(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                int begin, int end);
  int count() const { return n_; }
  CenteredMoments moments() const;

 private:
  int n_ = 0;
  Eigen::VectorXd x_shift_;
  double y_shift_ = 0.0;
  Eigen::MatrixXd sxx_;  // lower triangle maintained
  Eigen::VectorXd sx_;
  Eigen::VectorXd sxy_;
  double sy_ = 0.0;
  double syy_ = 0.0;
};

/// Least-squares system in the scaled coordinates used by the solvers.
///
/// With intercept: gram = Z'Z / n, xty = Z'(y - ȳ) / n, where Z holds the
/// centered predictors divided by `scale`. Without intercept nothing is
/// centered. Zero-variance columns have scale 0 and zero rows/columns.
struct GramSystem {
  int n = 0;
  bool intercept = true;
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;
  Eigen::VectorXd scale;
  std::vector<bool> zero_variance;
  Eigen::MatrixXd gram;
  Eigen::VectorXd xty;
  double yty = 0.0;

  int dim() const { return static_cast<int>(gram.rows()); }

  /// Standardized (sample sd, n - 1) or raw-scale centered system.
  static GramSystem from_moments(const CenteredMoments& m, bool standardize);
  static GramSystem from_data(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y, bool standardize,
                              bool intercept = true);
  /// Map coefficients in system coordinates back to raw units.
  void to_raw(const Eigen::Ref<const Eigen::VectorXd>& b, double& intercept_out,
              Eigen::VectorXd& beta_out) const;
  /// Half mean squared residual (1/2n)||y - ŷ||² at system coefficients b.
  double half_mse(const Eigen::Ref<const Eigen::VectorXd>& b) const;
};

/// Linear model in raw predictor units.
struct Coefficients {
  double intercept = 0.0;
  Eigen::VectorXd beta;
  std::uint32_t flags = 0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const { return intercept + beta.dot(x); }
  Eigen::VectorXd predict_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    return (x * beta).array() + intercept;
  }
};

/// Solve gram * b = rhs restricted to columns marked active.
///
/// Cholesky when well-conditioned, otherwise the minimum-norm solution via a
/// symmetric eigendecomposition (sets kFlagRankDeficient in `flags`).
Eigen::VectorXd solve_symmetric(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                                const Eigen::Ref<const Eigen::VectorXd>& rhs,
                                const std::vector<bool>& inactive, std::uint32_t& flags);

/// Ordinary least squares on a Gram system; raw-unit coefficients.
/// The system is solved in its own (typically standardized) coordinates.
Coefficients fit_ols(const GramSystem& system);

/// Convenience: OLS of y on x with an intercept.
Coefficients fit_ols(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y);

/// OLS coefficients in system coordinates (before mapping to raw units).
Eigen::VectorXd ols_system_coefficients(const GramSystem& system, std::uint32_t& flags);

}  // namespace fcomb
