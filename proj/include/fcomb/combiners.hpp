#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fcomb/penalized.hpp"
#include "fcomb/trees.hpp"

namespace fcomb {

/// Combination schemes over the submodel forecast matrix (rows = target
/// weeks, columns = submodels). P10/P11 live in subset.hpp.
enum class Scheme { P1, P2, P3, P4, P5, P6, P7, P8, P9, P10, P11 };

std::string_view to_string(Scheme scheme);

/// Throws NonFiniteInput on NaN/inf entries.
void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v, std::string_view what);

// P1
double combine_equal(const Eigen::Ref<const Eigen::VectorXd>& forecasts);
Eigen::VectorXd equal_weights(int models);

// P2: even counts average the two central order statistics.
double combine_median(const Eigen::Ref<const Eigen::VectorXd>& forecasts);

/// w_i ∝ 1 / Σ ê²_i over the window rows (rows = periods, cols = models).
/// Models with zero summed error share all the weight equally.
Eigen::VectorXd bates_granger_weights(const Eigen::Ref<const Eigen::MatrixXd>& squared_errors);

enum class BgMode {
  /// Only errors realized at the forecast origin (targets at or before it).
  Feasible,
  /// Contemporaneous window including the row being forecast (uses the
  /// forecast row's own actual; kept for comparison).
  AsWritten,
};

std::string_view to_string(BgMode mode);
BgMode bg_mode_from_string(std::string_view s);

struct WeightPath {
  Eigen::MatrixXd weights;   ///< one row per forecast row
  Eigen::VectorXd forecast;
  std::vector<bool> fallback;  ///< equal weights used (no realized errors yet)
};

/// Bates–Granger weights over a forecast matrix. `window` = 1 gives P3,
/// `window` = 0 an expanding window from the first row (P4).
WeightPath bates_granger_path(const Eigen::Ref<const Eigen::MatrixXd>& forecasts,
                              const Eigen::Ref<const Eigen::VectorXd>& actuals, int horizon, int window,
                              BgMode mode = BgMode::Feasible);

/// Linear combination y ≈ intercept + w'f with frozen weights (P5–P8).
struct LinearCombiner {
  Scheme scheme = Scheme::P5;
  double intercept = 0.0;
  Eigen::VectorXd w;
  std::uint32_t flags = 0;
  double lambda = 0.0;  ///< P8
  double alpha = 0.0;   ///< P8
  int fit_rows = 0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& f) const { return intercept + w.dot(f); }
};

inline constexpr double kCombinerRidge = 1e-8;

/// P5 (intercept), P6 (no intercept) or P7 (intercept, weights sum to one).
/// Needs at least models + 2 rows; collinear forecasts fall back to a ridge
/// solve with λ = 1e-8 and set kFlagCollinearForecasts.
LinearCombiner fit_regression_combiner(const Eigen::Ref<const Eigen::MatrixXd>& forecasts,
                                       const Eigen::Ref<const Eigen::VectorXd>& actuals, Scheme variant);

struct AenetCombinerOptions {
  std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
  int grid_size = 100;
  double grid_ratio = 1e-4;
  int cv_splits = 5;
  int horizon = 1;  ///< CV gap is horizon - 1
  SolverOptions cv_solver{1e-7, 2000, false};
  SolverOptions fit_solver{1e-14, 100000, false};
  double cap = kAdaptiveWeightCap;
  /// When > 0, skip tuning and use this λ with `fixed_alpha`.
  double fixed_lambda = 0.0;
  double fixed_alpha = 0.5;
};

/// P8: adaptive elastic net of actuals on standardized forecast columns.
LinearCombiner fit_aenet_combiner(const Eigen::Ref<const Eigen::MatrixXd>& forecasts,
                                  const Eigen::Ref<const Eigen::VectorXd>& actuals,
                                  const AenetCombinerOptions& options = {});

/// P9: random forest on the forecast columns.
struct ForestCombiner {
  TreeEnsemble forest;
  int fit_rows = 0;
  double predict(const Eigen::Ref<const Eigen::VectorXd>& f) const { return forest.predict(f); }
};

ForestCombiner fit_rf_combiner(const Eigen::Ref<const Eigen::MatrixXd>& forecasts,
                               const Eigen::Ref<const Eigen::VectorXd>& actuals, int trees, std::uint64_t seed,
                               Exec exec = Exec::Parallel);

}  // namespace fcomb
