#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "fcomb/store.hpp"

namespace fcomb {

enum class EvalWindow { FullForecastSet, Eval30 };
std::string_view to_string(EvalWindow w);

/// 100 · mean |(y - ŷ) / y|; with `squared`, the mean of the squared ratio
/// instead. Throws ZeroActual, LengthMismatch, NonFiniteInput.
double mape(const Eigen::Ref<const Eigen::VectorXd>& actuals, const Eigen::Ref<const Eigen::VectorXd>& forecasts,
            bool squared = false);

/// Mean |y_{t+h} - y_t| over training pairs (the h-step naive error).
double naive_scale(const Eigen::Ref<const Eigen::VectorXd>& targets, const Eigen::Ref<const Eigen::VectorXd>& lag0);

/// mean |y - ŷ| / scale. Throws ZeroDenominator when scale <= 0.
double mase(const Eigen::Ref<const Eigen::VectorXd>& actuals, const Eigen::Ref<const Eigen::VectorXd>& forecasts,
            double scale);

struct DmResult {
  double statistic = 0.0;
  double p_value = 0.5;  ///< one-sided, alternative: series a more accurate
  bool reject = false;   ///< at the 5% level
  bool degenerate = false;
  int n = 0;
  int horizon = 1;
};

inline constexpr int kDmMinimumLength = 10;

/// One-sided Diebold–Mariano test of squared-error loss d = e_a² - e_b²
/// (a better when d̄ < 0). Rectangular HAC to lag h-1, autocovariances
/// divided by n, Harvey–Leybourne–Newbold correction, Student-t(n-1).
/// A non-positive variance or constant differential is degenerate and never rejects.
DmResult dm_test(const Eigen::Ref<const Eigen::VectorXd>& errors_a, const Eigen::Ref<const Eigen::VectorXd>& errors_b,
                 int horizon, double level = 0.05);

struct NonEquivalenceCell {
  std::string disease;
  int horizon = 1;
  int pairs = 0;
  int significant = 0;
  double proportion() const { return pairs == 0 ? 0.0 : static_cast<double>(significant) / pairs; }
};

/// Count (submodel, combination) pairs where the combination is significantly
/// better. Columns are error series of equal length.
NonEquivalenceCell nonequivalence_cell(const Eigen::Ref<const Eigen::MatrixXd>& submodel_errors,
                                       const Eigen::Ref<const Eigen::MatrixXd>& combo_errors, int horizon);

/// The 16 submodels against P1–P4 on the full forecast set for every
/// (disease, horizon). Throws MissingForecasts.
std::vector<NonEquivalenceCell> nonequivalence_table(const ForecastStore& store,
                                                     const std::vector<std::string>& diseases,
                                                     const std::vector<int>& horizons,
                                                     const std::vector<std::string>& submodels,
                                                     const std::vector<std::string>& combos);

}  // namespace fcomb
