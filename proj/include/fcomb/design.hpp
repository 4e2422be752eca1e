#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "fcomb/panel.hpp"

namespace fcomb {

/// Predictor specification: own lags; plus environmental lags; plus cross-disease lags.
enum class PredictorSpec { A, B, C };

inline constexpr int kDefaultLagOrder = 8;

/// Half-open column range.
struct ColumnBlock {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool operator==(const ColumnBlock&) const = default;
};

/// Supervised matrix for one (target, horizon) pair.
///
/// Row r has forecast origin `origin[r]` (a panel index t) and target
/// y[t + horizon]. Columns are ordered: own lags, then environmental
/// variables in panel order, then the other diseases in panel order; each
/// variable contributes lags 0..lag_order-1 consecutively, lag 0 being the
/// value at the origin week.
struct LagDesign {
  std::string target;
  int horizon = 1;
  int lag_order = kDefaultLagOrder;
  PredictorSpec spec = PredictorSpec::C;

  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<int> origin;
  std::vector<std::string> column_names;
  /// Variable index (0 = own series) for each column; lags of one variable share a group.
  std::vector<int> column_group;
  std::vector<std::string> group_names;

  ColumnBlock own;
  ColumnBlock env;
  ColumnBlock cross;

  int rows() const { return static_cast<int>(x.rows()); }
  int cols() const { return static_cast<int>(x.cols()); }

  bool operator==(const LagDesign& other) const;
};

/// Throws PanelTooShort, UnknownDisease.
LagDesign build_lag_design(const SeriesPanel& panel, std::string_view disease, int horizon,
                           PredictorSpec spec, int lag_order = kDefaultLagOrder);

/// Design for the all-cause total series: own lags, optionally environmental lags,
/// never cross-disease lags.
LagDesign build_total_design(const SeriesPanel& panel, int horizon, bool with_env,
                             int lag_order = kDefaultLagOrder);

/// Number of predictor columns build_lag_design produces.
int predictor_count(PredictorSpec spec, int n_env, int n_diseases, int lag_order = kDefaultLagOrder);

/// Column block used by a given spec within a spec-C design.
ColumnBlock spec_columns(const LagDesign& design, PredictorSpec spec);

std::string design_to_json(const LagDesign& design);
LagDesign design_from_json(std::string_view text);

/// Initial chronological split of design rows.
struct SplitPlan {
  int rows = 0;
  int horizon = 1;
  int train_end = 0;        ///< rows [0, train_end) form the initial training block
  int eval30_begin = 0;     ///< rows [eval30_begin, rows) are the tail of the forecast set
  int forecast_size() const { return rows - train_end; }
  int eval30_size() const { return rows - eval30_begin; }
  /// Forecast-set rows before the evaluation tail (the combiner fitting block).
  int combiner_fit_size() const { return eval30_begin - train_end; }
};

/// Throws TooFewRows when rows < 10.
SplitPlan split_initial(const LagDesign& design, double ratio = 0.7);
SplitPlan split_initial(int rows, int horizon, double ratio = 0.7);

struct ScheduleStep {
  int fit_end = 0;      ///< fit on rows [0, fit_end)
  int predict_row = 0;  ///< forecast origin row
};

/// Expanding-window schedule over the forecast set.
///
/// Step i predicts row train_end + i. It fits on every row whose target is
/// already observed at that origin, i.e. rows [0, predict_row - horizon + 1).
/// For one-step horizons this is exactly train_end + i rows.
struct ExpandingWindowSchedule {
  int horizon = 1;
  std::vector<ScheduleStep> steps;
};

ExpandingWindowSchedule expanding_schedule(const SplitPlan& split);

/// Last row (exclusive) whose target is realized by the origin of `predict_row`.
inline int realized_end(int predict_row, int horizon) { return predict_row - horizon + 1; }

/// Column means and sample standard deviations (n - 1) from fit rows.
struct ColumnStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  /// Zero-variance columns: standardized to 0 and excluded from penalization.
  std::vector<bool> zero_variance;

  int zero_variance_count() const;
  /// Standardize one raw row.
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& raw) const;
  Eigen::MatrixXd apply_rows(const Eigen::Ref<const Eigen::MatrixXd>& raw) const;
};

ColumnStats column_stats(const Eigen::Ref<const Eigen::MatrixXd>& fit_block);

struct StandardizedDesign {
  LagDesign design;
  ColumnStats stats;
};

/// Z-score predictors with statistics computed from rows [0, fit_end) only.
/// The target stays in original units. Throws TooFewRows when fit_end < 2.
StandardizedDesign standardize_columns(const LagDesign& design, int fit_end);

}  // namespace fcomb
