#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fcomb/combiners.hpp"
#include "fcomb/design.hpp"
#include "fcomb/metrics.hpp"
#include "fcomb/panel.hpp"
#include "fcomb/store.hpp"
#include "fcomb/submodels.hpp"
#include "fcomb/synthgen.hpp"

namespace fcomb {

inline constexpr std::string_view kSoftwareVersion = "fcomb 1.0.0";

/// Everything a run depends on. Serialized into the manifest, so a run can be
/// repeated from the manifest alone.
struct RunConfig {
  std::string input;            ///< panel CSV; empty means synthetic
  std::optional<DgpSpec> dgp;   ///< synthetic panel; default spec when both are empty
  int synthetic_weeks = 522;    ///< length of the default synthetic panel
  std::vector<std::string> diseases;  ///< empty = every disease in the panel
  std::vector<int> horizons{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  int lag_order = kDefaultLagOrder;
  double split_ratio = 0.7;
  std::vector<ModelId> models{kAllModels.begin(), kAllModels.end()};
  std::vector<Scheme> combiners{Scheme::P1, Scheme::P2, Scheme::P3, Scheme::P4,  Scheme::P5, Scheme::P6,
                                Scheme::P7, Scheme::P8, Scheme::P9, Scheme::P10, Scheme::P11};
  std::uint64_t seed = 20240601;
  std::vector<int> subset_p{1, 2, 3};
  BgMode p3_mode = BgMode::Feasible;
  std::string output_dir = "out";
  bool mape_squared = false;
  int threads = 0;  ///< 0 = OpenMP default
  SubmodelParams submodel;

  /// Throws InvalidConfig / UnknownModel.
  void validate() const;
};

std::string config_to_json(const RunConfig& config);
/// Missing keys keep their defaults. Throws InvalidConfig / UnknownModel.
RunConfig config_from_json(std::string_view text);
std::string config_hash(const RunConfig& config);
/// The config recorded in a manifest.json.
RunConfig config_from_manifest(std::string_view text);

/// The panel named by the config (CSV file or synthetic spec).
SeriesPanel load_panel(const RunConfig& config);

/// One row of metrics.csv.
struct MetricRow {
  std::string disease;
  int horizon = 1;
  std::string model;
  EvalWindow window = EvalWindow::FullForecastSet;
  double mape = 0.0;
  double mase = 0.0;
  int n = 0;
};

/// One row of weights.csv (P3/P4 trajectories).
struct WeightRow {
  std::string disease;
  int horizon = 1;
  std::string week;
  std::string scheme;
  std::string model;
  double weight = 0.0;
};

struct ModelFitSummary {
  std::string model;
  double lambda = 0.0;  ///< NaN when the model has no penalty
  double alpha = 0.0;
  std::uint32_t flags = 0;
  int factors_min = -1;
  int factors_max = -1;
  int trees = -1;
  int fits = 0;
};

struct CombinerSummary {
  std::string scheme;
  double intercept = 0.0;
  std::vector<double> weights;
  std::uint32_t flags = 0;
  double lambda = 0.0;
  double alpha = 0.0;
  int fit_rows = 0;
  std::uint64_t seed = 0;
  int candidates = 0;
  std::uint64_t candidate_space = 0;
  int rank_deficient = 0;
};

/// Per (series, horizon) facts the report step needs besides the forecasts.
struct PipelineContext {
  std::string disease;
  int horizon = 1;
  int rows = 0;
  int train_end = 0;
  int eval30_begin = 0;
  double mase_scale = 0.0;
};

/// Everything one (disease, horizon) pipeline produces.
struct PipelineResult {
  PipelineContext context;
  std::vector<std::string> weeks;      ///< forecast-set target weeks
  std::vector<std::string> submodels;  ///< columns of `forecasts`
  Eigen::MatrixXd forecasts;           ///< forecast rows × submodels
  Eigen::VectorXd actuals;
  WeightPath p3;
  WeightPath p4;
  std::vector<ModelFitSummary> fits;
  std::vector<CombinerSummary> combiners;
  ForecastStore store;
};

using Clock = std::chrono::steady_clock;
inline constexpr Clock::time_point kNoDeadline = Clock::time_point::max();

/// Expanding-window forecasts of one design, then the enabled combiners.
/// `label` is the series name written to the store. Throws DeadlineExceeded
/// when a step starts after `deadline`.
PipelineResult run_pipeline(const LagDesign& design, const std::vector<std::string>& panel_weeks,
                            const std::string& label, const RunConfig& config, const std::vector<ModelId>& models,
                            bool with_combiners, Clock::time_point deadline = kNoDeadline);

/// Spec-C pipeline for one disease. Errors are rethrown tagged with the
/// disease, horizon and model.
PipelineResult run_disease_pipeline(const SeriesPanel& panel, const std::string& disease, int horizon,
                                    const RunConfig& config, Clock::time_point deadline = kNoDeadline);

/// Store ids of the enabled combiner outputs, in emission order.
std::vector<std::string> combiner_ids(const RunConfig& config);

struct BacktestResult {
  RunConfig config;
  std::vector<PipelineContext> contexts;
  ForecastStore store;
  std::vector<MetricRow> metrics;
  std::vector<NonEquivalenceCell> table;
  std::vector<WeightRow> weights;
  /// Per-pipeline fit metadata for the manifest.
  std::vector<std::pair<PipelineContext, std::vector<ModelFitSummary>>> fits;
  std::vector<std::pair<PipelineContext, std::vector<CombinerSummary>>> combiner_fits;
  std::string panel_hash;
  double seconds = 0.0;
};

/// Wall-clock limit and progress reporting for long runs. Not part of the
/// config: it never changes what a completed run produces.
struct RunControl {
  double budget_seconds = 0.0;  ///< 0 = unlimited
  /// Called after each finished pipeline (serialized across threads).
  std::function<void(int done, int total)> progress;
};

/// Pipelines run concurrently over (disease, horizon); results are merged in
/// (disease, horizon) order so the output never depends on scheduling.
BacktestResult run_backtest(const RunConfig& config);
BacktestResult run_backtest(const RunConfig& config, const SeriesPanel& panel, const RunControl& control = {});

/// Metrics for every series in the store. Submodels and P1–P4 are scored on
/// both windows, P5–P11 on eval30; P3/P4 on eval30 are recomputed on the
/// eval30 timeline alone.
std::vector<MetricRow> compute_metrics(const ForecastStore& store, const std::vector<PipelineContext>& contexts,
                                       double split_ratio, BgMode p3_mode, bool mape_squared);

/// P3/P4 weight trajectories over the full forecast set, from the store.
std::vector<WeightRow> weight_trajectories(const ForecastStore& store, const std::vector<PipelineContext>& contexts,
                                           BgMode p3_mode);

/// Table 1 over whatever submodels are present against P1–P4.
std::vector<NonEquivalenceCell> proportion_table(const ForecastStore& store,
                                                 const std::vector<PipelineContext>& contexts);

/// The 10-model all-cause exercise; series label "all_cause" or "all_cause_env".
struct ExerciseResult {
  ForecastStore store;
  std::vector<PipelineContext> contexts;
  std::vector<MetricRow> metrics;
};

ExerciseResult run_exercise_allcause(const RunConfig& config, bool with_exog);
ExerciseResult run_exercise_allcause(const RunConfig& config, const SeriesPanel& panel, bool with_exog);

/// Summed cause-specific forecasts against summed actuals, next to direct
/// all-cause forecasts from the same models. Throws MissingCauseForecasts.
struct AggregationRow {
  int horizon = 1;
  std::string model;
  std::string source;  ///< "aggregated" or "direct"
  EvalWindow window = EvalWindow::FullForecastSet;
  double mape = 0.0;
  double mase = 0.0;
  int n = 0;
};

struct AggregationResult {
  ForecastStore aggregated;  ///< label "all_cause_aggregated"
  ForecastStore direct;      ///< label "all_cause"
  std::vector<AggregationRow> rows;
};

/// Row-wise sums over the diseases, labelled "all_cause_aggregated".
ForecastStore aggregate_forecasts(const ForecastStore& cause_store, const std::vector<std::string>& diseases,
                                  const std::vector<int>& horizons, const std::vector<std::string>& models);
AggregationResult run_exercise_aggregation(const RunConfig& config);
/// Runs the cause-specific backtest unless `cause_forecasts` is given.
AggregationResult run_exercise_aggregation(const RunConfig& config, const SeriesPanel& panel,
                                           const ForecastStore* cause_forecasts = nullptr);

// Report files.
std::string format_metrics_csv(const std::vector<MetricRow>& rows);
std::string format_metrics_json(const std::vector<MetricRow>& rows);
std::string format_dm_table_csv(const std::vector<NonEquivalenceCell>& cells);
std::string format_weights_csv(const std::vector<WeightRow>& rows);
std::string format_manifest(const BacktestResult& result);
std::string format_aggregation_csv(const std::vector<AggregationRow>& rows);
/// Wide per-(disease, horizon) table: target_week, actual, one column per model.
std::string format_plot_csv(const ForecastStore& store, const std::string& disease, int horizon);

/// forecasts.csv, metrics.csv, metrics.json, dm_table.csv, weights.csv,
/// manifest.json and plots/. Throws Io.
void emit_reports(const BacktestResult& result, const std::filesystem::path& outdir);

/// Recompute every derived report from forecasts.csv and manifest.json in `dir`.
BacktestResult load_run(const std::filesystem::path& dir);

}  // namespace fcomb
