#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "fcomb/linalg.hpp"

namespace fcomb {

enum class PenaltyKind { Ridge, Lasso, AdaptiveLasso, SparseGroupLasso, ElasticNet, AdaptiveElasticNet };

std::string_view to_string(PenaltyKind kind);

inline constexpr double kAdaptiveWeightCap = 1e6;

/// Penalty on system (standardized) coefficients b, with the loss scaled as
/// (1/2n)||y - ŷ||²:
///
///   ridge   λ/2 ||b||²
///   lasso   λ ||b||₁
///   alasso  λ Σ w_j |b_j|
///   enet    λ (α ||b||₁ + (1-α)/2 ||b||²)
///   aenet   λ (α Σ w_j |b_j| + (1-α)/2 ||b||²)
///   sgl     λ (α ||b||₁ + (1-α) Σ_g √d_g ||b_g||₂)
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::Lasso;
  double alpha = 1.0;
  Eigen::VectorXd adaptive_weights;  ///< empty means all ones
  std::vector<int> groups;           ///< group id per column, SGL only

  /// The l1 share actually applied (1 for lasso/alasso, 0 for ridge).
  double l1_share() const;
  /// Throws InvalidConfig on alpha outside [0,1], bad weights or groups.
  void validate(int dim) const;
};

struct SolverOptions {
  /// Stop when max_j G_jj Δb_j² < tol · var(y) over a full sweep.
  double tol = 1e-14;
  int max_sweeps = 100000;
  bool trace_objective = false;
};

struct PenalizedFit {
  Eigen::VectorXd b;  ///< system coordinates
  double objective = 0.0;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> objective_trace;  ///< after each full sweep, when traced
};

double penalized_objective(const GramSystem& system, const PenaltySpec& spec, double lambda,
                           const Eigen::Ref<const Eigen::VectorXd>& b);

/// Coordinate descent (block coordinate descent for SGL) on a Gram system.
/// The intercept is implicit and unpenalized. A non-converged solve returns
/// the last iterate with converged = false.
PenalizedFit solve_penalized(const GramSystem& system, const PenaltySpec& spec, double lambda,
                             const SolverOptions& options = {}, const Eigen::VectorXd* warm_start = nullptr);

/// Smallest λ at which every coefficient is zero. Ridge uses the elastic-net
/// convention with α = 0.001 since no finite λ zeroes a ridge fit.
double lambda_max(const GramSystem& system, const PenaltySpec& spec);

/// `count` log-spaced values from lambda_max down to ratio · lambda_max.
std::vector<double> lambda_grid(double lambda_max, int count = 100, double ratio = 1e-4);

/// w_j = 1 / |β_j| capped at `cap`; zero coefficients get the cap.
Eigen::VectorXd adaptive_weights_from_ols(const Eigen::Ref<const Eigen::VectorXd>& beta,
                                          double cap = kAdaptiveWeightCap);

/// Raw-unit coefficients from a penalized fit.
Coefficients to_coefficients(const GramSystem& system, const PenalizedFit& fit);

// ---------------------------------------------------------------------------
// Time-series cross-validation

struct CvFold {
  int train_end = 0;    ///< fit rows [0, train_end)
  int valid_begin = 0;  ///< validate rows [valid_begin, valid_end)
  int valid_end = 0;
};

/// Chronological expanding folds: the validation blocks tile the tail of the
/// window; each fold trains on everything before its block minus `gap` rows.
/// Empty when a fold would have fewer than `min_fold_rows` rows.
std::vector<CvFold> tscv_folds(int rows, int gap, int n_splits = 5, int min_fold_rows = 4);

struct FoldData {
  GramSystem system;
  Eigen::MatrixXd valid_x;  ///< raw predictors
  Eigen::VectorXd valid_y;
};

std::vector<FoldData> make_fold_data(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     const std::vector<CvFold>& folds);

/// Predictions of system coefficients b on raw rows.
Eigen::VectorXd predict_system(const GramSystem& system, const Eigen::Ref<const Eigen::VectorXd>& b,
                               const Eigen::Ref<const Eigen::MatrixXd>& raw_x);

struct TuneRequest {
  PenaltyKind kind = PenaltyKind::Lasso;
  std::vector<double> alphas{1.0};
  std::vector<int> groups;
  /// Adaptive weights for a system at a given alpha; fold = -1 for the full window.
  std::function<Eigen::VectorXd(const GramSystem&, int fold, double alpha)> weights;
  int grid_size = 100;
  double grid_ratio = 1e-4;
};

struct TuneResult {
  double lambda = 0.0;
  double alpha = 1.0;
  std::uint32_t flags = 0;
  /// Best λ for each requested alpha (same order as TuneRequest::alphas).
  std::vector<double> best_lambda_per_alpha;
  /// Mean validation MSE, [alpha][lambda index].
  std::vector<std::vector<double>> cv_mse;
  std::vector<std::vector<double>> grids;
};

/// Choose (λ, α) minimizing mean validation MSE across folds; ties go to the
/// larger λ. Without folds, falls back to the mid-grid λ and middle α and sets
/// kFlagCvFallback.
TuneResult select_lambda_tscv(const GramSystem& full, const std::vector<FoldData>& folds,
                              const TuneRequest& request, const SolverOptions& options = {});

/// Adaptive elastic net weights: 1/|b| of the elastic net at (alpha, enet_lambda).
Eigen::VectorXd aenet_weights(const GramSystem& system, double alpha, double enet_lambda,
                              const SolverOptions& options = {}, double cap = kAdaptiveWeightCap,
                              const Eigen::VectorXd* warm_start = nullptr);

struct AenetTuning {
  TuneResult enet;
  TuneResult aenet;
  /// ENET λ at the chosen AENET α (the weights are built from that fit).
  double weight_lambda = 0.0;
};

/// Tune ENET over the α grid, then AENET with weights from ENET at each α's
/// own cross-validated λ.
AenetTuning tune_adaptive_elastic_net(const GramSystem& full, const std::vector<FoldData>& folds,
                                      const std::vector<double>& alphas, int grid_size = 100,
                                      double grid_ratio = 1e-4, const SolverOptions& options = {},
                                      double cap = kAdaptiveWeightCap);

}  // namespace fcomb
