#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fcomb/design.hpp"
#include "fcomb/linalg.hpp"
#include "fcomb/penalized.hpp"
#include "fcomb/trees.hpp"

namespace fcomb {

enum class ModelId {
  Naive,
  HM,
  AR_A,
  AR_B,
  AR_C,
  Ridge,
  LASSO,
  ALASSO,
  SGL,
  ENET,
  AENET,
  PF,
  RF,
  KNN,
  GBM_X,
  GBM_L,
};

inline constexpr std::size_t kModelCount = 16;

inline constexpr std::array<ModelId, kModelCount> kAllModels = {
    ModelId::Naive, ModelId::HM,   ModelId::AR_A,  ModelId::AR_B,  ModelId::AR_C, ModelId::Ridge,
    ModelId::LASSO, ModelId::ALASSO, ModelId::SGL, ModelId::ENET,  ModelId::AENET, ModelId::PF,
    ModelId::RF,    ModelId::KNN,  ModelId::GBM_X, ModelId::GBM_L};

/// The ten regularization, instance, bagging and boosting models used on the
/// all-cause series.
inline constexpr std::array<ModelId, 10> kMachineLearningModels = {
    ModelId::Ridge, ModelId::LASSO, ModelId::ALASSO, ModelId::SGL,   ModelId::ENET,
    ModelId::AENET, ModelId::RF,    ModelId::KNN,    ModelId::GBM_X, ModelId::GBM_L};

std::string_view to_string(ModelId id);
/// Throws UnknownModel.
ModelId model_from_string(std::string_view name);

struct SubmodelParams {
  int hm_window = 8;
  std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
  int lambda_grid_size = 100;
  double lambda_grid_ratio = 1e-4;
  int cv_splits = 5;
  int cv_min_fold_rows = 4;
  double adaptive_cap = kAdaptiveWeightCap;
  SolverOptions cv_solver{1e-7, 2000, false};
  SolverOptions fit_solver{1e-14, 100000, false};
  /// Re-run λ/α selection every this many schedule steps; 0 = only on the first fit.
  int tune_every = 0;
  double factor_threshold = 0.85;
  int rf_trees = 1000;
  int rf_min_leaf = 2;
  int knn_k = 5;
  GbmParams gbm_x{1000, 0.1, GrowthStrategy::DepthWise, 3, 8, 1, 64, 1e-7};
  GbmParams gbm_l{1000, 0.1, GrowthStrategy::LeafWise, -1, 8, 1, 64, 1e-7};
  std::uint64_t seed = 0;
};

struct FitMetadata {
  ModelId model = ModelId::Naive;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  int factors = -1;
  int trees = -1;
  std::uint32_t flags = 0;
};

/// A trained submodel: one point forecast per raw design row.
class FittedSubmodel {
 public:
  virtual ~FittedSubmodel() = default;
  virtual double predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const = 0;
  const FitMetadata& metadata() const { return meta_; }
  ModelId id() const { return meta_.model; }

 protected:
  FitMetadata meta_;
};

/// λ (and α) chosen by time-series cross-validation for one penalized model.
struct TunedPenalty {
  double lambda = 0.0;
  double alpha = 1.0;
  std::uint32_t flags = 0;
  /// AENET only: ENET λ at this α, used to form the adaptive weights.
  double weight_lambda = 0.0;
};

/// Fits the registry on a growing window of one design.
///
/// Keeps the state that carries across expanding-window steps: running
/// moments of the fit rows, the cross-validated penalties, and warm starts.
/// fit() accepts any fit_end; growing windows are the cheap path.
class SubmodelSuite {
 public:
  SubmodelSuite(const LagDesign& design, SubmodelParams params, std::vector<ModelId> models);

  /// Fit every enabled model on rows [0, fit_end), in registry order.
  std::vector<std::unique_ptr<FittedSubmodel>> fit(int fit_end);

  const std::vector<ModelId>& models() const { return models_; }
  std::optional<TunedPenalty> tuned(ModelId id) const;

 private:
  std::unique_ptr<FittedSubmodel> fit_one(ModelId id, int fit_end, const GramSystem& standardized);
  void advance(int fit_end);
  void tune(int fit_end, const GramSystem& standardized);
  PenaltySpec penalty_for(ModelId id, const GramSystem& system, const TunedPenalty& tuned);
  std::unique_ptr<FittedSubmodel> fit_linear_ols(ModelId id, PredictorSpec spec);

  const LagDesign& design_;
  SubmodelParams params_;
  std::vector<ModelId> models_;
  MomentAccumulator moments_;
  CenteredMoments current_;
  int fit_end_ = 0;
  int fits_ = 0;
  std::array<std::optional<TunedPenalty>, kModelCount> tuned_;
  std::array<Eigen::VectorXd, kModelCount> warm_;
};

/// One-off fit of a single model on rows [0, fit_end).
std::unique_ptr<FittedSubmodel> fit_submodel(ModelId id, const LagDesign& design, int fit_end,
                                             const SubmodelParams& params = {});

/// Penalized fit of a design on rows [0, fit_end) at a given λ (no tuning);
/// the design is standardized on those rows and the intercept is unpenalized.
Coefficients fit_penalized(const LagDesign& design, int fit_end, const PenaltySpec& spec, double lambda,
                           const SolverOptions& options = {});

}  // namespace fcomb
