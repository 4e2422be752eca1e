#include "fcomb/submodels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fcomb/error.hpp"
#include "fcomb/factor.hpp"
#include "fcomb/knn.hpp"
#include "fcomb/rng.hpp"

namespace fcomb {

namespace {

constexpr std::array<std::string_view, kModelCount> kNames = {
    "Naive", "HM", "AR_A", "AR_B", "AR_C", "Ridge", "LASSO", "ALASSO",
    "SGL", "ENET", "AENET", "PF", "RF", "KNN", "GBM_X", "GBM_L"};

std::size_t slot(ModelId id) { return static_cast<std::size_t>(id); }

bool is_penalized(ModelId id) {
  switch (id) {
    case ModelId::Ridge:
    case ModelId::LASSO:
    case ModelId::ALASSO:
    case ModelId::SGL:
    case ModelId::ENET:
    case ModelId::AENET:
      return true;
    default:
      return false;
  }
}

std::uint32_t zero_variance_flag(const GramSystem& s) {
  return std::any_of(s.zero_variance.begin(), s.zero_variance.end(), [](bool z) { return z; })
             ? kFlagZeroVarianceColumn
             : 0u;
}

// Naive and HM: averages of the most recent own lags.
class LagMeanModel final : public FittedSubmodel {
 public:
  LagMeanModel(ModelId id, int begin, int count) : begin_(begin), count_(count) { meta_.model = id; }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const override {
    return raw_row.segment(begin_, count_).mean();
  }

 private:
  int begin_;
  int count_;
};

class LinearModel final : public FittedSubmodel {
 public:
  LinearModel(ModelId id, ColumnBlock block, Coefficients c) : block_(block), c_(std::move(c)) {
    meta_.model = id;
    meta_.flags = c_.flags;
  }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const override {
    return c_.predict(raw_row.segment(block_.begin, block_.size()));
  }
  FitMetadata& meta() { return meta_; }

 private:
  ColumnBlock block_;
  Coefficients c_;
};

class FactorSubmodel final : public FittedSubmodel {
 public:
  explicit FactorSubmodel(FactorModel m) : m_(std::move(m)) {
    meta_.model = ModelId::PF;
    meta_.factors = m_.basis.components;
    meta_.flags = m_.flags;
  }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const override { return m_.predict(raw_row); }

 private:
  FactorModel m_;
};

class EnsembleSubmodel final : public FittedSubmodel {
 public:
  EnsembleSubmodel(ModelId id, TreeEnsemble e) : e_(std::move(e)) {
    meta_.model = id;
    meta_.trees = static_cast<int>(e_.trees.size());
  }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const override { return e_.predict(raw_row); }

 private:
  TreeEnsemble e_;
};

class KnnSubmodel final : public FittedSubmodel {
 public:
  KnnSubmodel(Eigen::MatrixXd z, Eigen::VectorXd y, Eigen::VectorXd mean, Eigen::VectorXd inv_scale, int k)
      : z_(std::move(z)), y_(std::move(y)), mean_(std::move(mean)), inv_(std::move(inv_scale)), k_(k) {
    meta_.model = ModelId::KNN;
    if (z_.rows() < k_) meta_.flags |= kFlagFewerRowsThanK;
  }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const override {
    const Eigen::VectorXd q = (raw_row - mean_).cwiseProduct(inv_);
    return knn_forecast(z_, y_, q, k_).forecast;
  }

 private:
  Eigen::MatrixXd z_;
  Eigen::VectorXd y_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd inv_;
  int k_;
};

std::vector<int> prefix(int n) {
  std::vector<int> cols(static_cast<std::size_t>(n));
  std::iota(cols.begin(), cols.end(), 0);
  return cols;
}

}  // namespace

std::string_view to_string(ModelId id) { return kNames[slot(id)]; }

ModelId model_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kModelCount; ++i)
    if (kNames[i] == name) return kAllModels[i];
  throw Error(ErrorCode::UnknownModel, std::string(name));
}

SubmodelSuite::SubmodelSuite(const LagDesign& design, SubmodelParams params, std::vector<ModelId> models)
    : design_(design), params_(std::move(params)), models_(std::move(models)) {
  std::sort(models_.begin(), models_.end());
  models_.erase(std::unique(models_.begin(), models_.end()), models_.end());
  if (params_.hm_window < 1) throw Error(ErrorCode::InvalidConfig, "hm_window must be >= 1");
  if (params_.knn_k < 1) throw Error(ErrorCode::InvalidConfig, "knn k must be >= 1");
  if (params_.rf_trees < 1 || params_.gbm_x.trees < 1 || params_.gbm_l.trees < 1)
    throw Error(ErrorCode::InvalidConfig, "tree counts must be >= 1");
  if (params_.alphas.empty()) throw Error(ErrorCode::InvalidConfig, "alpha grid is empty");
  for (double a : params_.alphas)
    if (!(a > 0.0 && a <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha grid values must be in (0, 1]");
}

std::optional<TunedPenalty> SubmodelSuite::tuned(ModelId id) const { return tuned_[slot(id)]; }

void SubmodelSuite::advance(int fit_end) {
  if (fit_end < 2) throw Error(ErrorCode::TooFewRows, "submodels need >= 2 fit rows");
  if (fit_end > design_.rows()) throw Error(ErrorCode::TooFewRows, "fit window exceeds the design");
  if (fit_end < fit_end_ || moments_.count() == 0) {
    // Shift by the first row for accuracy with large counts.
    moments_ = MomentAccumulator(design_.x.row(0).transpose(), design_.y(0));
    fit_end_ = 0;
  }
  if (fit_end > fit_end_) {
    moments_.add_rows(design_.x, design_.y, fit_end_, fit_end);
    fit_end_ = fit_end;
    current_ = moments_.moments();
  }
}

void SubmodelSuite::tune(int fit_end, const GramSystem& standardized) {
  const int gap = std::max(0, design_.horizon - 1);
  const auto folds = tscv_folds(fit_end, gap, params_.cv_splits, params_.cv_min_fold_rows);
  const auto fold_data = make_fold_data(design_.x.topRows(fit_end), design_.y.head(fit_end), folds);
  const auto& opts = params_.cv_solver;
  const double cap = params_.adaptive_cap;

  auto want = [&](ModelId id) { return std::binary_search(models_.begin(), models_.end(), id); };
  auto base_request = [&](PenaltyKind kind, std::vector<double> alphas) {
    TuneRequest r;
    r.kind = kind;
    r.alphas = std::move(alphas);
    r.grid_size = params_.lambda_grid_size;
    r.grid_ratio = params_.lambda_grid_ratio;
    return r;
  };
  auto store = [&](ModelId id, const TuneResult& res) {
    TunedPenalty t;
    t.lambda = res.lambda;
    t.alpha = res.alpha;
    t.flags = res.flags;
    tuned_[slot(id)] = t;
  };

  if (want(ModelId::Ridge)) store(ModelId::Ridge, select_lambda_tscv(standardized, fold_data,
                                                                     base_request(PenaltyKind::Ridge, {0.0}), opts));
  if (want(ModelId::LASSO)) store(ModelId::LASSO, select_lambda_tscv(standardized, fold_data,
                                                                     base_request(PenaltyKind::Lasso, {1.0}), opts));
  if (want(ModelId::ALASSO)) {
    auto r = base_request(PenaltyKind::AdaptiveLasso, {1.0});
    r.weights = [cap](const GramSystem& s, int, double) {
      std::uint32_t flags = 0;
      return adaptive_weights_from_ols(ols_system_coefficients(s, flags), cap);
    };
    store(ModelId::ALASSO, select_lambda_tscv(standardized, fold_data, r, opts));
  }
  if (want(ModelId::SGL)) {
    auto r = base_request(PenaltyKind::SparseGroupLasso, params_.alphas);
    r.groups = design_.column_group;
    store(ModelId::SGL, select_lambda_tscv(standardized, fold_data, r, opts));
  }
  if (want(ModelId::AENET)) {
    const AenetTuning t = tune_adaptive_elastic_net(standardized, fold_data, params_.alphas,
                                                    params_.lambda_grid_size, params_.lambda_grid_ratio, opts, cap);
    if (want(ModelId::ENET)) store(ModelId::ENET, t.enet);
    store(ModelId::AENET, t.aenet);
    tuned_[slot(ModelId::AENET)]->weight_lambda = t.weight_lambda;
  } else if (want(ModelId::ENET)) {
    store(ModelId::ENET,
          select_lambda_tscv(standardized, fold_data, base_request(PenaltyKind::ElasticNet, params_.alphas), opts));
  }
}

PenaltySpec SubmodelSuite::penalty_for(ModelId id, const GramSystem& system, const TunedPenalty& t) {
  PenaltySpec spec;
  spec.alpha = t.alpha;
  switch (id) {
    case ModelId::Ridge:
      spec.kind = PenaltyKind::Ridge;
      spec.alpha = 0.0;
      break;
    case ModelId::LASSO:
      spec.kind = PenaltyKind::Lasso;
      spec.alpha = 1.0;
      break;
    case ModelId::ALASSO: {
      spec.kind = PenaltyKind::AdaptiveLasso;
      spec.alpha = 1.0;
      std::uint32_t flags = 0;
      spec.adaptive_weights = adaptive_weights_from_ols(ols_system_coefficients(system, flags), params_.adaptive_cap);
      break;
    }
    case ModelId::SGL:
      spec.kind = PenaltyKind::SparseGroupLasso;
      spec.groups = design_.column_group;
      break;
    case ModelId::ENET:
      spec.kind = PenaltyKind::ElasticNet;
      break;
    case ModelId::AENET: {
      spec.kind = PenaltyKind::AdaptiveElasticNet;
      const auto* warm = warm_[slot(ModelId::ENET)].size() == system.dim() ? &warm_[slot(ModelId::ENET)] : nullptr;
      spec.adaptive_weights = aenet_weights(system, t.alpha, t.weight_lambda, params_.fit_solver,
                                            params_.adaptive_cap, warm);
      break;
    }
    default:
      throw Error(ErrorCode::UnknownModel, "not a penalized model");
  }
  return spec;
}

std::unique_ptr<FittedSubmodel> SubmodelSuite::fit_linear_ols(ModelId id, PredictorSpec spec) {
  const ColumnBlock block = spec_columns(design_, spec);
  const auto cols = prefix(block.end);
  const GramSystem system = GramSystem::from_moments(current_.subset(cols), true);
  auto model = std::make_unique<LinearModel>(id, block, fit_ols(system));
  model->meta().flags |= zero_variance_flag(system);
  return model;
}

std::unique_ptr<FittedSubmodel> SubmodelSuite::fit_one(ModelId id, int fit_end, const GramSystem& standardized) {
  const int p = design_.cols();
  switch (id) {
    case ModelId::Naive:
      return std::make_unique<LagMeanModel>(id, design_.own.begin, 1);
    case ModelId::HM:
      return std::make_unique<LagMeanModel>(id, design_.own.begin, std::min(params_.hm_window, design_.own.size()));
    case ModelId::AR_A:
      return fit_linear_ols(id, PredictorSpec::A);
    case ModelId::AR_B:
      return fit_linear_ols(id, PredictorSpec::B);
    case ModelId::AR_C:
      return fit_linear_ols(id, PredictorSpec::C);
    case ModelId::PF:
      return std::make_unique<FactorSubmodel>(
          fit_factor_model(design_, fit_end, &standardized, params_.factor_threshold));
    case ModelId::RF: {
      ForestParams fp;
      fp.trees = params_.rf_trees;
      fp.min_leaf = params_.rf_min_leaf;
      fp.mtry = default_mtry(p);
      fp.seed = derive_seed(params_.seed, slot(id), fit_end);
      return std::make_unique<EnsembleSubmodel>(
          id, fit_random_forest(design_.x.topRows(fit_end), design_.y.head(fit_end), fp));
    }
    case ModelId::GBM_X:
    case ModelId::GBM_L:
      return std::make_unique<EnsembleSubmodel>(
          id, fit_gbm(design_.x.topRows(fit_end), design_.y.head(fit_end),
                      id == ModelId::GBM_X ? params_.gbm_x : params_.gbm_l));
    case ModelId::KNN: {
      Eigen::VectorXd inv(p);
      for (int j = 0; j < p; ++j) inv(j) = standardized.zero_variance[j] ? 0.0 : 1.0 / standardized.scale(j);
      Eigen::MatrixXd z = (design_.x.topRows(fit_end).rowwise() - standardized.x_mean.transpose()) * inv.asDiagonal();
      return std::make_unique<KnnSubmodel>(std::move(z), design_.y.head(fit_end), standardized.x_mean, inv,
                                           params_.knn_k);
    }
    default:
      break;
  }

  // Penalized models on the full predictor set.
  const TunedPenalty& t = *tuned_[slot(id)];
  const PenaltySpec spec = penalty_for(id, standardized, t);
  Eigen::VectorXd& warm = warm_[slot(id)];
  const PenalizedFit f =
      solve_penalized(standardized, spec, t.lambda, params_.fit_solver, warm.size() == p ? &warm : nullptr);
  warm = f.b;
  auto model = std::make_unique<LinearModel>(id, ColumnBlock{0, p}, to_coefficients(standardized, f));
  model->meta().lambda = t.lambda;
  if (id != ModelId::Ridge && id != ModelId::LASSO && id != ModelId::ALASSO) model->meta().alpha = t.alpha;
  model->meta().flags |= t.flags | zero_variance_flag(standardized);
  return model;
}

std::vector<std::unique_ptr<FittedSubmodel>> SubmodelSuite::fit(int fit_end) {
  advance(fit_end);
  const GramSystem standardized = GramSystem::from_moments(current_, true);

  const bool any_penalized = std::any_of(models_.begin(), models_.end(), is_penalized);
  const bool retune = fits_ == 0 || (params_.tune_every > 0 && fits_ % params_.tune_every == 0);
  if (any_penalized && retune) {
    try {
      tune(fit_end, standardized);
    } catch (const Error& e) {
      throw e.tagged("tuning");
    }
  }
  ++fits_;

  std::vector<std::unique_ptr<FittedSubmodel>> out;
  out.reserve(models_.size());
  for (ModelId id : models_) {
    try {
      out.push_back(fit_one(id, fit_end, standardized));
    } catch (const Error& e) {
      throw e.tagged(std::string(to_string(id)));
    }
  }
  return out;
}

std::unique_ptr<FittedSubmodel> fit_submodel(ModelId id, const LagDesign& design, int fit_end,
                                             const SubmodelParams& params) {
  SubmodelSuite suite(design, params, {id});
  return std::move(suite.fit(fit_end).front());
}

Coefficients fit_penalized(const LagDesign& design, int fit_end, const PenaltySpec& spec, double lambda,
                           const SolverOptions& options) {
  if (fit_end < 2 || fit_end > design.rows()) throw Error(ErrorCode::TooFewRows, "invalid fit window");
  const GramSystem system = GramSystem::from_data(design.x.topRows(fit_end), design.y.head(fit_end), true);
  spec.validate(system.dim());
  return to_coefficients(system, solve_penalized(system, spec, lambda, options));
}

}  // namespace fcomb
