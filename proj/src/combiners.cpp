#include "fcomb/combiners.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fcomb/error.hpp"

namespace fcomb {

namespace {

constexpr double kPivotTolerance = 1e-12;

// Least squares on a system, switching to a tiny ridge when the normal
// matrix is (numerically) singular.
Eigen::VectorXd solve_or_ridge(const GramSystem& s, std::uint32_t& flags) {
  bool collinear = std::any_of(s.zero_variance.begin(), s.zero_variance.end(), [](bool z) { return z; });
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!collinear) {
    llt.compute(s.gram);
    if (llt.info() != Eigen::Success) {
      collinear = true;
    } else {
      const auto d = llt.matrixLLT().diagonal();
      collinear = !(d.minCoeff() * d.minCoeff() > kPivotTolerance * s.gram.diagonal().maxCoeff());
    }
  }
  if (!collinear) return llt.solve(s.xty);
  flags |= kFlagCollinearForecasts;
  Eigen::MatrixXd a = s.gram;
  a.diagonal().array() += kCombinerRidge;
  return a.ldlt().solve(s.xty);
}

void check_fit_block(const Eigen::Ref<const Eigen::MatrixXd>& f, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (f.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "forecast rows and actuals differ");
  if (f.cols() < 1) throw Error(ErrorCode::InvalidConfig, "no forecast columns");
  if (f.rows() < f.cols() + 2)
    throw Error(ErrorCode::TooFewRows, "combiner needs at least " + std::to_string(f.cols() + 2) + " fit rows");
  if (!f.allFinite() || !y.allFinite()) throw Error(ErrorCode::NonFiniteInput, "combiner fit block");
}

}  // namespace

std::string_view to_string(Scheme scheme) {
  static constexpr std::array<std::string_view, 11> names = {"P1", "P2", "P3", "P4",  "P5", "P6",
                                                             "P7", "P8", "P9", "P10", "P11"};
  return names[static_cast<std::size_t>(scheme)];
}

std::string_view to_string(BgMode mode) { return mode == BgMode::Feasible ? "feasible" : "as-written"; }

BgMode bg_mode_from_string(std::string_view s) {
  if (s == "feasible") return BgMode::Feasible;
  if (s == "as-written" || s == "as_written") return BgMode::AsWritten;
  throw Error(ErrorCode::InvalidConfig, "unknown Bates-Granger mode '" + std::string(s) + "'");
}

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v, std::string_view what) {
  if (v.size() == 0) throw Error(ErrorCode::NonFiniteInput, std::string(what) + ": empty input");
  if (!v.allFinite()) throw Error(ErrorCode::NonFiniteInput, std::string(what) + ": non-finite forecast");
}

double combine_equal(const Eigen::Ref<const Eigen::VectorXd>& forecasts) {
  require_finite(forecasts, "P1");
  return forecasts.mean();
}

Eigen::VectorXd equal_weights(int models) {
  return Eigen::VectorXd::Constant(models, 1.0 / static_cast<double>(models));
}

double combine_median(const Eigen::Ref<const Eigen::VectorXd>& forecasts) {
  require_finite(forecasts, "P2");
  std::vector<double> v(forecasts.data(), forecasts.data() + forecasts.size());
  const std::size_t n = v.size(), mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  const double upper = v[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return 0.5 * (lower + upper);
}

Eigen::VectorXd bates_granger_weights(const Eigen::Ref<const Eigen::MatrixXd>& squared_errors) {
  const Eigen::VectorXd sums = squared_errors.colwise().sum().transpose();
  const auto m = sums.size();
  Eigen::VectorXd w(m);
  const auto zeros = (sums.array() == 0.0).count();
  if (zeros > 0) {
    for (Eigen::Index i = 0; i < m; ++i) w(i) = sums(i) == 0.0 ? 1.0 / static_cast<double>(zeros) : 0.0;
    return w;
  }
  w = sums.cwiseInverse();
  return w / w.sum();
}

WeightPath bates_granger_path(const Eigen::Ref<const Eigen::MatrixXd>& forecasts,
                              const Eigen::Ref<const Eigen::VectorXd>& actuals, int horizon, int window,
                              BgMode mode) {
  if (forecasts.rows() != actuals.size()) throw Error(ErrorCode::LengthMismatch, "forecast rows and actuals differ");
  if (horizon < 1) throw Error(ErrorCode::InvalidConfig, "horizon must be >= 1");
  if (window < 0) throw Error(ErrorCode::InvalidConfig, "window must be >= 0");
  if (!forecasts.allFinite() || !actuals.allFinite()) throw Error(ErrorCode::NonFiniteInput, "Bates-Granger input");
  const auto n = forecasts.rows(), m = forecasts.cols();
  const Eigen::MatrixXd sq = (forecasts.colwise() - actuals).array().square();

  WeightPath path;
  path.weights.resize(n, m);
  path.forecast.resize(n);
  path.fallback.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < n; ++k) {
    // Last error row usable when forecasting row k.
    const Eigen::Index last = mode == BgMode::Feasible ? k - horizon : k;
    Eigen::VectorXd w;
    if (last < 0) {
      w = equal_weights(static_cast<int>(m));
      path.fallback[static_cast<std::size_t>(k)] = true;
    } else {
      const Eigen::Index first = window == 0 ? 0 : std::max<Eigen::Index>(0, last - window + 1);
      w = bates_granger_weights(sq.middleRows(first, last - first + 1));
    }
    path.weights.row(k) = w.transpose();
    path.forecast(k) = forecasts.row(k).dot(w);
  }
  return path;
}

LinearCombiner fit_regression_combiner(const Eigen::Ref<const Eigen::MatrixXd>& f,
                                       const Eigen::Ref<const Eigen::VectorXd>& y, Scheme variant) {
  check_fit_block(f, y);
  LinearCombiner c;
  c.scheme = variant;
  c.fit_rows = static_cast<int>(f.rows());
  const auto m = f.cols();
  switch (variant) {
    case Scheme::P5:
    case Scheme::P6: {
      const GramSystem s = GramSystem::from_data(f, y, true, variant == Scheme::P5);
      const Eigen::VectorXd b = solve_or_ridge(s, c.flags);
      s.to_raw(b, c.intercept, c.w);
      break;
    }
    case Scheme::P7: {
      c.w.resize(m);
      if (m == 1) {
        c.w(0) = 1.0;
        c.intercept = (y - f.col(0)).mean();
        break;
      }
      // Reparameterize on the null space of 1'w = 1: the last weight is
      // implied, the others regress y - f_m on f_i - f_m.
      const Eigen::MatrixXd d = f.leftCols(m - 1).colwise() - f.col(m - 1);
      const Eigen::VectorXd r = y - f.col(m - 1);
      const GramSystem s = GramSystem::from_data(d, r, true, true);
      Eigen::VectorXd free;
      s.to_raw(solve_or_ridge(s, c.flags), c.intercept, free);
      c.w.head(m - 1) = free;
      c.w(m - 1) = 1.0 - free.sum();
      break;
    }
    default:
      throw Error(ErrorCode::InvalidConfig, "not a regression combiner");
  }
  return c;
}

LinearCombiner fit_aenet_combiner(const Eigen::Ref<const Eigen::MatrixXd>& f, const Eigen::Ref<const Eigen::VectorXd>& y,
                                  const AenetCombinerOptions& o) {
  check_fit_block(f, y);
  LinearCombiner c;
  c.scheme = Scheme::P8;
  c.fit_rows = static_cast<int>(f.rows());
  const GramSystem s = GramSystem::from_data(f, y, true);

  double lambda = o.fixed_lambda, alpha = o.fixed_alpha, weight_lambda = o.fixed_lambda;
  if (!(o.fixed_lambda > 0.0)) {
    const auto folds = tscv_folds(static_cast<int>(f.rows()), std::max(0, o.horizon - 1), o.cv_splits);
    const auto data = make_fold_data(f, y, folds);
    const AenetTuning t = tune_adaptive_elastic_net(s, data, o.alphas, o.grid_size, o.grid_ratio, o.cv_solver, o.cap);
    lambda = t.aenet.lambda;
    alpha = t.aenet.alpha;
    weight_lambda = t.weight_lambda;
    c.flags |= t.aenet.flags;
  }
  PenaltySpec spec;
  spec.kind = PenaltyKind::AdaptiveElasticNet;
  spec.alpha = alpha;
  spec.adaptive_weights = aenet_weights(s, alpha, weight_lambda, o.fit_solver, o.cap);
  const PenalizedFit fit = solve_penalized(s, spec, lambda, o.fit_solver);
  const Coefficients coef = to_coefficients(s, fit);
  c.intercept = coef.intercept;
  c.w = coef.beta;
  c.flags |= coef.flags;
  c.lambda = lambda;
  c.alpha = alpha;
  return c;
}

ForestCombiner fit_rf_combiner(const Eigen::Ref<const Eigen::MatrixXd>& f, const Eigen::Ref<const Eigen::VectorXd>& y,
                               int trees, std::uint64_t seed, Exec exec) {
  check_fit_block(f, y);
  ForestParams p;
  p.trees = trees;
  p.mtry = default_mtry(static_cast<int>(f.cols()));
  p.min_leaf = 2;
  p.seed = seed;
  ForestCombiner c;
  c.forest = fit_random_forest(f, y, p, exec);
  c.fit_rows = static_cast<int>(f.rows());
  return c;
}

}  // namespace fcomb
