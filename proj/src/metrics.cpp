#include "fcomb/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "fcomb/error.hpp"

namespace fcomb {

namespace {

void check_pair(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "series lengths differ");
  if (a.size() == 0) throw Error(ErrorCode::TooFewRows, "empty series");
  if (!a.allFinite() || !b.allFinite()) throw Error(ErrorCode::NonFiniteInput, "non-finite value in metric input");
}

}  // namespace

std::string_view to_string(EvalWindow w) { return w == EvalWindow::FullForecastSet ? "full_forecast_set" : "eval30"; }

double mape(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& f, bool squared) {
  check_pair(y, f);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) == 0.0) throw Error(ErrorCode::ZeroActual, "MAPE undefined for a zero actual");
    const double r = std::abs((y(i) - f(i)) / y(i));
    sum += squared ? r * r : r;
  }
  return 100.0 * sum / static_cast<double>(y.size());
}

double naive_scale(const Eigen::Ref<const Eigen::VectorXd>& targets, const Eigen::Ref<const Eigen::VectorXd>& lag0) {
  check_pair(targets, lag0);
  return (targets - lag0).cwiseAbs().mean();
}

double mase(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& f, double scale) {
  check_pair(y, f);
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::ZeroDenominator, "MASE scale must be positive");
  return (y - f).cwiseAbs().mean() / scale;
}

DmResult dm_test(const Eigen::Ref<const Eigen::VectorXd>& ea, const Eigen::Ref<const Eigen::VectorXd>& eb, int h,
                 double level) {
  check_pair(ea, eb);
  if (h < 1) throw Error(ErrorCode::InvalidConfig, "horizon must be >= 1");
  const auto n = ea.size();
  if (n < kDmMinimumLength) throw Error(ErrorCode::TooFewRows, "DM test needs >= 10 paired errors");

  DmResult r;
  r.n = static_cast<int>(n);
  r.horizon = h;
  const Eigen::VectorXd d = ea.array().square() - eb.array().square();
  const double mean = d.mean();
  const Eigen::VectorXd c = d.array() - mean;
  const double nd = static_cast<double>(n);
  double v = c.squaredNorm() / nd;
  for (int k = 1; k < h && k < n; ++k) v += 2.0 * c.tail(n - k).dot(c.head(n - k)) / nd;

  const bool constant = (d.array() == d(0)).all();
  if (constant || !(v > 0.0)) {
    r.degenerate = true;
    return r;
  }
  const double hd = h;
  const double hln = std::sqrt((nd + 1.0 - 2.0 * hd + hd * (hd - 1.0) / nd) / nd);
  r.statistic = mean / std::sqrt(v / nd) * hln;
  boost::math::students_t dist(nd - 1.0);
  r.p_value = boost::math::cdf(dist, r.statistic);
  r.reject = r.p_value < level;
  return r;
}

NonEquivalenceCell nonequivalence_cell(const Eigen::Ref<const Eigen::MatrixXd>& sub,
                                       const Eigen::Ref<const Eigen::MatrixXd>& combo, int horizon) {
  if (sub.rows() != combo.rows()) throw Error(ErrorCode::LengthMismatch, "error series lengths differ");
  NonEquivalenceCell cell;
  cell.horizon = horizon;
  for (Eigen::Index i = 0; i < sub.cols(); ++i)
    for (Eigen::Index j = 0; j < combo.cols(); ++j) {
      ++cell.pairs;
      if (dm_test(combo.col(j), sub.col(i), horizon).reject) ++cell.significant;
    }
  return cell;
}

std::vector<NonEquivalenceCell> nonequivalence_table(const ForecastStore& store,
                                                     const std::vector<std::string>& diseases,
                                                     const std::vector<int>& horizons,
                                                     const std::vector<std::string>& submodels,
                                                     const std::vector<std::string>& combos) {
  std::vector<NonEquivalenceCell> out;
  for (const auto& disease : diseases) {
    for (int h : horizons) {
      auto errors = [&](const std::vector<std::string>& models) {
        Eigen::MatrixXd e;
        for (std::size_t k = 0; k < models.size(); ++k) {
          const auto s = store.series(disease, h, models[k]);
          if (k == 0) e.resize(s.size(), static_cast<Eigen::Index>(models.size()));
          if (s.size() != e.rows())
            throw Error(ErrorCode::LengthMismatch, models[k] + " has a different forecast count");
          e.col(static_cast<Eigen::Index>(k)) = s.actual - s.forecast;
        }
        return e;
      };
      NonEquivalenceCell cell = nonequivalence_cell(errors(submodels), errors(combos), h);
      cell.disease = disease;
      out.push_back(cell);
    }
  }
  return out;
}

}  // namespace fcomb
