#include "fcomb/factor.hpp"

#include <Eigen/Eigenvalues>

#include "fcomb/error.hpp"

namespace fcomb {

double FactorBasis::cumulative_explained() const {
  return components == 0 ? 0.0 : explained_variance_ratio.head(components).sum();
}

Eigen::VectorXd FactorBasis::project(const Eigen::Ref<const Eigen::VectorXd>& raw) const {
  Eigen::VectorXd z(raw.size());
  for (Eigen::Index j = 0; j < raw.size(); ++j) z(j) = scale(j) > 0 ? (raw(j) - mean(j)) / scale(j) : 0.0;
  return loadings.transpose() * z;
}

FactorBasis extract_factors(const GramSystem& system, const Eigen::Ref<const Eigen::MatrixXd>& fit_block,
                            double threshold) {
  FactorBasis basis;
  const int p = system.dim();
  basis.mean = system.x_mean;
  basis.scale = system.scale;
  if (p == 0) return basis;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(system.gram);
  // Eigen returns ascending order.
  const Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
  const double total = values.sum();
  if (!(total > 0.0)) return basis;

  basis.explained_variance_ratio = values / total;
  double cumulative = 0.0;
  int r = 0;
  while (r < p) {
    cumulative += basis.explained_variance_ratio(r);
    ++r;
    if (cumulative >= threshold - 1e-12) break;
  }
  basis.components = r;
  basis.loadings.resize(p, r);
  for (int c = 0; c < r; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(p - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.loadings.col(c) = v;
  }

  Eigen::MatrixXd z(fit_block.rows(), p);
  for (int j = 0; j < p; ++j) {
    if (basis.scale(j) > 0)
      z.col(j) = (fit_block.col(j).array() - basis.mean(j)) / basis.scale(j);
    else
      z.col(j).setZero();
  }
  basis.scores = z * basis.loadings;
  return basis;
}

double FactorModel::predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const {
  Eigen::VectorXd reg(own.size() + basis.components);
  reg.head(own.size()) = raw_row.segment(own.begin, own.size());
  if (basis.components > 0) reg.tail(basis.components) = basis.project(raw_row.segment(exog.begin, exog.size()));
  return coefficients.predict(reg);
}

FactorModel fit_factor_model(const LagDesign& design, int fit_end, const GramSystem* standardized,
                             double threshold) {
  if (fit_end < 2) throw Error(ErrorCode::TooFewRows, "factor model needs >= 2 fit rows");
  FactorModel model;
  model.own = design.own;
  model.exog = {design.own.end, design.cols()};
  const auto fit_rows = design.x.topRows(fit_end);
  const auto exog_block = fit_rows.middleCols(model.exog.begin, model.exog.size());

  if (model.exog.size() > 0) {
    GramSystem sub;
    if (standardized) {
      const int b = model.exog.begin, k = model.exog.size();
      sub.n = standardized->n;
      sub.x_mean = standardized->x_mean.segment(b, k);
      sub.scale = standardized->scale.segment(b, k);
      sub.zero_variance.assign(standardized->zero_variance.begin() + b, standardized->zero_variance.begin() + b + k);
      sub.gram = standardized->gram.block(b, b, k, k);
    } else {
      sub = GramSystem::from_data(exog_block, design.y.head(fit_end), true);
    }
    model.basis = extract_factors(sub, exog_block, threshold);
  }
  if (model.basis.components == 0) {
    model.flags |= kFlagDegeneratePca;
    model.basis.loadings.resize(model.exog.size(), 0);
    if (model.basis.mean.size() == 0) {
      model.basis.mean = Eigen::VectorXd::Zero(model.exog.size());
      model.basis.scale = Eigen::VectorXd::Zero(model.exog.size());
    }
  }

  const int r = model.basis.components;
  Eigen::MatrixXd reg(fit_end, model.own.size() + r);
  reg.leftCols(model.own.size()) = fit_rows.middleCols(model.own.begin, model.own.size());
  if (r > 0) reg.rightCols(r) = model.basis.scores;
  model.coefficients = fit_ols(reg, design.y.head(fit_end));
  model.flags |= model.coefficients.flags;
  return model;
}

}  // namespace fcomb
