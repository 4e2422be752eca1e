#include "fcomb/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "fcomb/error.hpp"

namespace fcomb {

namespace {

constexpr double kPivotTolerance = 1e-12;
constexpr double kEigenTolerance = 1e-12;

}  // namespace

CenteredMoments CenteredMoments::from_data(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                           const Eigen::Ref<const Eigen::VectorXd>& y) {
  CenteredMoments m;
  m.n = static_cast<int>(x.rows());
  if (m.n == 0) throw Error(ErrorCode::TooFewRows, "moments of an empty block");
  m.x_mean = x.colwise().mean().transpose();
  m.y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - m.x_mean.transpose();
  const Eigen::VectorXd yc = y.array() - m.y_mean;
  m.cxx = xc.transpose() * xc;
  m.cxy = xc.transpose() * yc;
  m.cyy = yc.squaredNorm();
  return m;
}

CenteredMoments CenteredMoments::subset(std::span<const int> cols) const {
  CenteredMoments m;
  const auto k = static_cast<Eigen::Index>(cols.size());
  m.n = n;
  m.y_mean = y_mean;
  m.cyy = cyy;
  m.x_mean.resize(k);
  m.cxy.resize(k);
  m.cxx.resize(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    m.x_mean(a) = x_mean(cols[a]);
    m.cxy(a) = cxy(cols[a]);
    for (Eigen::Index b = 0; b < k; ++b) m.cxx(a, b) = cxx(cols[a], cols[b]);
  }
  return m;
}

CenteredMoments CenteredMoments::transform(const Eigen::Ref<const Eigen::MatrixXd>& t) const {
  CenteredMoments m;
  m.n = n;
  m.y_mean = y_mean;
  m.cyy = cyy;
  m.x_mean = t.transpose() * x_mean;
  m.cxy = t.transpose() * cxy;
  m.cxx = t.transpose() * cxx.selfadjointView<Eigen::Lower>() * t;
  return m;
}

MomentAccumulator::MomentAccumulator(const Eigen::Ref<const Eigen::VectorXd>& x_shift, double y_shift)
    : x_shift_(x_shift), y_shift_(y_shift) {
  const auto p = x_shift.size();
  sxx_ = Eigen::MatrixXd::Zero(p, p);
  sx_ = Eigen::VectorXd::Zero(p);
  sxy_ = Eigen::VectorXd::Zero(p);
}

void MomentAccumulator::add_row(const Eigen::Ref<const Eigen::RowVectorXd>& x, double y) {
  const Eigen::VectorXd v = x.transpose() - x_shift_;
  const double w = y - y_shift_;
  sxx_.selfadjointView<Eigen::Lower>().rankUpdate(v);
  sx_ += v;
  sxy_ += w * v;
  sy_ += w;
  syy_ += w * w;
  ++n_;
}

void MomentAccumulator::add_rows(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& y, int begin, int end) {
  if (end <= begin) return;
  const Eigen::MatrixXd v = x.middleRows(begin, end - begin).rowwise() - x_shift_.transpose();
  const Eigen::VectorXd w = y.segment(begin, end - begin).array() - y_shift_;
  sxx_.selfadjointView<Eigen::Lower>().rankUpdate(v.transpose());
  sx_ += v.colwise().sum().transpose();
  sxy_ += v.transpose() * w;
  sy_ += w.sum();
  syy_ += w.squaredNorm();
  n_ += end - begin;
}

CenteredMoments MomentAccumulator::moments() const {
  if (n_ == 0) throw Error(ErrorCode::TooFewRows, "no rows accumulated");
  CenteredMoments m;
  const double n = n_;
  m.n = n_;
  m.x_mean = x_shift_ + sx_ / n;
  m.y_mean = y_shift_ + sy_ / n;
  m.cxx = sxx_.selfadjointView<Eigen::Lower>();
  m.cxx.noalias() -= sx_ * sx_.transpose() / n;
  m.cxy = sxy_ - sx_ * (sy_ / n);
  m.cyy = syy_ - sy_ * sy_ / n;
  return m;
}

GramSystem GramSystem::from_moments(const CenteredMoments& m, bool standardize) {
  GramSystem g;
  const int p = m.dim();
  const double n = m.n;
  g.n = m.n;
  g.intercept = true;
  g.x_mean = m.x_mean;
  g.y_mean = m.y_mean;
  g.scale.resize(p);
  g.zero_variance.assign(static_cast<std::size_t>(p), false);
  for (int j = 0; j < p; ++j) {
    const double var = m.cxx(j, j) / std::max(1.0, n - 1.0);
    const double sd = var > 0 ? std::sqrt(var) : 0.0;
    if (!(sd > 1e-12 * (1.0 + std::abs(m.x_mean(j))))) {
      g.zero_variance[j] = true;
      g.scale(j) = 0.0;
    } else {
      g.scale(j) = standardize ? sd : 1.0;
    }
  }
  Eigen::VectorXd inv(p);
  for (int j = 0; j < p; ++j) inv(j) = g.zero_variance[j] ? 0.0 : 1.0 / g.scale(j);
  g.gram = inv.asDiagonal() * m.cxx * inv.asDiagonal() / n;
  g.xty = inv.cwiseProduct(m.cxy) / n;
  g.yty = m.cyy / n;
  return g;
}

GramSystem GramSystem::from_data(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& y, bool standardize,
                                 bool intercept) {
  if (intercept) return from_moments(CenteredMoments::from_data(x, y), standardize);
  GramSystem g;
  const auto p = x.cols();
  const double n = static_cast<double>(x.rows());
  g.n = static_cast<int>(x.rows());
  g.intercept = false;
  g.x_mean = Eigen::VectorXd::Zero(p);
  g.y_mean = 0.0;
  g.scale.resize(p);
  g.zero_variance.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double rms = std::sqrt(x.col(j).squaredNorm() / n);
    if (!(rms > 0)) {
      g.zero_variance[j] = true;
      g.scale(j) = 0.0;
    } else {
      g.scale(j) = standardize ? rms : 1.0;
    }
  }
  Eigen::VectorXd inv(p);
  for (Eigen::Index j = 0; j < p; ++j) inv(j) = g.zero_variance[j] ? 0.0 : 1.0 / g.scale(j);
  const Eigen::MatrixXd z = x * inv.asDiagonal();
  g.gram = z.transpose() * z / n;
  g.xty = z.transpose() * y / n;
  g.yty = y.squaredNorm() / n;
  return g;
}

void GramSystem::to_raw(const Eigen::Ref<const Eigen::VectorXd>& b, double& intercept_out,
                        Eigen::VectorXd& beta_out) const {
  beta_out.resize(b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j) beta_out(j) = zero_variance[j] ? 0.0 : b(j) / scale(j);
  intercept_out = intercept ? y_mean - x_mean.dot(beta_out) : 0.0;
}

double GramSystem::half_mse(const Eigen::Ref<const Eigen::VectorXd>& b) const {
  return 0.5 * (yty - 2.0 * b.dot(xty) + b.dot(gram.selfadjointView<Eigen::Lower>() * b));
}

Eigen::VectorXd solve_symmetric(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                                const Eigen::Ref<const Eigen::VectorXd>& rhs,
                                const std::vector<bool>& inactive, std::uint32_t& flags) {
  const auto p = gram.rows();
  std::vector<int> active;
  for (Eigen::Index j = 0; j < p; ++j)
    if (inactive.empty() || !inactive[j]) active.push_back(static_cast<int>(j));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  const auto k = static_cast<Eigen::Index>(active.size());
  if (k == 0) return out;

  Eigen::MatrixXd a(k, k);
  Eigen::VectorXd r(k);
  double max_diag = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    r(i) = rhs(active[i]);
    for (Eigen::Index j = 0; j < k; ++j) a(i, j) = gram(active[i], active[j]);
    max_diag = std::max(max_diag, a(i, i));
  }

  Eigen::VectorXd sol;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const auto diag = llt.matrixLLT().diagonal();
    ok = diag.minCoeff() * diag.minCoeff() > kPivotTolerance * max_diag;
  }
  if (ok) {
    sol = llt.solve(r);
  } else {
    flags |= kFlagRankDeficient;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    const Eigen::VectorXd& values = eig.eigenvalues();
    const double tol = kEigenTolerance * std::max(values.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd proj = eig.eigenvectors().transpose() * r;
    for (Eigen::Index i = 0; i < k; ++i) proj(i) = values(i) > tol ? proj(i) / values(i) : 0.0;
    sol = eig.eigenvectors() * proj;
  }
  for (Eigen::Index i = 0; i < k; ++i) out(active[i]) = sol(i);
  return out;
}

Eigen::VectorXd ols_system_coefficients(const GramSystem& system, std::uint32_t& flags) {
  return solve_symmetric(system.gram, system.xty, system.zero_variance, flags);
}

Coefficients fit_ols(const GramSystem& system) {
  Coefficients c;
  const Eigen::VectorXd b = ols_system_coefficients(system, c.flags);
  system.to_raw(b, c.intercept, c.beta);
  return c;
}

Coefficients fit_ols(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
  return fit_ols(GramSystem::from_data(x, y, true));
}

}  // namespace fcomb
