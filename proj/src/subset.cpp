#include "fcomb/subset.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "fcomb/error.hpp"
#include "fcomb/linalg.hpp"

namespace fcomb {

std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (int i = 0; i < k; ++i) {
    r = r * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
    if (r > std::numeric_limits<std::uint64_t>::max()) throw Error(ErrorCode::InvalidConfig, "binomial overflow");
  }
  return static_cast<std::uint64_t>(r);
}

std::uint64_t csr_candidate_count(int env_vars, int cross_vars, int p) {
  const unsigned __int128 total =
      static_cast<unsigned __int128>(binomial(env_vars, p)) * binomial(cross_vars, p);
  if (total > std::numeric_limits<std::uint64_t>::max()) throw Error(ErrorCode::InvalidConfig, "candidate overflow");
  return static_cast<std::uint64_t>(total);
}

std::vector<std::vector<int>> enumerate_combinations(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> c(static_cast<std::size_t>(k));
  std::iota(c.begin(), c.end(), 0);
  while (true) {
    out.push_back(c);
    int i = k - 1;
    while (i >= 0 && c[i] == n - k + i) --i;
    if (i < 0) break;
    ++c[i];
    for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
  }
  return out;
}

std::vector<int> unrank_combination(int n, int k, std::uint64_t rank) {
  if (rank >= binomial(n, k)) throw Error(ErrorCode::InvalidConfig, "combination rank out of range");
  std::vector<int> c;
  c.reserve(static_cast<std::size_t>(k));
  int next = 0;
  for (int i = 0; i < k; ++i) {
    for (;; ++next) {
      const std::uint64_t with = binomial(n - next - 1, k - i - 1);
      if (rank < with) break;
      rank -= with;
    }
    c.push_back(next++);
  }
  return c;
}

std::vector<std::uint64_t> sample_without_replacement(std::uint64_t population, std::uint64_t count, Rng& rng) {
  if (count > population) throw Error(ErrorCode::InvalidConfig, "sample larger than population");
  std::set<std::uint64_t> chosen;
  for (std::uint64_t j = population - count; j < population; ++j) {
    const std::uint64_t t = rng.index(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

std::string SubsetPlan::id() const { return std::string(to_string(scheme)) + "_p" + std::to_string(p); }

SubsetPlan plan_csr(int env_vars, int cross_vars, int p, std::uint64_t seed, int cap) {
  if (p < 1 || p > env_vars || p > cross_vars)
    throw Error(ErrorCode::InvalidConfig, "subset size p=" + std::to_string(p) + " does not fit the blocks");
  SubsetPlan plan;
  plan.scheme = Scheme::P10;
  plan.p = p;
  plan.env_vars = env_vars;
  plan.cross_vars = cross_vars;
  plan.total = csr_candidate_count(env_vars, cross_vars, p);
  const std::uint64_t per_env = binomial(cross_vars, p);

  std::vector<std::uint64_t> ranks;
  if (plan.total <= static_cast<std::uint64_t>(cap)) {
    ranks.resize(plan.total);
    std::iota(ranks.begin(), ranks.end(), std::uint64_t{0});
  } else {
    Rng rng(seed);
    ranks = sample_without_replacement(plan.total, static_cast<std::uint64_t>(cap), rng);
  }
  plan.subsets.reserve(ranks.size());
  for (auto r : ranks)
    plan.subsets.push_back({unrank_combination(env_vars, p, r / per_env), unrank_combination(cross_vars, p, r % per_env)});
  return plan;
}

SubsetPlan plan_rp(int env_cols, int cross_cols, int p, std::uint64_t seed, int draws, int cap) {
  if (p < 1 || env_cols < 1 || cross_cols < 1) throw Error(ErrorCode::InvalidConfig, "invalid projection size");
  if (draws < 1) throw Error(ErrorCode::InvalidConfig, "projection draws must be >= 1");
  SubsetPlan plan;
  plan.scheme = Scheme::P11;
  plan.p = p;
  plan.env_vars = env_cols;
  plan.cross_vars = cross_cols;
  plan.total = static_cast<std::uint64_t>(draws) * static_cast<std::uint64_t>(draws);

  Rng rng(seed);
  auto gaussian = [&](int rows) {
    Eigen::MatrixXd r(rows, p);
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < rows; ++i) r(i, j) = rng.normal();
    return r;
  };
  for (int d = 0; d < draws; ++d) plan.env_projections.push_back(gaussian(env_cols));
  for (int d = 0; d < draws; ++d) plan.cross_projections.push_back(gaussian(cross_cols));

  std::vector<std::uint64_t> ranks;
  if (plan.total <= static_cast<std::uint64_t>(cap)) {
    ranks.resize(plan.total);
    std::iota(ranks.begin(), ranks.end(), std::uint64_t{0});
  } else {
    ranks = sample_without_replacement(plan.total, static_cast<std::uint64_t>(cap), rng);
  }
  for (auto r : ranks) plan.pairs.emplace_back(static_cast<int>(r / draws), static_cast<int>(r % draws));
  return plan;
}

int env_variable_count(const LagDesign& d) { return d.env.size() / d.lag_order; }
int cross_variable_count(const LagDesign& d) { return d.cross.size() / d.lag_order; }

namespace {

struct CandidateFit {
  double intercept = 0.0;
  Eigen::VectorXd beta;  // raw design columns
  std::uint32_t flags = 0;
};

CandidateFit fit_csr_candidate(const LagDesign& d, const CenteredMoments& m, const SubsetCandidate& c) {
  const int lag = d.lag_order;
  std::vector<int> cols;
  for (int j = d.own.begin; j < d.own.end; ++j) cols.push_back(j);
  for (int v : c.env)
    for (int l = 0; l < lag; ++l) cols.push_back(d.env.begin + v * lag + l);
  for (int v : c.cross)
    for (int l = 0; l < lag; ++l) cols.push_back(d.cross.begin + v * lag + l);
  const Coefficients coef = fit_ols(GramSystem::from_moments(m.subset(cols), true));
  CandidateFit out;
  out.intercept = coef.intercept;
  out.beta = Eigen::VectorXd::Zero(d.cols());
  for (std::size_t i = 0; i < cols.size(); ++i) out.beta(cols[i]) = coef.beta(static_cast<Eigen::Index>(i));
  out.flags = coef.flags;
  return out;
}

// Moments of (own, env·R_a, cross·R_b) assembled from per-draw products so a
// pairing costs O(p²·k) rather than a full P×P transform.
class ProjectionMoments {
 public:
  ProjectionMoments(const LagDesign& d, const CenteredMoments& m, const SubsetPlan& plan) : d_(d), m_(m), plan_(plan) {
    const auto o = d.own, e = d.env, c = d.cross;
    const auto draws_e = plan.env_projections.size(), draws_c = plan.cross_projections.size();
    oe_.resize(draws_e);
    ee_.resize(draws_e);
    for (std::size_t a = 0; a < draws_e; ++a) {
      const auto& r = plan.env_projections[a];
      oe_[a] = m.cxx.block(o.begin, e.begin, o.size(), e.size()) * r;
      ee_[a] = r.transpose() * m.cxx.block(e.begin, e.begin, e.size(), e.size()) * r;
    }
    oc_.resize(draws_c);
    cc_.resize(draws_c);
    ec_.resize(draws_c);
    for (std::size_t b = 0; b < draws_c; ++b) {
      const auto& r = plan.cross_projections[b];
      oc_[b] = m.cxx.block(o.begin, c.begin, o.size(), c.size()) * r;
      cc_[b] = r.transpose() * m.cxx.block(c.begin, c.begin, c.size(), c.size()) * r;
      ec_[b] = m.cxx.block(e.begin, c.begin, e.size(), c.size()) * r;
    }
  }

  CandidateFit fit(int a, int b) const {
    const auto o = d_.own, e = d_.env, c = d_.cross;
    const int p = plan_.p, k = o.size() + 2 * p;
    const auto& ra = plan_.env_projections[static_cast<std::size_t>(a)];
    const auto& rb = plan_.cross_projections[static_cast<std::size_t>(b)];
    CenteredMoments pm;
    pm.n = m_.n;
    pm.y_mean = m_.y_mean;
    pm.cyy = m_.cyy;
    pm.x_mean.resize(k);
    pm.x_mean << m_.x_mean.segment(o.begin, o.size()), ra.transpose() * m_.x_mean.segment(e.begin, e.size()),
        rb.transpose() * m_.x_mean.segment(c.begin, c.size());
    pm.cxy.resize(k);
    pm.cxy << m_.cxy.segment(o.begin, o.size()), ra.transpose() * m_.cxy.segment(e.begin, e.size()),
        rb.transpose() * m_.cxy.segment(c.begin, c.size());
    pm.cxx.resize(k, k);
    const int no = o.size();
    pm.cxx.topLeftCorner(no, no) = m_.cxx.block(o.begin, o.begin, no, no);
    pm.cxx.block(0, no, no, p) = oe_[static_cast<std::size_t>(a)];
    pm.cxx.block(0, no + p, no, p) = oc_[static_cast<std::size_t>(b)];
    pm.cxx.block(no, no, p, p) = ee_[static_cast<std::size_t>(a)];
    pm.cxx.block(no + p, no + p, p, p) = cc_[static_cast<std::size_t>(b)];
    pm.cxx.block(no, no + p, p, p) = ra.transpose() * ec_[static_cast<std::size_t>(b)];
    pm.cxx.triangularView<Eigen::StrictlyLower>() = pm.cxx.transpose();

    const Coefficients coef = fit_ols(GramSystem::from_moments(pm, true));
    CandidateFit out;
    out.intercept = coef.intercept;
    out.flags = coef.flags;
    out.beta = Eigen::VectorXd::Zero(d_.cols());
    out.beta.segment(o.begin, no) = coef.beta.head(no);
    out.beta.segment(e.begin, e.size()) = ra * coef.beta.segment(no, p);
    out.beta.segment(c.begin, c.size()) = rb * coef.beta.segment(no + p, p);
    return out;
  }

 private:
  const LagDesign& d_;
  const CenteredMoments& m_;
  const SubsetPlan& plan_;
  std::vector<Eigen::MatrixXd> oe_, ee_, oc_, cc_, ec_;
};

}  // namespace

SubsetEnsemble fit_subset_ensemble(const LagDesign& design, int fit_end, const SubsetPlan& plan, Exec exec) {
  if (fit_end < 2 || fit_end > design.rows()) throw Error(ErrorCode::TooFewRows, "invalid subset fit window");
  if (plan.scheme == Scheme::P10) {
    if (plan.env_vars != env_variable_count(design) || plan.cross_vars != cross_variable_count(design))
      throw Error(ErrorCode::InvalidConfig, "subset plan does not match the design blocks");
  } else if (plan.env_vars != design.env.size() || plan.cross_vars != design.cross.size()) {
    throw Error(ErrorCode::InvalidConfig, "projection plan does not match the design blocks");
  }
  const CenteredMoments m = CenteredMoments::from_data(design.x.topRows(fit_end), design.y.head(fit_end));
  const int n = plan.size();
  std::vector<CandidateFit> fits(static_cast<std::size_t>(n));

  if (plan.scheme == Scheme::P10) {
#pragma omp parallel for schedule(dynamic, 8) if (exec == Exec::Parallel)
    for (int i = 0; i < n; ++i) fits[static_cast<std::size_t>(i)] = fit_csr_candidate(design, m, plan.subsets[i]);
  } else {
    const ProjectionMoments pm(design, m, plan);
#pragma omp parallel for schedule(dynamic, 8) if (exec == Exec::Parallel)
    for (int i = 0; i < n; ++i) {
      const auto [a, b] = plan.pairs[static_cast<std::size_t>(i)];
      fits[static_cast<std::size_t>(i)] = pm.fit(a, b);
    }
  }

  SubsetEnsemble out;
  out.beta = Eigen::VectorXd::Zero(design.cols());
  out.candidates = n;
  for (const auto& f : fits) {
    out.intercept += f.intercept;
    out.beta += f.beta;
    if (f.flags & kFlagRankDeficient) ++out.rank_deficient;
    out.flags |= f.flags;
  }
  out.intercept /= n;
  out.beta /= n;
  return out;
}

SubsetPlan plan_for(const LagDesign& design, Scheme scheme, int p, std::uint64_t seed) {
  if (scheme == Scheme::P10) return plan_csr(env_variable_count(design), cross_variable_count(design), p, seed);
  if (scheme == Scheme::P11) return plan_rp(design.env.size(), design.cross.size(), p, seed);
  throw Error(ErrorCode::InvalidConfig, "not a subset scheme");
}

double csr_forecast(const LagDesign& design, int fit_end, int predict_row, int p, std::uint64_t seed) {
  const auto plan = plan_for(design, Scheme::P10, p, seed);
  return fit_subset_ensemble(design, fit_end, plan).predict(design.x.row(predict_row).transpose());
}

double rp_forecast(const LagDesign& design, int fit_end, int predict_row, int p, std::uint64_t seed) {
  const auto plan = plan_for(design, Scheme::P11, p, seed);
  return fit_subset_ensemble(design, fit_end, plan).predict(design.x.row(predict_row).transpose());
}

}  // namespace fcomb
