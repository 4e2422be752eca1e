#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "fcomb/combiners.hpp"
#include "fcomb/error.hpp"
#include "fcomb/subset.hpp"
#include "test_util.hpp"

using namespace fcomb;
using fcomb::testing::max_abs_diff;
using fcomb::testing::random_matrix;
using fcomb::testing::random_vector;
using fcomb::testing::toy_panel;

namespace {

// Forecast matrix around a positive truth with model-specific noise levels.
void forecast_panel(int rows, int models, std::uint64_t seed, Eigen::MatrixXd& f, Eigen::VectorXd& y) {
  Rng rng(seed);
  y.resize(rows);
  f.resize(rows, models);
  for (int i = 0; i < rows; ++i) {
    y(i) = 200 + 20 * std::sin(i * 0.3) + 5 * rng.normal();
    for (int k = 0; k < models; ++k) f(i, k) = y(i) + (1.0 + k) * rng.normal() + 0.5 * k;
  }
}

// Bates–Granger path computed row by row from its definition.
Eigen::MatrixXd bg_oracle(const Eigen::MatrixXd& f, const Eigen::VectorXd& y, int h, int window, bool feasible) {
  const int n = static_cast<int>(f.rows()), m = static_cast<int>(f.cols());
  Eigen::MatrixXd w(n, m);
  for (int i = 0; i < n; ++i) {
    const int last = feasible ? i - h : i;  // newest usable row
    if (last < 0) {
      w.row(i).setConstant(1.0 / m);
      continue;
    }
    const int first = window == 0 ? 0 : std::max(0, last - window + 1);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
    for (int j = first; j <= last; ++j)
      for (int k = 0; k < m; ++k) s(k) += std::pow(y(j) - f(j, k), 2);
    Eigen::VectorXd inv = s.cwiseInverse();
    w.row(i) = (inv / inv.sum()).transpose();
  }
  return w;
}

}  // namespace

TEST_SUITE("combiners") {

TEST_CASE("equal weights") {
  CHECK(combine_equal(Eigen::VectorXd::Constant(16, 7.0)) == 7.0);
  const Eigen::VectorXd w = equal_weights(16);
  CHECK((w.array() == 0.0625).all());
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::VectorXd f = (random_vector(16, rng).array() * 30 + 100).matrix();
    const double y = 100 + 10 * rng.normal();
    const double combo = combine_equal(f);
    CHECK(combo >= f.minCoeff());
    CHECK(combo <= f.maxCoeff());
    const double ape = std::abs((y - combo) / y);
    const double mean_ape = ((f.array() - y) / y).abs().mean();
    CHECK(ape <= mean_ape + 1e-15);
  }
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(16);
  bad(3) = std::nan("");
  CHECK_THROWS_AS(combine_equal(bad), Error);
}

TEST_CASE("median") {
  Eigen::VectorXd f = Eigen::VectorXd::Constant(16, 5.0);
  f(9) = 100;
  CHECK(combine_median(f) == 5.0);
  CHECK(combine_median(Eigen::VectorXd::Constant(16, 3.5)) == 3.5);
  Eigen::VectorXd even(4);
  even << 4, 1, 3, 2;
  CHECK(combine_median(even) == 2.5);
  Eigen::VectorXd odd(3);
  odd << 9, 1, 4;
  CHECK(combine_median(odd) == 4.0);
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::VectorXd v = random_vector(16, rng);
    const double m = combine_median(v);
    CHECK(m >= v.minCoeff());
    CHECK(m <= v.maxCoeff());
  }
}

TEST_CASE("bates granger weights") {
  Eigen::MatrixXd e(1, 2);
  e << 1, 3;
  const Eigen::VectorXd w = bates_granger_weights(e);
  CHECK(w(0) == doctest::Approx(0.75));
  CHECK(w(1) == doctest::Approx(0.25));
  const Eigen::VectorXd same = bates_granger_weights(Eigen::MatrixXd::Constant(3, 16, 2.0));
  for (int k = 0; k < 16; ++k) CHECK(same(k) == doctest::Approx(1.0 / 16).epsilon(1e-14));
  Eigen::MatrixXd zero(2, 4);
  zero << 0, 1, 0, 2, 0, 1, 0, 2;
  const Eigen::VectorXd z = bates_granger_weights(zero);
  CHECK(z(0) == 0.5);
  CHECK(z(2) == 0.5);
  CHECK(z(1) == 0.0);
  CHECK(z(3) == 0.0);
  // permutation equivariance
  Rng rng(3);
  const Eigen::MatrixXd sq = random_matrix(5, 16, rng).array().square();
  std::vector<int> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[9]);
  Eigen::MatrixXd sp(5, 16);
  for (int k = 0; k < 16; ++k) sp.col(k) = sq.col(perm[k]);
  const Eigen::VectorXd a = bates_granger_weights(sq), b = bates_granger_weights(sp);
  for (int k = 0; k < 16; ++k) CHECK(b(k) == doctest::Approx(a(perm[k])).epsilon(1e-14));
  CHECK(std::abs(a.sum() - 1.0) < 1e-12);
  CHECK(a.minCoeff() >= 0.0);
}

TEST_CASE("bates granger paths follow their definitions") {
  Eigen::MatrixXd f;
  Eigen::VectorXd y;
  forecast_panel(40, 16, 4, f, y);
  for (int h : {1, 3, 12}) {
    for (int window : {1, 0}) {
      for (BgMode mode : {BgMode::Feasible, BgMode::AsWritten}) {
        const WeightPath p = bates_granger_path(f, y, h, window, mode);
        const Eigen::MatrixXd oracle = bg_oracle(f, y, h, window, mode == BgMode::Feasible);
        CHECK((p.weights - oracle).cwiseAbs().maxCoeff() < 1e-14);
        for (int i = 0; i < 40; ++i) {
          CHECK(std::abs(p.weights.row(i).sum() - 1.0) < 1e-12);
          CHECK(p.weights.row(i).minCoeff() >= 0.0);
          CHECK(p.forecast(i) == doctest::Approx(p.weights.row(i).dot(f.row(i))).epsilon(1e-14));
          CHECK(p.forecast(i) >= f.row(i).minCoeff() - 1e-9);
          CHECK(p.forecast(i) <= f.row(i).maxCoeff() + 1e-9);
          if (mode == BgMode::Feasible) CHECK(p.fallback[i] == (i < h));
        }
      }
    }
  }
}

TEST_CASE("feasible weights ignore the row being forecast") {
  Eigen::MatrixXd f;
  Eigen::VectorXd y;
  forecast_panel(30, 16, 5, f, y);
  const WeightPath base = bates_granger_path(f, y, 2, 0);
  Eigen::VectorXd y2 = y;
  y2.tail(10).setConstant(1e5);
  const WeightPath moved = bates_granger_path(f, y2, 2, 0);
  // rows up to index 21 only use actuals up to row 19
  CHECK(base.weights.topRows(22) == moved.weights.topRows(22));
  CHECK(base.weights.row(22) != moved.weights.row(22));
}

TEST_CASE("regression combiners") {
  Eigen::MatrixXd f;
  Eigen::VectorXd y;
  forecast_panel(60, 16, 6, f, y);
  SUBCASE("P5 matches the normal equations") {
    Eigen::MatrixXd xa(60, 17);
    xa.col(0).setOnes();
    xa.rightCols(16) = f;
    const Eigen::VectorXd oracle = (xa.transpose() * xa).ldlt().solve(xa.transpose() * y);
    const LinearCombiner c = fit_regression_combiner(f, y, Scheme::P5);
    CHECK(std::abs(c.intercept - oracle(0)) < 1e-8 * std::max(1.0, std::abs(oracle(0))));
    CHECK(max_abs_diff(c.w, oracle.tail(16)) < 1e-8);
    CHECK(c.fit_rows == 60);
  }
  SUBCASE("P6 has no intercept") {
    const Eigen::VectorXd oracle = (f.transpose() * f).ldlt().solve(f.transpose() * y);
    const LinearCombiner c = fit_regression_combiner(f, y, Scheme::P6);
    CHECK(c.intercept == 0.0);
    CHECK(max_abs_diff(c.w, oracle) < 1e-8);
  }
  SUBCASE("P7 solves the constrained problem") {
    // KKT system of min ||y - a - Fw||² s.t. 1'w = 1
    Eigen::MatrixXd xa(60, 17);
    xa.col(0).setOnes();
    xa.rightCols(16) = f;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(18, 18);
    kkt.topLeftCorner(17, 17) = 2 * xa.transpose() * xa;
    kkt.block(17, 1, 1, 16).setOnes();
    kkt.block(1, 17, 16, 1).setOnes();
    Eigen::VectorXd rhs(18);
    rhs.head(17) = 2 * xa.transpose() * y;
    rhs(17) = 1;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    const LinearCombiner c = fit_regression_combiner(f, y, Scheme::P7);
    CHECK(std::abs(c.w.sum() - 1.0) < 1e-10);
    CHECK(max_abs_diff(c.w, sol.segment(1, 16)) < 1e-7);
    CHECK(std::abs(c.intercept - sol(0)) < 1e-6);
  }
  SUBCASE("P7 with one model") {
    const LinearCombiner c = fit_regression_combiner(f.leftCols(1), y, Scheme::P7);
    CHECK(c.w(0) == 1.0);
  }
  SUBCASE("collinear forecasts") {
    Eigen::MatrixXd g = f;
    g.col(5) = g.col(4);
    const LinearCombiner c = fit_regression_combiner(g, y, Scheme::P5);
    CHECK((c.flags & kFlagCollinearForecasts) != 0);
    CHECK(c.w.allFinite());
    const LinearCombiner c7 = fit_regression_combiner(g, y, Scheme::P7);
    CHECK(std::abs(c7.w.sum() - 1.0) < 1e-10);
  }
  SUBCASE("too few rows") {
    try {
      fit_regression_combiner(f.topRows(17), y.head(17), Scheme::P5);
      FAIL("expected TooFewRows");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooFewRows);
    }
    CHECK_NOTHROW(fit_regression_combiner(f.topRows(18), y.head(18), Scheme::P5));
  }
}

TEST_CASE("P7 sums to one on many random fits") {
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::MatrixXd f;
    Eigen::VectorXd y;
    forecast_panel(30 + rep, 16, 100 + rep, f, y);
    CHECK(std::abs(fit_regression_combiner(f, y, Scheme::P7).w.sum() - 1.0) < 1e-10);
  }
}

TEST_CASE("adaptive elastic net combiner") {
  Rng rng(7);
  const int n = 120;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = 300 + 40 * std::sin(i * 0.2) + 10 * rng.normal();
  Eigen::MatrixXd f(n, 16);
  for (int k = 0; k < 16; ++k) f.col(k) = (300 + 10 * random_vector(n, rng).array()).matrix();
  f.col(3) = y;
  const LinearCombiner c = fit_aenet_combiner(f, y);
  CHECK(c.w(3) > 0.5);
  for (int k = 0; k < 16; ++k)
    if (k != 3) CHECK(c.w(k) == 0.0);
  // vanishing penalty reproduces P5
  Eigen::MatrixXd g;
  Eigen::VectorXd yy;
  forecast_panel(80, 16, 8, g, yy);
  AenetCombinerOptions opt;
  opt.fixed_lambda = 1e-14;
  opt.fit_solver = SolverOptions{1e-24, 2000000, false};
  const LinearCombiner limit = fit_aenet_combiner(g, yy, opt);
  const LinearCombiner p5 = fit_regression_combiner(g, yy, Scheme::P5);
  CHECK(max_abs_diff(limit.w, p5.w) < 1e-5);
}

TEST_CASE("forest combiner") {
  Eigen::MatrixXd f;
  Eigen::VectorXd y;
  forecast_panel(50, 16, 9, f, y);
  const ForestCombiner a = fit_rf_combiner(f, y, 50, 11, Exec::Serial);
  const ForestCombiner b = fit_rf_combiner(f, y, 50, 11, Exec::Parallel);
  for (int i = 0; i < 50; ++i) {
    const double pa = a.predict(f.row(i).transpose());
    CHECK(pa == b.predict(f.row(i).transpose()));
    CHECK(pa >= y.minCoeff());
    CHECK(pa <= y.maxCoeff());
  }
  const ForestCombiner flat = fit_rf_combiner(f, Eigen::VectorXd::Constant(50, 12.0), 20, 1, Exec::Serial);
  CHECK(flat.predict(f.row(3).transpose()) == 12.0);
}

TEST_CASE("subset combinatorics") {
  CHECK(binomial(12, 2) == 66);
  CHECK(binomial(15, 3) == 455);
  CHECK(binomial(60, 30) == 118264581564861424ull);
  CHECK(csr_candidate_count(12, 15, 1) == 180);
  CHECK(csr_candidate_count(12, 15, 2) == 6930);
  CHECK(csr_candidate_count(12, 15, 3) == 100100);
  // enumeration agrees with a nested-loop oracle
  std::set<std::vector<int>> oracle;
  for (int a = 0; a < 12; ++a)
    for (int b = a + 1; b < 12; ++b) oracle.insert({a, b});
  const auto all = enumerate_combinations(12, 2);
  CHECK(all.size() == 66);
  CHECK(std::set<std::vector<int>>(all.begin(), all.end()) == oracle);
  for (std::uint64_t r = 0; r < all.size(); ++r) CHECK(unrank_combination(12, 2, r) == all[r]);
  const auto c3 = enumerate_combinations(15, 3);
  for (std::uint64_t r = 0; r < c3.size(); r += 7) CHECK(unrank_combination(15, 3, r) == c3[r]);
}

TEST_CASE("sampling without replacement") {
  Rng rng(1);
  const auto s = sample_without_replacement(100100, 1000, rng);
  CHECK(s.size() == 1000);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK(s.back() < 100100);
  Rng r2(1);
  CHECK(sample_without_replacement(10, 10, r2) == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("subset plans") {
  const SubsetPlan p1 = plan_csr(12, 15, 1, 5);
  CHECK(p1.total == 180);
  CHECK(p1.size() == 180);
  std::set<SubsetCandidate> got(p1.subsets.begin(), p1.subsets.end()), want;
  for (int e = 0; e < 12; ++e)
    for (int c = 0; c < 15; ++c) want.insert(SubsetCandidate{{e}, {c}});
  CHECK(got == want);
  CHECK(p1.id() == "P10_p1");
  for (int p : {2, 3}) {
    const SubsetPlan pl = plan_csr(12, 15, p, 5);
    CHECK(pl.total == csr_candidate_count(12, 15, p));
    CHECK(pl.size() == 1000);
    std::set<SubsetCandidate> distinct(pl.subsets.begin(), pl.subsets.end());
    CHECK(distinct.size() == 1000);
    for (const auto& c : pl.subsets) {
      CHECK(static_cast<int>(c.env.size()) == p);
      CHECK(static_cast<int>(c.cross.size()) == p);
    }
    CHECK(plan_csr(12, 15, p, 5).subsets == pl.subsets);
    CHECK(plan_csr(12, 15, p, 6).subsets != pl.subsets);
  }
  for (int p : {1, 2, 3}) {
    const SubsetPlan rp = plan_rp(96, 120, p, 3);
    CHECK(rp.total == 10000);
    CHECK(rp.size() == 1000);
    REQUIRE(rp.env_projections.size() == 100);
    REQUIRE(rp.cross_projections.size() == 100);
    CHECK(rp.env_projections[0].rows() == 96);
    CHECK(rp.env_projections[0].cols() == p);
    CHECK(rp.cross_projections[7].rows() == 120);
    CHECK(rp.cross_projections[7].cols() == p);
    std::set<std::pair<int, int>> pairs(rp.pairs.begin(), rp.pairs.end());
    CHECK(pairs.size() == 1000);
    CHECK(rp.id() == "P11_p" + std::to_string(p));
  }
  // draws look standard normal
  const SubsetPlan rp = plan_rp(96, 120, 3, 4);
  double s = 0, ss = 0;
  int n = 0;
  for (const auto& m : rp.env_projections)
    for (Eigen::Index i = 0; i < m.size(); ++i) s += m.data()[i], ss += m.data()[i] * m.data()[i], ++n;
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(ss / n - 1.0) < 0.03);
}

TEST_CASE("subset ensembles average their candidate regressions") {
  const SeriesPanel panel = toy_panel(150, 4, 3, 31);
  const LagDesign d = build_lag_design(panel, "d2", 2, PredictorSpec::C);
  CHECK(env_variable_count(d) == 3);
  CHECK(cross_variable_count(d) == 3);
  const int fit_end = 100, row = 120;
  SUBCASE("complete subsets") {
    const SubsetPlan plan = plan_csr(3, 3, 1, 1);
    const SubsetEnsemble e = fit_subset_ensemble(d, fit_end, plan, Exec::Serial);
    double oracle = 0;
    for (const auto& c : plan.subsets) {
      std::vector<int> cols;
      for (int l = 0; l < 8; ++l) cols.push_back(l);
      for (int v : c.env)
        for (int l = 0; l < 8; ++l) cols.push_back(d.env.begin + 8 * v + l);
      for (int v : c.cross)
        for (int l = 0; l < 8; ++l) cols.push_back(d.cross.begin + 8 * v + l);
      Eigen::MatrixXd xs(fit_end, static_cast<Eigen::Index>(cols.size()));
      Eigen::VectorXd q(static_cast<Eigen::Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) {
        xs.col(static_cast<Eigen::Index>(j)) = d.x.col(cols[j]).head(fit_end);
        q(static_cast<Eigen::Index>(j)) = d.x(row, cols[j]);
      }
      oracle += fit_ols(xs, d.y.head(fit_end)).predict(q);
    }
    oracle /= plan.size();
    CHECK(e.candidates == 9);
    CHECK(e.predict(d.x.row(row).transpose()) == doctest::Approx(oracle).epsilon(1e-9));
    const SubsetEnsemble par = fit_subset_ensemble(d, fit_end, plan, Exec::Parallel);
    CHECK(par.beta == e.beta);
    CHECK(par.intercept == e.intercept);
  }
  SUBCASE("random projections") {
    const SubsetPlan plan = plan_rp(24, 24, 2, 9, 10, 30);
    const SubsetEnsemble e = fit_subset_ensemble(d, fit_end, plan, Exec::Serial);
    double oracle = 0;
    for (const auto& [a, b] : plan.pairs) {
      Eigen::MatrixXd xs(fit_end, 12);
      xs.leftCols(8) = d.x.leftCols(8).topRows(fit_end);
      xs.middleCols(8, 2) = d.x.middleCols(d.env.begin, 24).topRows(fit_end) * plan.env_projections[a];
      xs.rightCols(2) = d.x.middleCols(d.cross.begin, 24).topRows(fit_end) * plan.cross_projections[b];
      Eigen::VectorXd q(12);
      q.head(8) = d.x.row(row).head(8).transpose();
      q.segment(8, 2) = plan.env_projections[a].transpose() * d.x.row(row).segment(d.env.begin, 24).transpose();
      q.tail(2) = plan.cross_projections[b].transpose() * d.x.row(row).segment(d.cross.begin, 24).transpose();
      oracle += fit_ols(xs, d.y.head(fit_end)).predict(q);
    }
    oracle /= plan.size();
    CHECK(e.candidates == 30);
    CHECK(e.predict(d.x.row(row).transpose()) == doctest::Approx(oracle).epsilon(1e-9));
    const SubsetEnsemble par = fit_subset_ensemble(d, fit_end, plan, Exec::Parallel);
    CHECK(par.beta == e.beta);
  }
  SUBCASE("one-shot forecasts are seed deterministic") {
    CHECK(csr_forecast(d, fit_end, row, 2, 3) == csr_forecast(d, fit_end, row, 2, 3));
    CHECK(rp_forecast(d, fit_end, row, 1, 3) == rp_forecast(d, fit_end, row, 1, 3));
    CHECK(rp_forecast(d, fit_end, row, 1, 3) != rp_forecast(d, fit_end, row, 1, 4));
  }
}

}  // TEST_SUITE
