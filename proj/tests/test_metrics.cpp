#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fcomb/error.hpp"
#include "fcomb/metrics.hpp"
#include "fcomb/store.hpp"
#include "test_util.hpp"

using namespace fcomb;
using fcomb::testing::random_vector;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Textbook DM: loop-based autocovariances of the squared-error differential,
// rectangular kernel to lag h-1, then the small-sample factor.
double dm_oracle(const Eigen::VectorXd& ea, const Eigen::VectorXd& eb, int h) {
  const int n = static_cast<int>(ea.size());
  std::vector<double> d(n);
  double mean = 0;
  for (int t = 0; t < n; ++t) {
    d[t] = ea[t] * ea[t] - eb[t] * eb[t];
    mean += d[t];
  }
  mean /= n;
  double v = 0;
  for (int k = 0; k < h; ++k) {
    double g = 0;
    for (int t = k; t < n; ++t) g += (d[t] - mean) * (d[t - k] - mean);
    g /= n;
    v += k == 0 ? g : 2 * g;
  }
  if (!(v > 0)) return std::nan("");  // rectangular HAC can go negative
  const double dm = mean / std::sqrt(v / n);
  return dm * std::sqrt((n + 1.0 - 2.0 * h + h * (h - 1.0) / n) / n);
}

// Two error series with serial correlation (MA(h-1)) and a mild accuracy gap.
void error_pair(int n, int h, std::uint64_t seed, Eigen::VectorXd& a, Eigen::VectorXd& b) {
  Rng rng(seed);
  const Eigen::VectorXd za = random_vector(n + h, rng), zb = random_vector(n + h, rng);
  a.resize(n);
  b.resize(n);
  for (int t = 0; t < n; ++t) {
    a(t) = b(t) = 0;
    for (int k = 0; k < h; ++k) {
      a(t) += za(t + k);
      b(t) += 1.2 * zb(t + k);
    }
  }
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("mape") {
  CHECK(mape(vec({100}), vec({110})) == doctest::Approx(10.0));
  CHECK(mape(vec({100, 200}), vec({100, 200})) == 0.0);
  CHECK(mape(vec({100, 200}), vec({90, 220})) == doctest::Approx(10.0));
  CHECK(mape(vec({100, 200}), vec({90, 220}), true) == doctest::Approx(1.0));  // 100·mean(0.01, 0.01)
  try {
    mape(vec({0, 1}), vec({1, 1}));
    FAIL("expected ZeroActual");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroActual);
  }
  CHECK_THROWS_AS(mape(vec({1, 2}), vec({1})), Error);
}

TEST_CASE("mase") {
  const Eigen::VectorXd train = vec({10, 12, 11, 15, 14});
  const Eigen::VectorXd lag0 = vec({9, 10, 12, 11, 15});
  const double scale = naive_scale(train, lag0);
  CHECK(scale == doctest::Approx((1 + 2 + 1 + 4 + 1) / 5.0));
  // naive forecasts over the training set score exactly 1
  CHECK(mase(train, lag0, scale) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mase(train, train, scale) == 0.0);
  try {
    mase(train, lag0, 0.0);
    FAIL("expected ZeroDenominator");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroDenominator);
  }
}

TEST_CASE("metric invariances") {
  Rng rng(2);
  Eigen::VectorXd y = (random_vector(50, rng).array() * 10 + 100).matrix();
  Eigen::VectorXd f = (y.array() + 5 * random_vector(50, rng).array()).matrix();
  const double m = mape(y, f), s = mase(y, f, 3.0);
  Eigen::VectorXd yr = y.reverse(), fr = f.reverse();
  CHECK(mape(yr, fr) == doctest::Approx(m).epsilon(1e-14));
  CHECK(mase(yr, fr, 3.0) == doctest::Approx(s).epsilon(1e-14));
  CHECK(mape(7.5 * y, 7.5 * f) == doctest::Approx(m).epsilon(1e-14));
  CHECK(mase(7.5 * y, 7.5 * f, 7.5 * 3.0) == doctest::Approx(s).epsilon(1e-14));
  CHECK(m >= 0);
  CHECK(s >= 0);
}

TEST_CASE("diebold mariano against an independent implementation") {
  int degenerate = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int h = 1 + rep % 12;
    const int n = 30 + (rep * 7) % 150;
    Eigen::VectorXd a, b;
    error_pair(n, h, 300 + rep, a, b);
    const DmResult r = dm_test(a, b, h);
    const double oracle = dm_oracle(a, b, h);
    CHECK(r.degenerate == std::isnan(oracle));
    if (r.degenerate) {
      ++degenerate;
      CHECK(!r.reject);
      continue;
    }
    CHECK(std::abs(r.statistic - oracle) < 1e-10);
    CHECK(r.n == n);
    // exact antisymmetry
    const DmResult s = dm_test(b, a, h);
    CHECK(s.statistic == -r.statistic);
    // one-sided p-value from Student-t with n-1 degrees of freedom
    const boost::math::students_t t(n - 1);
    CHECK(r.p_value == doctest::Approx(boost::math::cdf(t, r.statistic)).epsilon(1e-12));
    CHECK(r.reject == (r.p_value < 0.05));
  }
  CHECK(degenerate < 10);
  // the n = 100, h = 4 case
  Eigen::VectorXd a, b;
  error_pair(100, 4, 42, a, b);
  CHECK(std::abs(dm_test(a, b, 4).statistic - dm_oracle(a, b, 4)) < 1e-10);
}

TEST_CASE("diebold mariano edge cases") {
  Rng rng(5);
  const Eigen::VectorXd e = random_vector(40, rng);
  const DmResult same = dm_test(e, e, 2);
  CHECK(same.statistic == 0.0);
  CHECK(!same.reject);
  // constant non-zero differential
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(40, 1.0), b = Eigen::VectorXd::Constant(40, 2.0);
  const DmResult c = dm_test(a, b, 1);
  CHECK(c.degenerate);
  CHECK(!c.reject);
  // a clearly better
  const DmResult better = dm_test(0.1 * e, e, 1);
  CHECK(better.statistic < 0);
  CHECK(better.reject);
  CHECK(!dm_test(e, 0.1 * e, 1).reject);
  CHECK_THROWS_AS(dm_test(e.head(5), e.head(5), 1), Error);
  CHECK_THROWS_AS(dm_test(e, e.head(20), 1), Error);
}

TEST_CASE("non-equivalence cell counts 64 pairs") {
  Rng rng(9);
  const int n = 80;
  Eigen::MatrixXd sub(n, 16), combo(n, 4);
  for (int k = 0; k < 16; ++k) sub.col(k) = (1.0 + 0.1 * k) * random_vector(n, rng);
  for (int c = 0; c < 4; ++c) combo.col(c) = (0.3 + 0.3 * c) * random_vector(n, rng);
  const NonEquivalenceCell cell = nonequivalence_cell(sub, combo, 2);
  CHECK(cell.pairs == 64);
  int brute = 0;
  for (int k = 0; k < 16; ++k)
    for (int c = 0; c < 4; ++c) brute += dm_test(combo.col(c), sub.col(k), 2).reject ? 1 : 0;
  CHECK(cell.significant == brute);
  CHECK(cell.proportion() == doctest::Approx(brute / 64.0));
  // combinations identical to the submodels never win
  const NonEquivalenceCell none = nonequivalence_cell(sub, sub.leftCols(4), 1);
  Eigen::MatrixXd same(n, 16);
  for (int k = 0; k < 16; ++k) same.col(k) = sub.col(0);
  CHECK(nonequivalence_cell(same, same.leftCols(4), 1).significant == 0);
  CHECK(none.pairs == 64);
}

TEST_CASE("non-equivalence table from a store") {
  Rng rng(10);
  ForecastStore store;
  const std::vector<std::string> subs{"A", "B"}, combos{"P1"};
  for (const std::string d : {"x", "y"}) {
    for (int h : {1, 2}) {
      for (int t = 0; t < 30; ++t) {
        const double y = 100 + rng.normal();
        const std::string w = "2015-W" + std::string(t < 9 ? "0" : "") + std::to_string(t + 1);
        store.append({d, h, w, "A", y + 3 * rng.normal(), y});
        store.append({d, h, w, "B", y + 3 * rng.normal(), y});
        store.append({d, h, w, "P1", y + 0.1 * rng.normal(), y});
      }
    }
  }
  const auto table = nonequivalence_table(store, {"x", "y"}, {1, 2}, subs, combos);
  REQUIRE(table.size() == 4);
  for (const auto& c : table) {
    CHECK(c.pairs == 2);
    CHECK(c.significant == 2);
  }
  CHECK(table[1].disease == "x");
  CHECK(table[1].horizon == 2);
  try {
    nonequivalence_table(store, {"x"}, {3}, subs, combos);
    FAIL("expected MissingForecasts");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingForecasts);
  }
}

TEST_CASE("forecast store") {
  ForecastStore s;
  s.append({"b", 2, "2015-W01", "M", 1.5, 2});
  s.append({"a", 1, "2015-W01", "M", 1, 2});
  s.append({"a", 1, "2015-W02", "M", 3, 4});
  s.append({"a", 1, "2015-W01", "N", 5, 2});
  CHECK(s.diseases() == std::vector<std::string>{"b", "a"});
  CHECK(s.models("a", 1) == std::vector<std::string>{"M", "N"});
  const ForecastSeries m = s.series("a", 1, "M");
  CHECK(m.weeks == std::vector<std::string>{"2015-W01", "2015-W02"});
  CHECK(m.forecast(1) == 3);
  CHECK(!s.has("a", 2, "M"));
  CHECK_THROWS_AS(s.series("a", 2, "M"), Error);
  const std::string csv = format_forecast_csv(s);
  CHECK(csv.rfind(std::string(kForecastCsvHeader), 0) == 0);
  CHECK(parse_forecast_csv(csv) == s);
  ForecastStore c = s;
  c.canonicalize({"a", "b"}, {"N", "M"});
  CHECK(c.records()[0].model_id == "N");
  CHECK(c.records()[1].target_week == "2015-W01");
  CHECK(c.records()[2].target_week == "2015-W02");
  CHECK(c.records()[3].disease == "b");
}

}  // TEST_SUITE
