#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fcomb/error.hpp"
#include "fcomb/panel.hpp"
#include "fcomb/synthgen.hpp"

using namespace fcomb;

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// OLS slope of x_t on x_{t-1} with intercept.
double lag1_slope(const std::vector<double>& x) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t t = 1; t < n; ++t) {
    mx += x[t - 1];
    my += x[t];
  }
  mx /= static_cast<double>(n - 1);
  my /= static_cast<double>(n - 1);
  double sxy = 0, sxx = 0;
  for (std::size_t t = 1; t < n; ++t) {
    sxy += (x[t - 1] - mx) * (x[t] - my);
    sxx += (x[t - 1] - mx) * (x[t - 1] - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST_SUITE("synthgen") {

TEST_CASE("default panel layout and determinism") {
  const DgpSpec spec = default_dgp_spec(11, 522);
  CHECK(spec.spectral_radius() < 1.0);
  const SeriesPanel a = generate_panel(spec);
  CHECK(a.length() == 522);
  CHECK(a.diseases().size() == 16);
  CHECK(a.env().size() == 12);
  CHECK(a == generate_panel(spec));
  CHECK(!(a == generate_panel(default_dgp_spec(12, 522))));
  for (const auto& s : a.diseases())
    for (double y : s.values) {
      CHECK(y >= 1.0);
      CHECK(y == std::round(y));
    }
  CHECK(a.weeks().front() == "2009-W01");
}

TEST_CASE("csv and json round trips") {
  const DgpSpec spec = default_dgp_spec(3, 60);
  const SeriesPanel p = generate_panel(spec);
  CHECK(parse_panel_csv(format_panel_csv(p)) == p);
  const DgpSpec back = dgp_from_json(dgp_to_json(spec));
  CHECK(dgp_to_json(back) == dgp_to_json(spec));
  CHECK(generate_panel(back) == p);
}

TEST_CASE("stationary mean matches the baseline") {
  DgpSpec spec;
  spec.seed = 5;
  spec.n_weeks = 10000;
  DiseaseProcess d;
  d.name = "x";
  d.baseline = 800;
  d.ar = 0.5;
  d.seasonal_amplitude = 0;
  d.noise_sd = 0.05;
  spec.diseases = {d};
  const SeriesPanel p = generate_panel(spec);
  // long-run sd of the sample mean of an AR(1): baseline·σ/(1-a)/√n
  const double se = 800 * 0.05 / (1 - 0.5) / std::sqrt(10000.0);
  CHECK(std::abs(mean_of(p.diseases()[0].values) - 800) < 3 * se);
}

TEST_CASE("non-stationary specs are rejected") {
  DgpSpec spec = default_dgp_spec(1, 100);
  spec.diseases[0].ar = 1.0;
  try {
    spec.validate();
    FAIL("expected NonStationarySpec");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonStationarySpec);
  }
  spec = default_dgp_spec(1, 100);
  spec.spillover.push_back({0, 1, 0.9});
  spec.spillover.push_back({1, 0, 0.9});
  CHECK(spec.spectral_radius() >= 1.0);
  CHECK_THROWS_AS(generate_panel(spec), Error);
  spec = default_dgp_spec(1, 0);
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("spiky series have episodes") {
  const SeriesPanel p = generate_panel(default_dgp_spec(2, 522));
  for (const auto& e : p.env()) {
    if (e.name != "pm25" && e.name != "pm10") continue;
    const double m = mean_of(e.values);
    const double mx = *std::max_element(e.values.begin(), e.values.end());
    CHECK(mx > 3 * m);
  }
  const auto& temp = p.env()[0];
  CHECK(*std::max_element(temp.values.begin(), temp.values.end()) < 1.1 * mean_of(temp.values));
}

TEST_CASE("softplus floor") {
  CHECK(softplus_floor(-5) > 1.0);
  CHECK(softplus_floor(-50) >= 1.0);
  CHECK(softplus_floor(1000) == doctest::Approx(1000));
  CHECK(softplus_floor(1) == doctest::Approx(1 + std::log(2.0)));
}

TEST_CASE("oracle cases") {
  const OracleCase rw = generate_oracle_case(OracleKind::RandomWalk, 7, 522);
  CHECK(rw.optimal == ModelId::Naive);
  CHECK(rw.panel.diseases().size() == 16);
  CHECK(rw.panel.env().size() == 12);
  CHECK(rw.target == rw.panel.diseases()[0].name);
  CHECK(lag1_slope(rw.panel.diseases()[0].values) > 0.95);

  const OracleCase ar = generate_oracle_case(OracleKind::PureAr1, 7, 522);
  CHECK(ar.optimal == ModelId::AR_A);
  CHECK(std::abs(lag1_slope(ar.panel.diseases()[0].values) - ar.ar_coefficient) < 0.1);

  const OracleCase fd = generate_oracle_case(OracleKind::FactorDriven, 7, 522);
  CHECK(fd.optimal == ModelId::PF);
  CHECK(generate_oracle_case(OracleKind::FactorDriven, 7, 522).panel == fd.panel);
  CHECK(oracle_kind_from_string(to_string(OracleKind::PureAr1)) == OracleKind::PureAr1);
}

}  // TEST_SUITE
