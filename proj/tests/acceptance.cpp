// Acceptance run: one PASS/FAIL line per criterion.
// Usage: fcomb_acceptance [criterion ...]   (default: all of 1-10)

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fcomb/combiners.hpp"
#include "fcomb/design.hpp"
#include "fcomb/error.hpp"
#include "fcomb/factor.hpp"
#include "fcomb/harness.hpp"
#include "fcomb/linalg.hpp"
#include "fcomb/metrics.hpp"
#include "fcomb/penalized.hpp"
#include "fcomb/rng.hpp"
#include "fcomb/subset.hpp"
#include "fcomb/synthgen.hpp"

using namespace fcomb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

Eigen::MatrixXd gaussian(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// Tree counts and tuning grids cut down for runs whose checks do not depend on them.
RunConfig cheap_config() {
  RunConfig c;
  c.submodel.rf_trees = 5;
  c.submodel.gbm_x.trees = 5;
  c.submodel.gbm_l.trees = 5;
  c.submodel.lambda_grid_size = 10;
  c.submodel.alphas = {0.5};
  c.submodel.cv_splits = 3;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fcomb_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// --- 1 ---------------------------------------------------------------------------

std::uint64_t choose(int n, int k) {
  // multiplicative formula, exact at these sizes
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

Outcome criterion_1() {
  // p = 1: walk every (environmental, cross-disease) choice
  std::set<std::pair<std::vector<int>, std::vector<int>>> seen;
  for (const auto& e : enumerate_combinations(12, 1))
    for (const auto& d : enumerate_combinations(15, 1)) seen.insert({e, d});
  const std::uint64_t c1 = csr_candidate_count(12, 15, 1);
  const std::uint64_t c2 = csr_candidate_count(12, 15, 2);
  const std::uint64_t c3 = csr_candidate_count(12, 15, 3);
  const bool ok = seen.size() == 180 && c1 == 180 && c2 == 6930 && c3 == 100100 && c2 == choose(12, 2) * choose(15, 2) &&
                  c3 == choose(12, 3) * choose(15, 3);
  return {ok, "p=1 enumerated " + std::to_string(seen.size()) + ", counts " + std::to_string(c1) + "/" +
                  std::to_string(c2) + "/" + std::to_string(c3)};
}

// --- 2, 3 ------------------------------------------------------------------------

struct Problem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Problem random_problem(std::uint64_t seed) {
  Rng rng(seed);
  Problem p;
  p.x = gaussian(40, 10, rng);
  for (int j = 0; j < 10; ++j) p.x.col(j) = p.x.col(j) * (1.0 + 0.5 * j) + Eigen::VectorXd::Constant(40, 2.0 * j);
  p.y = p.x * gaussian(10, 1, rng) + 0.5 * gaussian(40, 1, rng) + Eigen::VectorXd::Constant(40, 5.0);
  return p;
}

// Centered, unit-sample-sd predictors, as the solver sees them.
struct Standardized {
  Eigen::MatrixXd z;
  Eigen::RowVectorXd mean;
  Eigen::VectorXd sd;
  double ybar = 0;
  Eigen::VectorXd yc;
};

Standardized standardize(const Problem& p) {
  Standardized s;
  const int n = static_cast<int>(p.x.rows());
  s.mean = p.x.colwise().mean();
  s.z = p.x.rowwise() - s.mean;
  s.sd.resize(p.x.cols());
  for (int j = 0; j < p.x.cols(); ++j) {
    s.sd(j) = std::sqrt(s.z.col(j).squaredNorm() / (n - 1));
    s.z.col(j) /= s.sd(j);
  }
  s.ybar = p.y.mean();
  s.yc = p.y.array() - s.ybar;
  return s;
}

// Closed-form ridge: (Z'Z/n + λI)^{-1} Z'y/n on the standardized scale.
Eigen::VectorXd ridge_closed_form(const Problem& p, double lambda) {
  const Standardized s = standardize(p);
  const double n = static_cast<double>(p.x.rows());
  const Eigen::MatrixXd a = s.z.transpose() * s.z / n + lambda * Eigen::MatrixXd::Identity(p.x.cols(), p.x.cols());
  const Eigen::VectorXd b = a.ldlt().solve(s.z.transpose() * s.yc / n);
  return b.cwiseQuotient(s.sd);
}

// Least squares with an intercept via QR of [1 X].
Eigen::VectorXd ols_qr(const Problem& p) {
  Eigen::MatrixXd a(p.x.rows(), p.x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(p.x.cols()) = p.x;
  const Eigen::VectorXd b = a.colPivHouseholderQr().solve(p.y);
  return b.tail(p.x.cols());
}

SolverOptions tight() { return SolverOptions{1e-20, 1000000, false}; }

Eigen::VectorXd solve_raw(const GramSystem& s, PenaltySpec spec, double lambda) {
  const PenalizedFit fit = solve_penalized(s, spec, lambda, tight());
  double intercept = 0;
  Eigen::VectorXd beta;
  s.to_raw(fit.b, intercept, beta);
  return beta;
}

PenaltySpec penalty(PenaltyKind kind, double alpha) {
  PenaltySpec s;
  s.kind = kind;
  s.alpha = alpha;
  return s;
}

double soft(double z, double t) { return z > t ? z - t : (z < -t ? z + t : 0.0); }

Outcome criterion_2() {
  double worst_ridge = 0, worst_lasso = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Problem p = random_problem(100 + rep);
    const GramSystem s = GramSystem::from_data(p.x, p.y, true);
    const double lambda = 0.02 * (1 + rep % 9);
    const Eigen::VectorXd b = solve_raw(s, penalty(PenaltyKind::Ridge, 0.0), lambda);
    worst_ridge = std::max(worst_ridge, (b - ridge_closed_form(p, lambda)).cwiseAbs().maxCoeff());

    // orthonormal design: mean-zero columns with X'X = n I, left unstandardized
    Rng rng(700 + rep);
    Eigen::MatrixXd a = gaussian(40, 10, rng);
    a.rowwise() -= a.colwise().mean();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::MatrixXd x = std::sqrt(40.0) * (qr.householderQ() * Eigen::MatrixXd::Identity(40, 10));
    const Eigen::VectorXd y = x * gaussian(10, 1, rng) + gaussian(40, 1, rng);
    const GramSystem o = GramSystem::from_data(x, y, false);
    const Eigen::VectorXd c = x.transpose() * (y.array() - y.mean()).matrix() / 40.0;
    const double lam = c.cwiseAbs().maxCoeff() * (0.1 + 0.15 * (rep % 6));
    const Eigen::VectorXd l = solve_raw(o, penalty(PenaltyKind::Lasso, 1.0), lam);
    for (int j = 0; j < 10; ++j) worst_lasso = std::max(worst_lasso, std::abs(l(j) - soft(c(j), lam)));
  }
  return {worst_ridge < 1e-6 && worst_lasso < 1e-6,
          "50 instances, max |ridge - closed form| " + fmt(worst_ridge) + ", max |lasso - soft threshold| " +
              fmt(worst_lasso)};
}

Outcome criterion_3() {
  double enet_lasso = 0, enet_ridge = 0, to_ols = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const Problem p = random_problem(300 + rep);
    const GramSystem s = GramSystem::from_data(p.x, p.y, true);
    const double lambda = 0.03 * lambda_max(s, penalty(PenaltyKind::Lasso, 1.0));
    const Eigen::VectorXd lasso = solve_raw(s, penalty(PenaltyKind::Lasso, 1.0), lambda);
    const Eigen::VectorXd ridge = solve_raw(s, penalty(PenaltyKind::Ridge, 0.0), lambda);
    enet_lasso = std::max(enet_lasso, (solve_raw(s, penalty(PenaltyKind::ElasticNet, 1.0), lambda) - lasso)
                                          .cwiseAbs()
                                          .maxCoeff());
    enet_ridge = std::max(enet_ridge, (solve_raw(s, penalty(PenaltyKind::ElasticNet, 0.0), lambda) - ridge)
                                          .cwiseAbs()
                                          .maxCoeff());
    const Eigen::VectorXd ols = ols_qr(p);
    std::uint32_t flags = 0;
    const Eigen::VectorXd adaptive = adaptive_weights_from_ols(ols_system_coefficients(s, flags));
    for (PenaltyKind kind : {PenaltyKind::Ridge, PenaltyKind::Lasso, PenaltyKind::AdaptiveLasso,
                             PenaltyKind::SparseGroupLasso, PenaltyKind::ElasticNet,
                             PenaltyKind::AdaptiveElasticNet}) {
      PenaltySpec spec = penalty(kind, kind == PenaltyKind::Ridge ? 0.0 : 0.5);
      if (kind == PenaltyKind::Lasso || kind == PenaltyKind::AdaptiveLasso) spec.alpha = 1.0;
      if (kind == PenaltyKind::AdaptiveLasso || kind == PenaltyKind::AdaptiveElasticNet)
        spec.adaptive_weights = adaptive;
      if (kind == PenaltyKind::SparseGroupLasso) spec.groups = {0, 0, 1, 1, 1, 2, 2, 3, 4, 4};
      to_ols = std::max(to_ols, (solve_raw(s, spec, 1e-12) - ols).cwiseAbs().maxCoeff());
    }
  }
  return {enet_lasso < 1e-6 && enet_ridge < 1e-6 && to_ols < 1e-6,
          "10 instances, ENET(1)-LASSO " + fmt(enet_lasso) + ", ENET(0)-ridge " + fmt(enet_ridge) +
              ", six penalties at lambda=1e-12 vs OLS " + fmt(to_ols)};
}

// --- 4, 5 --------------------------------------------------------------------------

// Every disease and horizon on the 522-week panel with cheap members.
const BacktestResult& full_cheap_run() {
  static std::unique_ptr<BacktestResult> r;
  if (!r) {
    RunConfig c = cheap_config();
    c.combiners = {Scheme::P1, Scheme::P3, Scheme::P4, Scheme::P7};
    RunControl ctl;
    ctl.progress = [](int done, int total) {
      if (done % 16 == 0) std::cerr << "  [16x12 run] " << done << "/" << total << " pipelines\n";
    };
    r = std::make_unique<BacktestResult>(run_backtest(c, load_panel(c), ctl));
  }
  return *r;
}

Outcome criterion_4() {
  const BacktestResult& r = full_cheap_run();
  std::set<std::string> submodels;
  for (ModelId m : kAllModels) submodels.emplace(to_string(m));
  std::map<std::tuple<std::string, int, EvalWindow>, std::pair<double, std::vector<double>>> cells;
  for (const auto& m : r.metrics) {
    auto& cell = cells[{m.disease, m.horizon, m.window}];
    if (m.model == "P1") {
      cell.first = m.mape;
    } else if (submodels.count(m.model)) {
      cell.second.push_back(m.mape);
    }
  }
  int checked = 0, violations = 0;
  double tightest = 1e300;
  for (const auto& [key, cell] : cells) {
    if (cell.second.size() != 16) {
      ++violations;
      continue;
    }
    double mean = 0;
    for (double v : cell.second) mean += v;
    mean /= 16.0;
    ++checked;
    if (!(cell.first <= mean)) ++violations;
    tightest = std::min(tightest, mean - cell.first);
  }
  const bool ok = checked == 16 * 12 * 2 && violations == 0;
  return {ok, std::to_string(checked) + " (disease, horizon, window) cells, " + std::to_string(violations) +
                  " violations, smallest margin " + fmt(tightest) + " MAPE points"};
}

Outcome criterion_5() {
  const BacktestResult& r = full_cheap_run();
  // P3/P4 weights at every step
  std::map<std::tuple<std::string, int, std::string, std::string>, double> sums;
  int negative = 0;
  for (const auto& w : r.weights) {
    if (w.weight < 0) ++negative;
    sums[{w.disease, w.horizon, w.week, w.scheme}] += w.weight;
  }
  double worst_sum = 0;
  for (const auto& [k, s] : sums) worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  // P7 on every fit of the run and on 200 more random forecast panels
  double worst_p7 = 0;
  int p7_fits = 0;
  for (const auto& [ctx, combos] : r.combiner_fits)
    for (const auto& c : combos)
      if (c.scheme == "P7") {
        double s = 0;
        for (double w : c.weights) s += w;
        worst_p7 = std::max(worst_p7, std::abs(s - 1.0));
        ++p7_fits;
      }
  Rng rng(55);
  for (int rep = 0; rep < 200; ++rep) {
    const int rows = 20 + rep % 60;
    Eigen::VectorXd y(rows);
    Eigen::MatrixXd f(rows, 16);
    for (int i = 0; i < rows; ++i) {
      y(i) = 300 + 30 * std::sin(0.2 * i) + 5 * rng.normal();
      for (int k = 0; k < 16; ++k) f(i, k) = y(i) + (1 + 0.5 * k) * rng.normal() + k;
    }
    worst_p7 = std::max(worst_p7, std::abs(fit_regression_combiner(f, y, Scheme::P7).w.sum() - 1.0));
    ++p7_fits;
  }
  // P1: equal weights, and the stored P1 is the plain mean of the members
  const Eigen::VectorXd eq = equal_weights(16);
  bool p1_ok = (eq.array() == 1.0 / 16.0).all();
  for (const auto& ctx : r.contexts) {
    const ForecastSeries p1 = r.store.series(ctx.disease, ctx.horizon, "P1");
    Eigen::MatrixXd members(p1.size(), 16);
    int k = 0;
    for (ModelId m : kAllModels)
      members.col(k++) = r.store.series(ctx.disease, ctx.horizon, std::string(to_string(m))).forecast;
    for (int i = 0; i < p1.size(); ++i) p1_ok = p1_ok && p1.forecast(i) == combine_equal(members.row(i).transpose());
  }
  const bool ok = negative == 0 && worst_sum <= 1e-12 && !sums.empty() && worst_p7 <= 1e-10 && p1_ok;
  return {ok, std::to_string(sums.size()) + " P3/P4 steps (" + std::to_string(negative) +
                  " negative weights, max |sum-1| " + fmt(worst_sum) + "), " + std::to_string(p7_fits) +
                  " P7 fits (max |sum-1| " + fmt(worst_p7) + "), P1 weights 1/16 " + (p1_ok ? "yes" : "no")};
}

// --- 6 -----------------------------------------------------------------------------

// Loop-based DM with rectangular HAC and the small-sample factor.
double dm_brute_force(const Eigen::VectorXd& ea, const Eigen::VectorXd& eb, int h) {
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
    v += (k == 0 ? 1.0 : 2.0) * g / n;
  }
  if (!(v > 0)) return std::nan("");
  return mean / std::sqrt(v / n) * std::sqrt((n + 1.0 - 2.0 * h + h * (h - 1.0) / n) / n);
}

Outcome criterion_6() {
  double worst = 0;
  int compared = 0;
  bool antisymmetric = true;
  for (int rep = 0; compared < 100; ++rep) {
    Rng rng(4000 + rep);
    const int h = 1 + rep % 12, n = 40 + (rep * 13) % 200;
    Eigen::VectorXd a(n), b(n);
    const Eigen::MatrixXd z = gaussian(n + h, 2, rng);
    for (int t = 0; t < n; ++t) {
      a(t) = z.col(0).segment(t, h).sum();
      b(t) = 1.1 * z.col(1).segment(t, h).sum();
    }
    const double oracle = dm_brute_force(a, b, h);
    if (std::isnan(oracle)) continue;  // negative HAC variance: not a comparable pair
    const DmResult r = dm_test(a, b, h);
    worst = std::max(worst, std::abs(r.statistic - oracle));
    antisymmetric = antisymmetric && dm_test(b, a, h).statistic == -r.statistic;
    ++compared;
  }
  return {worst < 1e-10 && antisymmetric, std::to_string(compared) + " pairs, max |delta| " + fmt(worst) +
                                              ", antisymmetry exact " + (antisymmetric ? "yes" : "no")};
}

// --- 7 -----------------------------------------------------------------------------

Outcome criterion_7() {
  const SeriesPanel panel = generate_panel(default_dgp_spec(17, 522));
  const std::vector<std::string> diseases{panel.diseases()[0].name, panel.diseases()[3].name,
                                          panel.diseases()[8].name, panel.diseases()[14].name};
  const std::vector<int> horizons{1, 2, 4, 8};
  std::vector<std::string> subs;
  for (ModelId m : kAllModels) subs.emplace_back(to_string(m));
  const std::vector<std::string> combos{"P1", "P2", "P3", "P4"};
  Rng rng(71);
  ForecastStore store;
  const int n = 150;
  for (const auto& d : diseases) {
    const auto& values = panel.diseases()[panel.disease_index(d)].values;
    const int first = static_cast<int>(values.size()) - n;
    for (int h : horizons) {
      Eigen::VectorXd y(n);
      Eigen::MatrixXd f(n, 16);
      for (int i = 0; i < n; ++i) {
        y(i) = values[first + i];
        // truth plus independent noise whose sd grows across members
        for (int k = 0; k < 16; ++k) f(i, k) = y(i) + (0.03 + 0.004 * k) * y(i) * rng.normal();
      }
      std::vector<std::string> weeks(panel.weeks().end() - n, panel.weeks().end());
      auto add = [&](const std::string& id, const Eigen::VectorXd& v) {
        for (int i = 0; i < n; ++i) store.append({d, h, weeks[i], id, v(i), y(i)});
      };
      for (int k = 0; k < 16; ++k) add(subs[k], f.col(k));
      Eigen::VectorXd p1(n), p2(n);
      for (int i = 0; i < n; ++i) {
        p1(i) = combine_equal(f.row(i).transpose());
        p2(i) = combine_median(f.row(i).transpose());
      }
      add("P1", p1);
      add("P2", p2);
      add("P3", bates_granger_path(f, y, h, 1, BgMode::Feasible).forecast);
      add("P4", bates_granger_path(f, y, h, 0, BgMode::Feasible).forecast);
    }
  }
  const auto table = nonequivalence_table(store, diseases, horizons, subs, combos);
  bool pairs_ok = table.size() == 16;
  double mean = 0;
  for (const auto& c : table) {
    pairs_ok = pairs_ok && c.pairs == 64;
    mean += c.proportion();
  }
  mean /= static_cast<double>(table.size());
  return {pairs_ok && mean > 0.5, std::to_string(table.size()) + " cells of 64 pairs, mean proportion " + fmt(mean)};
}

// --- 8 -----------------------------------------------------------------------------

Outcome criterion_8() {
  RunConfig c;
  c.submodel.rf_trees = 200;
  c.submodel.gbm_x.trees = 200;
  c.submodel.gbm_l.trees = 200;
  c.combiners = {Scheme::P4};
  const OracleCase rw = generate_oracle_case(OracleKind::RandomWalk, 7, 522);
  const PipelineResult r = run_disease_pipeline(rw.panel, rw.target, 1, c);
  const auto naive = std::find(r.submodels.begin(), r.submodels.end(), "Naive") - r.submodels.begin();
  const double w = r.p4.weights(r.p4.weights.rows() - 1, naive);

  const OracleCase fd = generate_oracle_case(OracleKind::FactorDriven, 7, 522);
  RunConfig pf = c;
  pf.models = {ModelId::PF};
  pf.combiners.clear();
  const PipelineResult f = run_disease_pipeline(fd.panel, fd.target, 1, pf);
  int rmin = -1, rmax = -1;
  for (const auto& s : f.fits)
    if (s.model == "PF") {
      rmin = s.factors_min;
      rmax = s.factors_max;
    }
  const LagDesign d = build_lag_design(fd.panel, fd.target, 1, PredictorSpec::C);
  const double first = fit_factor_model(d, f.context.train_end).basis.cumulative_explained();
  const double last = fit_factor_model(d, f.context.rows).basis.cumulative_explained();
  const bool ok = w > 1.0 / 16 && rmin == 1 && rmax == 1 && first >= 0.85 && last >= 0.85;
  return {ok, "random_walk: final P4 weight on Naive " + fmt(w) + " (1/16 = 0.0625); factor_driven: PF R in [" +
                  std::to_string(rmin) + "," + std::to_string(rmax) + "] over " + std::to_string(f.weeks.size()) +
                  " fits, explained variance " + fmt(first) + " .. " + fmt(last)};
}

// --- 9 -----------------------------------------------------------------------------

SeriesPanel perturb_after(const SeriesPanel& p, std::size_t cut) {
  auto dis = p.diseases();
  auto env = p.env();
  for (auto* group : {&dis, &env})
    for (auto& s : *group)
      for (std::size_t t = cut + 1; t < s.values.size(); ++t) s.values[t] = 1.5 * s.values[t] + 7.0;
  return SeriesPanel(p.weeks(), std::move(dis), std::move(env));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FCOMB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string without_lines(const std::string& text, const std::vector<std::string>& keys) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    bool drop = false;
    for (const auto& k : keys) drop = drop || line.find("\"" + k + "\"") != std::string::npos;
    if (!drop) out += line + "\n";
  }
  return out;
}

Outcome criterion_9() {
  // sentinel injection: values after an origin change, forecasts from that origin or earlier must not
  const RunConfig c = cheap_config();
  const SeriesPanel panel = load_panel(c);
  const auto& weeks = panel.weeks();
  auto index_of = [&](const std::string& w) {
    return static_cast<std::size_t>(std::find(weeks.begin(), weeks.end(), w) - weeks.begin());
  };
  const std::string disease = "respiratory_infection";
  long compared = 0, changed_later = 0, leaks = 0;
  int cuts_done = 0;
  for (int h : {1, 4, 12}) {
    const PipelineResult base = run_disease_pipeline(panel, disease, h, c);
    const ForecastSeries all = base.store.series(disease, h, "P1");
    const ForecastSeries late = base.store.series(disease, h, "P5");
    const std::size_t first = index_of(all.weeks.front()) - h, eval = index_of(late.weeks.front()) - h;
    for (std::size_t cut : {first, (first + eval) / 2, eval, eval + 5}) {
      const PipelineResult moved = run_disease_pipeline(perturb_after(panel, cut), disease, h, c);
      std::map<std::pair<std::string, std::string>, double> after;
      for (const auto& rec : moved.store.records()) after[{rec.model_id, rec.target_week}] = rec.forecast;
      for (const auto& rec : base.store.records()) {
        const double v = after.at({rec.model_id, rec.target_week});
        if (index_of(rec.target_week) - h <= cut) {
          ++compared;
          if (v != rec.forecast) ++leaks;
        } else if (v != rec.forecast) {
          ++changed_later;
        }
      }
      ++cuts_done;
    }
  }
  // rerun from the manifest through the CLI
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const std::string args = "--weeks 150 --diseases cardiovascular,skin --horizons 1,3 --rf-trees 5 --gbm-trees 5 --seed 99";
  const int rc1 = run_cli("run " + args + " --outdir " + a.string());
  const int rc2 = run_cli("run --manifest " + (a / "manifest.json").string() + " --outdir " + b.string());
  bool identical = rc1 == 0 && rc2 == 0;
  std::string which;
  for (const char* f : {"forecasts.csv", "metrics.csv", "metrics.json", "dm_table.csv", "weights.csv"})
    if (!identical || slurp(a / f) != slurp(b / f)) {
      identical = false;
      which += std::string(" ") + f;
    }
  const std::vector<std::string> volatile_keys{"wall_clock_seconds", "output_dir"};
  if (identical && without_lines(slurp(a / "manifest.json"), volatile_keys) !=
                       without_lines(slurp(b / "manifest.json"), volatile_keys)) {
    identical = false;
    which += " manifest.json";
  }
  fs::remove_all(a);
  fs::remove_all(b);
  const bool ok = leaks == 0 && compared > 0 && changed_later > 0 && identical;
  return {ok, std::to_string(cuts_done) + " cut points, " + std::to_string(compared) +
                  " forecasts at or before the cut unchanged bit for bit (" + std::to_string(leaks) + " differ, " +
                  std::to_string(changed_later) + " later ones moved); manifest rerun byte-identical " +
                  (identical ? "yes" : "no:" + which)};
}

// --- 10 ----------------------------------------------------------------------------

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

Outcome criterion_10() {
  RunConfig c;
  c.submodel.rf_trees = 200;
  c.submodel.gbm_x.trees = 200;
  c.submodel.gbm_l.trees = 200;
  const double budget = 1800.0;
  const int total = 16 * 12;
  int done = 0;
  const auto start = Clock::now();
  RunControl ctl;
  ctl.budget_seconds = budget;
  ctl.progress = [&](int d, int t) {
    done = d;
    if (d % 8 == 0)
      std::cerr << "  [desk run] " << d << "/" << t << " pipelines after "
                << fmt(std::chrono::duration<double>(Clock::now() - start).count()) << " s\n";
  };
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  try {
    const BacktestResult r = run_backtest(c, load_panel(c), ctl);
    const fs::path out = scratch("desk");
    emit_reports(r, out);
    bool files = true;
    for (const char* f : {"forecasts.csv", "metrics.csv", "dm_table.csv", "weights.csv", "manifest.json"})
      files = files && fs::exists(out / f);
    const int dm_rows = count_lines(slurp(out / "dm_table.csv")) - 1;
    std::set<std::pair<std::string, int>> cells;
    for (const auto& cell : r.table) cells.insert({cell.disease, cell.horizon});
    const auto per_pair = r.store.models(r.contexts[0].disease, r.contexts[0].horizon).size();
    const std::size_t combos = combiner_ids(c).size();
    fs::remove_all(out);
    const bool ok = r.seconds < budget && files && dm_rows == total && cells.size() == 192 &&
                    per_pair == 16 + combos;
    return {ok, "16x12x522 with 200 trees in " + fmt(r.seconds) + " s on " + std::to_string(cores) +
                    " core(s); report files " + (files ? "present" : "missing") + "; dm_table rows " +
                    std::to_string(dm_rows) + "; series per pair " + std::to_string(per_pair) + " (16 submodels + " +
                    std::to_string(combos) + " combiner outputs)"};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DeadlineExceeded) throw;
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    const double projected = done > 0 ? elapsed / done * total : std::nan("");
    return {false, "over the " + fmt(budget) + " s budget on " + std::to_string(cores) + " core(s): " +
                       std::to_string(done) + "/" + std::to_string(total) + " pipelines finished in " + fmt(elapsed) +
                       " s, projected full run " + fmt(projected / 60.0) + " min"};
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                       criterion_5, criterion_6, criterion_7, criterion_8,
                                                       criterion_9, criterion_10};
  // stated runtime limits in seconds
  const std::map<int, double> limits{{1, 1.0}, {2, 10.0}, {7, 300.0}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.push_back(i);

  int failed = 0;
  for (int id : selected) {
    if (id < 1 || id > 10) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(id - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - start).count();
    if (const auto it = limits.find(id); it != limits.end() && s >= it->second) {
      o.pass = false;
      o.detail += "; over the " + fmt(it->second) + " s limit";
    }
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " (" << fmt(s) << " s) " << o.detail
              << std::endl;
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
