#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fcomb/error.hpp"
#include "fcomb/harness.hpp"
#include "fcomb/synthgen.hpp"

using namespace fcomb;
namespace fs = std::filesystem;

namespace {

// Small enough that a 120-week, 2×2 run finishes in a few seconds.
RunConfig cheap_config() {
  RunConfig c;
  c.synthetic_weeks = 120;
  c.diseases = {"cardiovascular", "diabetes"};
  c.horizons = {1, 3};
  c.submodel.rf_trees = 5;
  c.submodel.gbm_x.trees = 5;
  c.submodel.gbm_l.trees = 5;
  c.submodel.lambda_grid_size = 8;
  c.submodel.alphas = {0.5};
  c.submodel.cv_splits = 3;
  return c;
}

const SeriesPanel& cheap_panel() {
  static const SeriesPanel p = load_panel(cheap_config());
  return p;
}

const BacktestResult& cheap_run() {
  static const BacktestResult r = run_backtest(cheap_config(), cheap_panel());
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fcomb_test_" + name);
  fs::remove_all(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FCOMB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every value strictly after panel index `cut` perturbed (kept positive and
// on a similar scale so the solvers behave as usual).
SeriesPanel poison_after(const SeriesPanel& p, std::size_t cut) {
  auto dis = p.diseases();
  auto env = p.env();
  for (auto* group : {&dis, &env})
    for (auto& s : *group)
      for (std::size_t t = cut + 1; t < s.values.size(); ++t) s.values[t] = 1.5 * s.values[t] + 7.0;
  return SeriesPanel(p.weeks(), std::move(dis), std::move(env));
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("backtest produces every series") {
  const BacktestResult& r = cheap_run();
  REQUIRE(r.contexts.size() == 4);
  const auto combos = combiner_ids(r.config);
  CHECK(combos.size() == 15);
  for (const auto& ctx : r.contexts) {
    const auto models = r.store.models(ctx.disease, ctx.horizon);
    CHECK(models.size() == 16 + 15);
    const int forecast_rows = ctx.rows - ctx.train_end;
    CHECK(r.store.series(ctx.disease, ctx.horizon, "Naive").size() == forecast_rows);
    CHECK(r.store.series(ctx.disease, ctx.horizon, "P1").size() == forecast_rows);
    // P5–P11 only on eval30
    CHECK(r.store.series(ctx.disease, ctx.horizon, "P5").size() == ctx.rows - ctx.eval30_begin);
    for (const auto& rec : r.store.records()) CHECK(std::isfinite(rec.forecast));
  }
  // one cell per (disease, horizon), 16 × 4 pairs each
  REQUIRE(r.table.size() == 4);
  for (const auto& c : r.table) CHECK(c.pairs == 64);
}

TEST_CASE("disabling a model removes only its rows") {
  RunConfig c = cheap_config();
  c.models.erase(std::find(c.models.begin(), c.models.end(), ModelId::KNN));
  const BacktestResult r = run_backtest(c, cheap_panel());
  const BacktestResult& full = cheap_run();
  for (const auto& ctx : r.contexts) {
    CHECK(!r.store.has(ctx.disease, ctx.horizon, "KNN"));
    for (ModelId m : c.models) {
      const std::string id(to_string(m));
      CHECK(r.store.series(ctx.disease, ctx.horizon, id).forecast ==
            full.store.series(ctx.disease, ctx.horizon, id).forecast);
    }
  }
}

TEST_CASE("runs are deterministic and reports are reproducible") {
  BacktestResult a = run_backtest(cheap_config(), cheap_panel());
  BacktestResult b = cheap_run();
  CHECK(a.store == b.store);
  a.seconds = b.seconds = 0;
  CHECK(format_manifest(a) == format_manifest(b));

  const fs::path dir = scratch("reports");
  emit_reports(b, dir);
  for (const char* f : {"forecasts.csv", "metrics.csv", "metrics.json", "dm_table.csv", "weights.csv", "manifest.json"})
    CHECK(fs::exists(dir / f));
  CHECK(fs::is_directory(dir / "plots"));

  // reports recomputed from forecasts.csv + manifest.json are byte-identical
  const BacktestResult loaded = load_run(dir);
  const fs::path again = scratch("reports_again");
  emit_reports(loaded, again);
  for (const char* f : {"forecasts.csv", "metrics.csv", "metrics.json", "dm_table.csv", "weights.csv"})
    CHECK_MESSAGE(slurp(dir / f) == slurp(again / f), f);
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST_CASE("config round trip") {
  RunConfig c = cheap_config();
  c.p3_mode = BgMode::AsWritten;
  c.subset_p = {2};
  c.mape_squared = true;
  const std::string j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);
  CHECK(config_hash(config_from_json(j)) == config_hash(c));
  RunConfig d = c;
  d.seed += 1;
  CHECK(config_hash(d) != config_hash(c));
  CHECK_THROWS_AS(config_from_json(R"({"split_ratio": 1.5})"), Error);
  try {
    config_from_json(R"({"models": ["NotAModel"]})");
    FAIL("expected UnknownModel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownModel);
  }
}

TEST_CASE("metrics cover both windows") {
  const BacktestResult& r = cheap_run();
  std::set<std::pair<std::string, EvalWindow>> seen;
  for (const auto& m : r.metrics) {
    seen.insert({m.model, m.window});
    CHECK(m.mape >= 0);
    CHECK(m.mase >= 0);
  }
  CHECK(seen.count({"Naive", EvalWindow::FullForecastSet}));
  CHECK(seen.count({"P4", EvalWindow::FullForecastSet}));
  CHECK(seen.count({"P4", EvalWindow::Eval30}));
  CHECK(seen.count({"P11_p3", EvalWindow::Eval30}));
  CHECK(!seen.count({"P5", EvalWindow::FullForecastSet}));
  // metric row equals a direct recomputation
  const auto& ctx = r.contexts[0];
  const ForecastSeries s = r.store.series(ctx.disease, ctx.horizon, "Ridge");
  for (const auto& m : r.metrics)
    if (m.disease == ctx.disease && m.horizon == ctx.horizon && m.model == "Ridge" &&
        m.window == EvalWindow::FullForecastSet) {
      CHECK(m.mape == doctest::Approx(mape(s.actual, s.forecast)).epsilon(1e-14));
      CHECK(m.mase == doctest::Approx(mase(s.actual, s.forecast, ctx.mase_scale)).epsilon(1e-14));
    }
}

TEST_CASE("aggregation sums cause forecasts") {
  ForecastStore s;
  for (const char* d : {"a", "b", "c"})
    for (int w = 1; w <= 3; ++w) s.append({d, 1, "2015-W0" + std::to_string(w), "M", 10.0 * w + d[0], 20.0 * w});
  const ForecastStore agg = aggregate_forecasts(s, {"a", "b", "c"}, {1}, {"M"});
  const ForecastSeries t = agg.series("all_cause_aggregated", 1, "M");
  REQUIRE(t.size() == 3);
  CHECK(t.forecast(1) == 60.0 + 'a' + 'b' + 'c');
  CHECK(t.actual(2) == 180.0);
  CHECK_THROWS_AS(aggregate_forecasts(s, {"a", "z"}, {1}, {"M"}), Error);

  // perfect cause forecasts aggregate to a perfect total
  ForecastStore perfect;
  for (const auto& r : s.records()) perfect.append({r.disease, 1, r.target_week, "M", r.actual, r.actual});
  const ForecastSeries p = aggregate_forecasts(perfect, {"a", "b", "c"}, {1}, {"M"}).series("all_cause_aggregated", 1, "M");
  CHECK(mape(p.actual, p.forecast) == 0.0);
}

TEST_CASE("aggregation exercise from stored forecasts") {
  RunConfig c = cheap_config();
  c.diseases.clear();
  c.horizons = {1};
  c.models = {ModelId::Naive, ModelId::AR_A};
  c.combiners.clear();
  const BacktestResult cause = run_backtest(c, cheap_panel());
  const AggregationResult a = run_exercise_aggregation(c, cheap_panel(), &cause.store);
  CHECK(a.rows.size() == 2 * 2 * 2);
  // the summed actuals are the all-cause totals
  const ForecastSeries agg = a.aggregated.series("all_cause_aggregated", 1, "Naive");
  const auto total = cheap_panel().total_admissions();
  const auto& weeks = cheap_panel().weeks();
  for (int i = 0; i < agg.size(); ++i) {
    const auto idx = std::find(weeks.begin(), weeks.end(), agg.weeks[i]) - weeks.begin();
    CHECK(agg.actual(i) == doctest::Approx(total[idx]).epsilon(1e-14));
  }
}

TEST_CASE("all-cause exercise uses the ten machine-learning models") {
  RunConfig c = cheap_config();
  c.horizons = {1};
  for (bool exog : {false, true}) {
    const ExerciseResult e = run_exercise_allcause(c, cheap_panel(), exog);
    const std::string label = exog ? "all_cause_env" : "all_cause";
    CHECK(e.store.diseases() == std::vector<std::string>{label});
    const auto models = e.store.models(label, 1);
    CHECK(models.size() == 10);
    for (const char* excluded : {"Naive", "HM", "AR_A", "AR_B", "AR_C", "PF"})
      CHECK(std::find(models.begin(), models.end(), excluded) == models.end());
  }
}

TEST_CASE("forecasts never use data after their origin") {
  RunConfig c = cheap_config();
  const SeriesPanel& panel = cheap_panel();
  const auto& weeks = panel.weeks();
  auto index_of = [&](const std::string& w) {
    return static_cast<std::size_t>(std::find(weeks.begin(), weeks.end(), w) - weeks.begin());
  };
  for (int h : {1, 3}) {
    const PipelineResult base = run_disease_pipeline(panel, "diabetes", h, c);
    const ForecastSeries p5 = base.store.series("diabetes", h, "P5");
    const ForecastSeries naive = base.store.series("diabetes", h, "Naive");
    // origins: first forecast, the first eval30 step, and one in between
    std::vector<std::size_t> cuts{index_of(naive.weeks.front()) - h, index_of(p5.weeks.front()) - h,
                                  index_of(naive.weeks[naive.weeks.size() / 2]) - h};
    for (std::size_t cut : cuts) {
      const PipelineResult poisoned = run_disease_pipeline(poison_after(panel, cut), "diabetes", h, c);
      int compared = 0;
      for (const auto& rec : base.store.records()) {
        if (index_of(rec.target_week) - h > cut) continue;
        const ForecastSeries s = poisoned.store.series("diabetes", h, rec.model_id);
        const auto it = std::find(s.weeks.begin(), s.weeks.end(), rec.target_week);
        REQUIRE(it != s.weeks.end());
        CHECK_MESSAGE(s.forecast(it - s.weeks.begin()) == rec.forecast, rec.model_id, " ", rec.target_week);
        ++compared;
      }
      CHECK(compared > 0);
    }
  }
}

TEST_CASE("deadline stops a run") {
  RunConfig c = cheap_config();
  try {
    run_disease_pipeline(cheap_panel(), "diabetes", 1, c, Clock::now() - std::chrono::seconds(1));
    FAIL("expected DeadlineExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DeadlineExceeded);
  }
  RunControl ctl;
  ctl.budget_seconds = 1e-9;
  CHECK_THROWS_AS(run_backtest(c, cheap_panel(), ctl), Error);

  int calls = 0, last_total = 0;
  ctl.budget_seconds = 0;
  ctl.progress = [&](int done, int total) {
    ++calls;
    last_total = total;
    CHECK(done == calls);
  };
  c.horizons = {1};
  c.combiners = {Scheme::P1};
  run_backtest(c, cheap_panel(), ctl);
  CHECK(calls == 2);
  CHECK(last_total == 2);
}

TEST_CASE("cli exit codes") {
  const fs::path out = scratch("cli");
  CHECK(run_cli("run --split-ratio 2 --outdir " + out.string()) == 2);
  CHECK(run_cli("run --models Bogus --outdir " + out.string()) == 2);
  CHECK(run_cli("run --input /nonexistent/panel.csv --outdir " + out.string()) == 3);
  CHECK(run_cli("report /nonexistent/run") == 3);
  const fs::path csv = out / "panel.csv";
  CHECK(run_cli("generate --weeks 40 --out " + csv.string()) == 0);
  CHECK(fs::exists(csv));
  CHECK(read_panel_csv(csv).length() == 40);
  // too short for the design at h = 12
  CHECK(run_cli("run --input " + csv.string() + " --horizons 12 --diseases cardiovascular --outdir " +
                (out / "r").string() + " --lag-order 30") == 3);
  fs::remove_all(out);
}

}  // TEST_SUITE
