// fcomb: forecast-combination backtests on weekly count panels.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fcomb/error.hpp"
#include "fcomb/harness.hpp"
#include "fcomb/synthgen.hpp"

namespace {

using namespace fcomb;

// CLI overrides applied on top of the JSON config.
struct Overrides {
  std::string config_path;
  std::string manifest_path;
  std::optional<std::string> input;
  std::optional<std::string> dgp_path;
  std::optional<int> weeks;
  std::vector<std::string> diseases;
  std::vector<int> horizons;
  std::optional<int> lag_order;
  std::optional<double> split_ratio;
  std::vector<std::string> models;
  std::vector<std::string> combiners;
  std::optional<std::uint64_t> seed;
  std::vector<int> subset_p;
  std::optional<std::string> p3_mode;
  std::optional<std::string> outdir;
  std::optional<int> rf_trees;
  std::optional<int> gbm_trees;
  std::optional<int> knn_k;
  std::optional<int> tune_every;
  std::optional<int> threads;
  bool mape_squared = false;
};

void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON config file");
  app->add_option("--manifest", o.manifest_path, "repeat the run recorded in a manifest.json");
  app->add_option("--input", o.input, "panel CSV (default: synthetic panel)");
  app->add_option("--dgp", o.dgp_path, "synthetic DGP spec JSON");
  app->add_option("--weeks", o.weeks, "length of the default synthetic panel");
  app->add_option("--diseases", o.diseases, "disease subset")->delimiter(',');
  app->add_option("--horizons", o.horizons, "horizons in 1..12")->delimiter(',');
  app->add_option("--lag-order", o.lag_order, "lags per variable");
  app->add_option("--split-ratio", o.split_ratio, "initial training share");
  app->add_option("--models", o.models, "submodel subset")->delimiter(',');
  app->add_option("--combiners", o.combiners, "combiner subset (P1..P11)")->delimiter(',');
  app->add_option("--seed", o.seed, "run seed");
  app->add_option("--p", o.subset_p, "subset sizes for P10/P11")->delimiter(',');
  app->add_option("--p3-mode", o.p3_mode, "feasible or as-written");
  app->add_option("--outdir", o.outdir, "output directory");
  app->add_option("--rf-trees", o.rf_trees, "random forest trees (submodel and P9)");
  app->add_option("--gbm-trees", o.gbm_trees, "boosting rounds for both GBMs");
  app->add_option("--knn-k", o.knn_k, "neighbours for KNN");
  app->add_option("--tune-every", o.tune_every, "re-run CV every n steps (0 = first fit only)");
  app->add_option("--threads", o.threads, "OpenMP threads (0 = default)");
  app->add_flag("--mape-squared", o.mape_squared, "score with the squared-ratio MAPE variant");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c;
  if (!o.manifest_path.empty()) {
    c = config_from_manifest(read_text_file(o.manifest_path));
  } else if (!o.config_path.empty()) {
    c = config_from_json(read_text_file(o.config_path));
  }
  if (o.input) {
    c.input = *o.input;
    c.dgp.reset();
  }
  if (o.dgp_path) {
    c.dgp = dgp_from_json(read_text_file(*o.dgp_path));
    c.input.clear();
  }
  if (o.weeks) c.synthetic_weeks = *o.weeks;
  if (!o.diseases.empty()) c.diseases = o.diseases;
  if (!o.horizons.empty()) c.horizons = o.horizons;
  if (o.lag_order) c.lag_order = *o.lag_order;
  if (o.split_ratio) c.split_ratio = *o.split_ratio;
  if (!o.models.empty()) {
    c.models.clear();
    for (const auto& m : o.models) c.models.push_back(model_from_string(m));
  }
  if (!o.combiners.empty()) {
    // reuse the JSON reader for scheme names
    std::string arr = "{\"combiners\":[";
    for (std::size_t i = 0; i < o.combiners.size(); ++i) arr += (i ? ",\"" : "\"") + o.combiners[i] + "\"";
    c.combiners = config_from_json(arr + "]}").combiners;
  }
  if (o.seed) c.seed = *o.seed;
  if (!o.subset_p.empty()) c.subset_p = o.subset_p;
  if (o.p3_mode) c.p3_mode = bg_mode_from_string(*o.p3_mode);
  if (o.outdir) c.output_dir = *o.outdir;
  if (o.rf_trees) c.submodel.rf_trees = *o.rf_trees;
  if (o.gbm_trees) c.submodel.gbm_x.trees = c.submodel.gbm_l.trees = *o.gbm_trees;
  if (o.knn_k) c.submodel.knn_k = *o.knn_k;
  if (o.tune_every) c.submodel.tune_every = *o.tune_every;
  if (o.threads) c.threads = *o.threads;
  if (o.mape_squared) c.mape_squared = true;
  c.validate();
  return c;
}

int exit_code(const Error& e) {
  if (e.code() == ErrorCode::DeadlineExceeded) return 1;
  return is_config_error(e.code()) ? 2 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forecast-combination backtests for weekly count panels"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic panel CSV and its DGP spec");
  std::string gen_out = "panel.csv";
  std::string gen_spec_out;
  std::string gen_dgp;
  std::string gen_oracle;
  std::uint64_t gen_seed = 1;
  int gen_weeks = 522;
  gen->add_option("--out", gen_out, "panel CSV path");
  gen->add_option("--spec-out", gen_spec_out, "DGP spec JSON path (default: <out>.dgp.json)");
  gen->add_option("--dgp", gen_dgp, "DGP spec JSON to generate from");
  gen->add_option("--oracle", gen_oracle, "random_walk, pure_ar1 or factor_driven");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--weeks", gen_weeks, "panel length");

  Overrides run_o, allc_o, agg_o;
  auto* run = app.add_subcommand("run", "expanding-window backtest with every combiner");
  add_config_flags(run, run_o);
  double time_budget = 0.0;
  bool progress = false;
  run->add_option("--time-budget", time_budget, "give up after this many seconds (0 = no limit)");
  run->add_flag("--progress", progress, "print a line per finished pipeline to stderr");

  auto* allc = app.add_subcommand("exercise-allcause", "ten ML models on the all-cause total");
  add_config_flags(allc, allc_o);
  std::string exog = "both";
  allc->add_option("--exog", exog, "on, off or both")->check(CLI::IsMember({"on", "off", "both"}));

  auto* agg = app.add_subcommand("exercise-aggregate", "summed cause-specific forecasts against direct all-cause");
  add_config_flags(agg, agg_o);
  std::string from_run;
  agg->add_option("--from-run", from_run, "reuse forecasts.csv from a finished run directory");

  auto* rep = app.add_subcommand("report", "recompute reports from forecasts.csv and manifest.json");
  std::string rep_dir;
  std::string rep_out;
  rep->add_option("dir", rep_dir, "run directory")->required();
  rep->add_option("--outdir", rep_out, "where to write (default: the run directory)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      std::string spec_text;
      SeriesPanel panel;
      if (!gen_oracle.empty()) {
        const OracleCase oc = generate_oracle_case(oracle_kind_from_string(gen_oracle), gen_seed, gen_weeks);
        panel = oc.panel;
        spec_text = "{\"oracle\": \"" + gen_oracle + "\", \"seed\": " + std::to_string(gen_seed) +
                    ", \"n_weeks\": " + std::to_string(gen_weeks) + ", \"target\": \"" + oc.target +
                    "\", \"optimal\": \"" + std::string(to_string(oc.optimal)) + "\"}\n";
      } else {
        const DgpSpec spec =
            gen_dgp.empty() ? default_dgp_spec(gen_seed, gen_weeks) : dgp_from_json(read_text_file(gen_dgp));
        panel = generate_panel(spec);
        spec_text = dgp_to_json(spec);
      }
      write_panel_csv(panel, gen_out);
      write_text_file(gen_spec_out.empty() ? gen_out + ".dgp.json" : gen_spec_out, spec_text);
      std::cout << "wrote " << gen_out << " (" << panel.length() << " weeks)\n";
    } else if (*run) {
      const RunConfig config = resolve(run_o);
      RunControl control;
      control.budget_seconds = time_budget;
      if (progress) control.progress = [](int done, int total) { std::cerr << done << "/" << total << "\n"; };
      const BacktestResult result = run_backtest(config, load_panel(config), control);
      emit_reports(result, config.output_dir);
      std::cout << "wrote " << result.store.size() << " forecasts to " << config.output_dir << " in "
                << result.seconds << " s\n";
    } else if (*allc) {
      const RunConfig config = resolve(allc_o);
      const SeriesPanel panel = load_panel(config);
      std::vector<bool> toggles;
      if (exog != "off") toggles.push_back(true);
      if (exog != "on") toggles.push_back(false);
      ForecastStore store;
      std::vector<MetricRow> metrics;
      for (bool with_exog : toggles) {
        const ExerciseResult r = run_exercise_allcause(config, panel, with_exog);
        store.append(r.store);
        metrics.insert(metrics.end(), r.metrics.begin(), r.metrics.end());
      }
      std::filesystem::create_directories(config.output_dir);
      const std::filesystem::path dir = config.output_dir;
      write_forecast_csv(store, dir / "allcause_forecasts.csv");
      write_text_file(dir / "allcause_metrics.csv", format_metrics_csv(metrics));
      write_text_file(dir / "allcause_metrics.json", format_metrics_json(metrics));
      std::cout << "wrote all-cause exercise to " << config.output_dir << "\n";
    } else if (*agg) {
      const RunConfig config = resolve(agg_o);
      const SeriesPanel panel = load_panel(config);
      std::optional<ForecastStore> causes;
      if (!from_run.empty()) causes = read_forecast_csv(std::filesystem::path(from_run) / "forecasts.csv");
      const AggregationResult r = run_exercise_aggregation(config, panel, causes ? &*causes : nullptr);
      std::filesystem::create_directories(config.output_dir);
      const std::filesystem::path dir = config.output_dir;
      ForecastStore both = r.aggregated;
      both.append(r.direct);
      write_forecast_csv(both, dir / "aggregation_forecasts.csv");
      write_text_file(dir / "aggregation_metrics.csv", format_aggregation_csv(r.rows));
      std::cout << "wrote aggregation exercise to " << config.output_dir << "\n";
    } else if (*rep) {
      const BacktestResult result = load_run(rep_dir);
      emit_reports(result, rep_out.empty() ? rep_dir : rep_out);
      std::cout << "recomputed reports for " << result.contexts.size() << " pipelines\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
