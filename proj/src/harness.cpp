#include "fcomb/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <set>

#include "fcomb/error.hpp"
#include "fcomb/parallel.hpp"
#include "fcomb/rng.hpp"
#include "fcomb/subset.hpp"
#include "json.hpp"

namespace fcomb {

using nlohmann::json;

namespace {

const std::vector<std::string> kSimpleCombos = {"P1", "P2", "P3", "P4"};

Scheme scheme_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Scheme::P11); ++i)
    if (to_string(static_cast<Scheme>(i)) == s) return static_cast<Scheme>(i);
  throw Error(ErrorCode::InvalidConfig, "unknown combiner '" + std::string(s) + "'");
}

bool is_submodel_id(std::string_view id) {
  for (ModelId m : kAllModels)
    if (to_string(m) == id) return true;
  return false;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num(const json& j) { return j.is_null() ? nan() : j.get<double>(); }

json gbm_json(const GbmParams& g) {
  return {{"trees", g.trees},         {"learning_rate", g.learning_rate}, {"max_depth", g.max_depth},
          {"max_leaves", g.max_leaves}, {"min_leaf", g.min_leaf},         {"max_bins", g.max_bins},
          {"tolerance", g.tolerance}};
}

void gbm_read(const json& j, GbmParams& g) {
  g.trees = j.value("trees", g.trees);
  g.learning_rate = j.value("learning_rate", g.learning_rate);
  g.max_depth = j.value("max_depth", g.max_depth);
  g.max_leaves = j.value("max_leaves", g.max_leaves);
  g.min_leaf = j.value("min_leaf", g.min_leaf);
  g.max_bins = j.value("max_bins", g.max_bins);
  g.tolerance = j.value("tolerance", g.tolerance);
}

json config_json(const RunConfig& c) {
  json j;
  j["input"] = c.input;
  j["dgp"] = c.dgp ? json::parse(dgp_to_json(*c.dgp)) : json(nullptr);
  j["synthetic_weeks"] = c.synthetic_weeks;
  j["diseases"] = c.diseases;
  j["horizons"] = c.horizons;
  j["lag_order"] = c.lag_order;
  j["split_ratio"] = c.split_ratio;
  std::vector<std::string> models, combos;
  for (ModelId m : c.models) models.emplace_back(to_string(m));
  for (Scheme s : c.combiners) combos.emplace_back(to_string(s));
  j["models"] = models;
  j["combiners"] = combos;
  j["seed"] = c.seed;
  j["subset_p"] = c.subset_p;
  j["p3_mode"] = std::string(to_string(c.p3_mode));
  j["output_dir"] = c.output_dir;
  j["mape_squared"] = c.mape_squared;
  j["threads"] = c.threads;
  const SubmodelParams& p = c.submodel;
  j["submodel"] = {{"hm_window", p.hm_window},
                   {"alphas", p.alphas},
                   {"lambda_grid_size", p.lambda_grid_size},
                   {"lambda_grid_ratio", p.lambda_grid_ratio},
                   {"cv_splits", p.cv_splits},
                   {"cv_min_fold_rows", p.cv_min_fold_rows},
                   {"adaptive_cap", p.adaptive_cap},
                   {"cv_tol", p.cv_solver.tol},
                   {"cv_max_sweeps", p.cv_solver.max_sweeps},
                   {"fit_tol", p.fit_solver.tol},
                   {"fit_max_sweeps", p.fit_solver.max_sweeps},
                   {"tune_every", p.tune_every},
                   {"factor_threshold", p.factor_threshold},
                   {"rf_trees", p.rf_trees},
                   {"rf_min_leaf", p.rf_min_leaf},
                   {"knn_k", p.knn_k},
                   {"gbm_x", gbm_json(p.gbm_x)},
                   {"gbm_l", gbm_json(p.gbm_l)}};
  return j;
}

RunConfig config_read(const json& j) {
  RunConfig c;
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  c.input = j.value("input", c.input);
  if (j.contains("dgp") && !j["dgp"].is_null()) c.dgp = dgp_from_json(j["dgp"].dump());
  c.synthetic_weeks = j.value("synthetic_weeks", c.synthetic_weeks);
  c.diseases = j.value("diseases", c.diseases);
  c.horizons = j.value("horizons", c.horizons);
  c.lag_order = j.value("lag_order", c.lag_order);
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  if (j.contains("models")) {
    c.models.clear();
    for (const auto& m : j["models"]) c.models.push_back(model_from_string(m.get<std::string>()));
  }
  if (j.contains("combiners")) {
    c.combiners.clear();
    for (const auto& s : j["combiners"]) c.combiners.push_back(scheme_from_string(s.get<std::string>()));
  }
  c.seed = j.value("seed", c.seed);
  c.subset_p = j.value("subset_p", c.subset_p);
  if (j.contains("p3_mode")) c.p3_mode = bg_mode_from_string(j["p3_mode"].get<std::string>());
  c.output_dir = j.value("output_dir", c.output_dir);
  c.mape_squared = j.value("mape_squared", c.mape_squared);
  c.threads = j.value("threads", c.threads);

  SubmodelParams& p = c.submodel;
  // shorthand for the common overrides
  p.rf_trees = j.value("rf_trees", p.rf_trees);
  if (j.contains("gbm_trees")) p.gbm_x.trees = p.gbm_l.trees = j["gbm_trees"].get<int>();
  if (j.contains("submodel")) {
    const json& s = j["submodel"];
    p.hm_window = s.value("hm_window", p.hm_window);
    p.alphas = s.value("alphas", p.alphas);
    p.lambda_grid_size = s.value("lambda_grid_size", p.lambda_grid_size);
    p.lambda_grid_ratio = s.value("lambda_grid_ratio", p.lambda_grid_ratio);
    p.cv_splits = s.value("cv_splits", p.cv_splits);
    p.cv_min_fold_rows = s.value("cv_min_fold_rows", p.cv_min_fold_rows);
    p.adaptive_cap = s.value("adaptive_cap", p.adaptive_cap);
    p.cv_solver.tol = s.value("cv_tol", p.cv_solver.tol);
    p.cv_solver.max_sweeps = s.value("cv_max_sweeps", p.cv_solver.max_sweeps);
    p.fit_solver.tol = s.value("fit_tol", p.fit_solver.tol);
    p.fit_solver.max_sweeps = s.value("fit_max_sweeps", p.fit_solver.max_sweeps);
    p.tune_every = s.value("tune_every", p.tune_every);
    p.factor_threshold = s.value("factor_threshold", p.factor_threshold);
    p.rf_trees = s.value("rf_trees", p.rf_trees);
    p.rf_min_leaf = s.value("rf_min_leaf", p.rf_min_leaf);
    p.knn_k = s.value("knn_k", p.knn_k);
    if (s.contains("gbm_x")) gbm_read(s["gbm_x"], p.gbm_x);
    if (s.contains("gbm_l")) gbm_read(s["gbm_l"], p.gbm_l);
  }
  c.validate();
  return c;
}

template <typename T>
bool has_duplicates(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) != v.end();
}

// --- pipelines ---------------------------------------------------------------

void add_series(ForecastStore& store, const std::string& label, int horizon, const std::string& model,
                const std::vector<std::string>& weeks, const Eigen::Ref<const Eigen::VectorXd>& f,
                const Eigen::Ref<const Eigen::VectorXd>& y, int first = 0) {
  for (Eigen::Index i = 0; i < f.size(); ++i)
    store.append({label, horizon, weeks[static_cast<std::size_t>(first + i)], model, f(i), y(i)});
}

CombinerSummary summarize(const LinearCombiner& c) {
  CombinerSummary s;
  s.scheme = std::string(to_string(c.scheme));
  s.intercept = c.intercept;
  s.weights.assign(c.w.data(), c.w.data() + c.w.size());
  s.flags = c.flags;
  s.lambda = c.lambda;
  s.alpha = c.alpha;
  s.fit_rows = c.fit_rows;
  return s;
}

void run_combiners(PipelineResult& r, const LagDesign& design, const std::string& label, const RunConfig& config) {
  const int h = design.horizon;
  const int n = static_cast<int>(r.forecasts.rows());
  const int m = static_cast<int>(r.forecasts.cols());
  const PipelineContext& ctx = r.context;
  const Eigen::MatrixXd& F = r.forecasts;
  const Eigen::VectorXd& y = r.actuals;
  auto enabled = [&](Scheme s) {
    return std::find(config.combiners.begin(), config.combiners.end(), s) != config.combiners.end();
  };

  // P1–P4 over the full forecast set
  Eigen::VectorXd out(n);
  if (enabled(Scheme::P1)) {
    for (int i = 0; i < n; ++i) out(i) = combine_equal(F.row(i).transpose());
    add_series(r.store, label, h, "P1", r.weeks, out, y);
  }
  if (enabled(Scheme::P2)) {
    for (int i = 0; i < n; ++i) out(i) = combine_median(F.row(i).transpose());
    add_series(r.store, label, h, "P2", r.weeks, out, y);
  }
  if (enabled(Scheme::P3)) {
    r.p3 = bates_granger_path(F, y, h, 1, config.p3_mode);
    add_series(r.store, label, h, "P3", r.weeks, r.p3.forecast, y);
  }
  if (enabled(Scheme::P4)) {
    r.p4 = bates_granger_path(F, y, h, 0, BgMode::Feasible);
    add_series(r.store, label, h, "P4", r.weeks, r.p4.forecast, y);
  }

  // P5–P11: fit on the forecast rows before eval30 whose targets are realized
  // at the first eval30 origin, frozen afterwards.
  const int eval_begin = ctx.eval30_begin - ctx.train_end;
  const int eval_rows = n - eval_begin;
  const int fit_rows = eval_begin - h + 1;
  const Eigen::VectorXd y_eval = y.tail(eval_rows);
  const Eigen::MatrixXd F_fit = F.topRows(std::max(fit_rows, 0));
  const Eigen::VectorXd y_fit = y.head(std::max(fit_rows, 0));
  auto need_rows = [&](int rows, const char* scheme) {
    if (fit_rows < rows)
      throw Error(ErrorCode::TooFewRows, std::string(scheme) + " has " + std::to_string(fit_rows) +
                                             " realized combiner-fit rows, needs " + std::to_string(rows));
  };
  auto emit_linear = [&](const LinearCombiner& c) {
    for (int i = 0; i < eval_rows; ++i) out(i) = c.predict(F.row(eval_begin + i).transpose());
    add_series(r.store, label, h, std::string(to_string(c.scheme)), r.weeks, out.head(eval_rows), y_eval,
               eval_begin);
    r.combiners.push_back(summarize(c));
  };

  for (Scheme s : {Scheme::P5, Scheme::P6, Scheme::P7}) {
    if (!enabled(s)) continue;
    need_rows(m + 2, to_string(s).data());
    emit_linear(fit_regression_combiner(F_fit, y_fit, s));
  }
  if (enabled(Scheme::P8)) {
    need_rows(m + 2, "P8");
    AenetCombinerOptions opts;
    opts.alphas = config.submodel.alphas;
    opts.grid_size = config.submodel.lambda_grid_size;
    opts.grid_ratio = config.submodel.lambda_grid_ratio;
    opts.cv_splits = config.submodel.cv_splits;
    opts.horizon = h;
    opts.cv_solver = config.submodel.cv_solver;
    opts.fit_solver = config.submodel.fit_solver;
    opts.cap = config.submodel.adaptive_cap;
    emit_linear(fit_aenet_combiner(F_fit, y_fit, opts));
  }
  if (enabled(Scheme::P9)) {
    need_rows(2, "P9");
    const std::uint64_t seed = derive_seed(config.seed, hash_string(label), h, hash_string("P9"));
    const ForestCombiner rf = fit_rf_combiner(F_fit, y_fit, config.submodel.rf_trees, seed);
    for (int i = 0; i < eval_rows; ++i) out(i) = rf.predict(F.row(eval_begin + i).transpose());
    add_series(r.store, label, h, "P9", r.weeks, out.head(eval_rows), y_eval, eval_begin);
    CombinerSummary cs;
    cs.scheme = "P9";
    cs.fit_rows = fit_rows;
    cs.seed = seed;
    cs.candidates = static_cast<int>(rf.forest.trees.size());
    r.combiners.push_back(cs);
  }

  // P10/P11 regress on the design itself, over the same realized window.
  const int design_fit_end = realized_end(ctx.eval30_begin, h);
  for (Scheme s : {Scheme::P10, Scheme::P11}) {
    if (!enabled(s)) continue;
    for (int p : config.subset_p) {
      const std::string id = std::string(to_string(s)) + "_p" + std::to_string(p);
      try {
        const std::uint64_t seed = derive_seed(config.seed, hash_string(label), h, hash_string(id));
        const SubsetPlan plan = plan_for(design, s, p, seed);
        const SubsetEnsemble ens = fit_subset_ensemble(design, design_fit_end, plan);
        for (int i = 0; i < eval_rows; ++i) out(i) = ens.predict(design.x.row(ctx.eval30_begin + i).transpose());
        add_series(r.store, label, h, id, r.weeks, out.head(eval_rows), y_eval, eval_begin);
        CombinerSummary cs;
        cs.scheme = id;
        cs.intercept = ens.intercept;
        cs.flags = ens.flags;
        cs.fit_rows = design_fit_end;
        cs.seed = seed;
        cs.candidates = ens.candidates;
        cs.candidate_space = plan.total;
        cs.rank_deficient = ens.rank_deficient;
        r.combiners.push_back(cs);
      } catch (const Error& e) {
        throw e.tagged(id);
      }
    }
  }
}

// Submodel forecast matrix of one (disease, horizon) read back from a store.
struct SubmodelMatrix {
  std::vector<std::string> names;
  std::vector<std::string> weeks;
  Eigen::MatrixXd f;
  Eigen::VectorXd y;
};

SubmodelMatrix submodel_matrix(const ForecastStore& store, const std::string& disease, int h) {
  SubmodelMatrix out;
  for (const auto& model : store.models(disease, h))
    if (is_submodel_id(model)) out.names.push_back(model);
  if (out.names.empty())
    throw Error(ErrorCode::MissingForecasts, "no submodel forecasts for " + disease + " h=" + std::to_string(h));
  for (std::size_t k = 0; k < out.names.size(); ++k) {
    const ForecastSeries s = store.series(disease, h, out.names[k]);
    if (k == 0) {
      out.weeks = s.weeks;
      out.y = s.actual;
      out.f.resize(s.size(), static_cast<Eigen::Index>(out.names.size()));
    } else if (s.weeks != out.weeks) {
      throw Error(ErrorCode::LengthMismatch, out.names[k] + " is not aligned with " + out.names[0]);
    }
    out.f.col(static_cast<Eigen::Index>(k)) = s.forecast;
  }
  return out;
}

template <typename Task>
void run_tasks(int count, Task&& task) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < count; ++i) {
    try {
      task(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<ModelId> exercise_models(const RunConfig& config) {
  std::vector<ModelId> out;
  for (ModelId m : kMachineLearningModels)
    if (std::find(config.models.begin(), config.models.end(), m) != config.models.end()) out.push_back(m);
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "no machine-learning model enabled");
  return out;
}

std::vector<std::string> model_names(const std::vector<ModelId>& models) {
  std::vector<std::string> out;
  for (ModelId m : models) out.emplace_back(to_string(m));
  return out;
}

json fit_json(const ModelFitSummary& f) {
  return {{"model", f.model},         {"lambda", num(f.lambda)},   {"alpha", num(f.alpha)},
          {"flags", f.flags},         {"flag_names", describe_flags(f.flags)},
          {"factors_min", f.factors_min}, {"factors_max", f.factors_max}, {"trees", f.trees}, {"fits", f.fits}};
}

ModelFitSummary fit_read(const json& j) {
  ModelFitSummary f;
  f.model = j.at("model").get<std::string>();
  f.lambda = num(j.at("lambda"));
  f.alpha = num(j.at("alpha"));
  f.flags = j.at("flags").get<std::uint32_t>();
  f.factors_min = j.at("factors_min").get<int>();
  f.factors_max = j.at("factors_max").get<int>();
  f.trees = j.at("trees").get<int>();
  f.fits = j.at("fits").get<int>();
  return f;
}

json combiner_json(const CombinerSummary& c) {
  json w = json::array();
  for (double v : c.weights) w.push_back(num(v));
  return {{"scheme", c.scheme},
          {"intercept", num(c.intercept)},
          {"weights", w},
          {"flags", c.flags},
          {"flag_names", describe_flags(c.flags)},
          {"lambda", num(c.lambda)},
          {"alpha", num(c.alpha)},
          {"fit_rows", c.fit_rows},
          {"seed", c.seed},
          {"candidates", c.candidates},
          {"candidate_space", c.candidate_space},
          {"rank_deficient", c.rank_deficient}};
}

CombinerSummary combiner_read(const json& j) {
  CombinerSummary c;
  c.scheme = j.at("scheme").get<std::string>();
  c.intercept = num(j.at("intercept"));
  for (const auto& v : j.at("weights")) c.weights.push_back(num(v));
  c.flags = j.at("flags").get<std::uint32_t>();
  c.lambda = num(j.at("lambda"));
  c.alpha = num(j.at("alpha"));
  c.fit_rows = j.at("fit_rows").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.candidates = j.at("candidates").get<int>();
  c.candidate_space = j.at("candidate_space").get<std::uint64_t>();
  c.rank_deficient = j.at("rank_deficient").get<int>();
  return c;
}

json context_json(const PipelineContext& c) {
  return {{"disease", c.disease},     {"horizon", c.horizon},           {"rows", c.rows},
          {"train_end", c.train_end}, {"eval30_begin", c.eval30_begin}, {"mase_scale", c.mase_scale}};
}

PipelineContext context_read(const json& j) {
  PipelineContext c;
  c.disease = j.at("disease").get<std::string>();
  c.horizon = j.at("horizon").get<int>();
  c.rows = j.at("rows").get<int>();
  c.train_end = j.at("train_end").get<int>();
  c.eval30_begin = j.at("eval30_begin").get<int>();
  c.mase_scale = j.at("mase_scale").get<double>();
  return c;
}

}  // namespace

// --- config --------------------------------------------------------------------

void RunConfig::validate() const {
  if (!input.empty() && dgp) throw Error(ErrorCode::InvalidConfig, "give either an input panel or a DGP spec");
  if (horizons.empty()) throw Error(ErrorCode::InvalidConfig, "no horizons");
  for (int h : horizons)
    if (h < 1 || h > 12) throw Error(ErrorCode::InvalidConfig, "horizon " + std::to_string(h) + " outside 1..12");
  if (has_duplicates(horizons)) throw Error(ErrorCode::InvalidConfig, "duplicate horizon");
  if (lag_order < 1) throw Error(ErrorCode::InvalidConfig, "lag_order must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw Error(ErrorCode::InvalidConfig, "split_ratio must be in (0, 1)");
  if (models.empty()) throw Error(ErrorCode::InvalidConfig, "no submodels enabled");
  if (has_duplicates(models)) throw Error(ErrorCode::InvalidConfig, "duplicate model");
  if (has_duplicates(combiners)) throw Error(ErrorCode::InvalidConfig, "duplicate combiner");
  if (has_duplicates(diseases)) throw Error(ErrorCode::InvalidConfig, "duplicate disease");
  for (int p : subset_p)
    if (p < 1) throw Error(ErrorCode::InvalidConfig, "subset size p must be >= 1");
  if (has_duplicates(subset_p)) throw Error(ErrorCode::InvalidConfig, "duplicate p");
  if (synthetic_weeks < 1) throw Error(ErrorCode::InvalidConfig, "synthetic_weeks must be positive");
  if (submodel.rf_trees < 1 || submodel.gbm_x.trees < 1 || submodel.gbm_l.trees < 1)
    throw Error(ErrorCode::InvalidConfig, "tree counts must be positive");
  if (submodel.knn_k < 1) throw Error(ErrorCode::InvalidConfig, "knn_k must be positive");
  if (submodel.alphas.empty()) throw Error(ErrorCode::InvalidConfig, "alpha grid is empty");
  if (threads < 0) throw Error(ErrorCode::InvalidConfig, "threads must be >= 0");
}

std::string config_to_json(const RunConfig& config) { return config_json(config).dump(2); }

RunConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return config_read(j);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad config value: ") + e.what());
  }
}

// Where the reports go does not change what the run computes.
std::string config_hash(const RunConfig& config) {
  json j = config_json(config);
  j.erase("output_dir");
  return hex64(hash_string(j.dump()));
}

RunConfig config_from_manifest(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.contains("config")) throw Error(ErrorCode::InvalidConfig, "manifest has no config");
  return config_from_json(j["config"].dump());
}

SeriesPanel load_panel(const RunConfig& config) {
  if (!config.input.empty()) return read_panel_csv(config.input);
  if (config.dgp) return generate_panel(*config.dgp);
  return generate_panel(default_dgp_spec(config.seed, config.synthetic_weeks));
}

std::vector<std::string> combiner_ids(const RunConfig& config) {
  std::vector<std::string> out;
  for (Scheme s : {Scheme::P1, Scheme::P2, Scheme::P3, Scheme::P4, Scheme::P5, Scheme::P6, Scheme::P7, Scheme::P8,
                   Scheme::P9}) {
    if (std::find(config.combiners.begin(), config.combiners.end(), s) != config.combiners.end())
      out.emplace_back(to_string(s));
  }
  for (Scheme s : {Scheme::P10, Scheme::P11}) {
    if (std::find(config.combiners.begin(), config.combiners.end(), s) == config.combiners.end()) continue;
    for (int p : config.subset_p) out.push_back(std::string(to_string(s)) + "_p" + std::to_string(p));
  }
  return out;
}

// --- pipelines -------------------------------------------------------------------

PipelineResult run_pipeline(const LagDesign& design, const std::vector<std::string>& panel_weeks,
                            const std::string& label, const RunConfig& config, const std::vector<ModelId>& models,
                            bool with_combiners, Clock::time_point deadline) {
  const int h = design.horizon;
  const SplitPlan split = split_initial(design, config.split_ratio);
  const ExpandingWindowSchedule schedule = expanding_schedule(split);

  PipelineResult r;
  PipelineContext& ctx = r.context;
  ctx.disease = label;
  ctx.horizon = h;
  ctx.rows = split.rows;
  ctx.train_end = split.train_end;
  ctx.eval30_begin = split.eval30_begin;
  const int own0 = design.own.begin;
  ctx.mase_scale = naive_scale(design.y.head(split.train_end), design.x.col(own0).head(split.train_end));

  const int n = split.forecast_size();
  const int m = static_cast<int>(models.size());
  for (int i = 0; i < n; ++i)
    r.weeks.push_back(panel_weeks[static_cast<std::size_t>(design.origin[split.train_end + i] + h)]);
  r.submodels = model_names(models);
  r.actuals = design.y.segment(split.train_end, n);
  r.forecasts.resize(n, m);

  r.fits.resize(models.size());
  for (int k = 0; k < m; ++k) {
    r.fits[k].model = r.submodels[k];
    r.fits[k].lambda = r.fits[k].alpha = nan();
  }

  SubmodelParams params = config.submodel;
  params.seed = derive_seed(config.seed, hash_string(label), h);
  SubmodelSuite suite(design, params, models);
  for (int i = 0; i < n; ++i) {
    const ScheduleStep& step = schedule.steps[static_cast<std::size_t>(i)];
    if (Clock::now() > deadline)
      throw Error(ErrorCode::DeadlineExceeded, label + " h=" + std::to_string(h) + " stopped at step " +
                                                   std::to_string(i) + " of " + std::to_string(n));
    try {
      const auto fitted = suite.fit(step.fit_end);
      const Eigen::VectorXd row = design.x.row(step.predict_row).transpose();
      for (int k = 0; k < m; ++k) {
        const double f = fitted[k]->predict(row);
        if (!std::isfinite(f)) throw Error(ErrorCode::NonFiniteInput, r.submodels[k] + " produced a non-finite forecast");
        r.forecasts(i, k) = f;
        const FitMetadata& meta = fitted[k]->metadata();
        ModelFitSummary& s = r.fits[k];
        s.lambda = meta.lambda;
        s.alpha = meta.alpha;
        s.flags |= meta.flags;
        if (meta.factors >= 0) {
          s.factors_min = s.factors_min < 0 ? meta.factors : std::min(s.factors_min, meta.factors);
          s.factors_max = std::max(s.factors_max, meta.factors);
        }
        s.trees = meta.trees;
        ++s.fits;
      }
    } catch (const Error& e) {
      throw e.tagged("week " + r.weeks[static_cast<std::size_t>(i)]);
    }
  }
  for (int k = 0; k < m; ++k) add_series(r.store, label, h, r.submodels[k], r.weeks, r.forecasts.col(k), r.actuals);

  if (with_combiners) run_combiners(r, design, label, config);
  return r;
}

PipelineResult run_disease_pipeline(const SeriesPanel& panel, const std::string& disease, int horizon,
                                    const RunConfig& config, Clock::time_point deadline) {
  try {
    const LagDesign design = build_lag_design(panel, disease, horizon, PredictorSpec::C, config.lag_order);
    return run_pipeline(design, panel.weeks(), disease, config, config.models, true, deadline);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DeadlineExceeded) throw;
    throw e.tagged(disease + " h=" + std::to_string(horizon));
  }
}

BacktestResult run_backtest(const RunConfig& config) {
  config.validate();
  return run_backtest(config, load_panel(config));
}

BacktestResult run_backtest(const RunConfig& config, const SeriesPanel& panel, const RunControl& control) {
  config.validate();
  const auto start = Clock::now();
  const Clock::time_point deadline =
      control.budget_seconds > 0.0
          ? start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(control.budget_seconds))
          : kNoDeadline;
  set_threads(config.threads);

  BacktestResult out;
  out.config = config;
  out.panel_hash = hex64(hash_string(format_panel_csv(panel)));
  const std::vector<std::string> diseases = config.diseases.empty() ? panel.disease_names() : config.diseases;
  for (const auto& d : diseases) panel.disease_index(d);

  std::vector<std::pair<std::string, int>> tasks;
  for (const auto& d : diseases)
    for (int h : config.horizons) tasks.emplace_back(d, h);
  std::vector<PipelineResult> results(tasks.size());
  const int total = static_cast<int>(tasks.size());
  int done = 0;
  run_tasks(total, [&](int i) {
    const auto& [d, h] = tasks[static_cast<std::size_t>(i)];
    results[static_cast<std::size_t>(i)] = run_disease_pipeline(panel, d, h, config, deadline);
#pragma omp critical(fcomb_progress)
    {
      ++done;
      if (control.progress) control.progress(done, total);
    }
  });

  for (auto& r : results) {
    out.contexts.push_back(r.context);
    out.store.append(r.store);
    out.fits.emplace_back(r.context, r.fits);
    out.combiner_fits.emplace_back(r.context, r.combiners);
  }
  out.metrics = compute_metrics(out.store, out.contexts, config.split_ratio, config.p3_mode, config.mape_squared);
  out.weights = weight_trajectories(out.store, out.contexts, config.p3_mode);
  out.table = proportion_table(out.store, out.contexts);
  out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

// --- reports -----------------------------------------------------------------------

std::vector<MetricRow> compute_metrics(const ForecastStore& store, const std::vector<PipelineContext>& contexts,
                                       double /*split_ratio*/, BgMode p3_mode, bool mape_squared) {
  std::vector<MetricRow> rows;
  for (const auto& ctx : contexts) {
    const int n_full = ctx.rows - ctx.train_end;
    const int n_eval = ctx.rows - ctx.eval30_begin;
    auto score = [&](const std::string& model, EvalWindow w, const Eigen::VectorXd& y, const Eigen::VectorXd& f) {
      MetricRow row;
      row.disease = ctx.disease;
      row.horizon = ctx.horizon;
      row.model = model;
      row.window = w;
      try {
        row.mape = mape(y, f, mape_squared);
        row.mase = mase(y, f, ctx.mase_scale);
      } catch (const Error& e) {
        throw e.tagged(ctx.disease + " h=" + std::to_string(ctx.horizon) + " " + model);
      }
      row.n = static_cast<int>(y.size());
      rows.push_back(row);
    };

    std::optional<SubmodelMatrix> eval_subs;
    for (const auto& model : store.models(ctx.disease, ctx.horizon)) {
      const ForecastSeries s = store.series(ctx.disease, ctx.horizon, model);
      if (s.size() == n_full) {
        score(model, EvalWindow::FullForecastSet, s.actual, s.forecast);
        if (model == "P3" || model == "P4") {
          if (!eval_subs) eval_subs = submodel_matrix(store, ctx.disease, ctx.horizon);
          const Eigen::MatrixXd f = eval_subs->f.bottomRows(n_eval);
          const Eigen::VectorXd y = eval_subs->y.tail(n_eval);
          const WeightPath path = model == "P3" ? bates_granger_path(f, y, ctx.horizon, 1, p3_mode)
                                                : bates_granger_path(f, y, ctx.horizon, 0, BgMode::Feasible);
          score(model, EvalWindow::Eval30, y, path.forecast);
        } else {
          score(model, EvalWindow::Eval30, s.actual.tail(n_eval), s.forecast.tail(n_eval));
        }
      } else if (s.size() == n_eval) {
        score(model, EvalWindow::Eval30, s.actual, s.forecast);
      } else {
        throw Error(ErrorCode::LengthMismatch, model + " for " + ctx.disease + " h=" + std::to_string(ctx.horizon) +
                                                   " has " + std::to_string(s.size()) + " forecasts");
      }
    }
  }
  return rows;
}

std::vector<WeightRow> weight_trajectories(const ForecastStore& store, const std::vector<PipelineContext>& contexts,
                                           BgMode p3_mode) {
  std::vector<WeightRow> rows;
  for (const auto& ctx : contexts) {
    for (const char* scheme : {"P3", "P4"}) {
      if (!store.has(ctx.disease, ctx.horizon, scheme)) continue;
      const SubmodelMatrix sub = submodel_matrix(store, ctx.disease, ctx.horizon);
      const bool p3 = std::string_view(scheme) == "P3";
      const WeightPath path =
          bates_granger_path(sub.f, sub.y, ctx.horizon, p3 ? 1 : 0, p3 ? p3_mode : BgMode::Feasible);
      for (Eigen::Index i = 0; i < path.weights.rows(); ++i)
        for (Eigen::Index k = 0; k < path.weights.cols(); ++k)
          rows.push_back({ctx.disease, ctx.horizon, sub.weeks[static_cast<std::size_t>(i)], scheme,
                          sub.names[static_cast<std::size_t>(k)], path.weights(i, k)});
    }
  }
  return rows;
}

std::vector<NonEquivalenceCell> proportion_table(const ForecastStore& store,
                                                 const std::vector<PipelineContext>& contexts) {
  std::vector<NonEquivalenceCell> out;
  for (const auto& ctx : contexts) {
    bool complete = true;
    for (const auto& c : kSimpleCombos) complete = complete && store.has(ctx.disease, ctx.horizon, c);
    if (!complete) continue;
    std::vector<std::string> subs;
    for (const auto& model : store.models(ctx.disease, ctx.horizon))
      if (is_submodel_id(model)) subs.push_back(model);
    auto cells = nonequivalence_table(store, {ctx.disease}, {ctx.horizon}, subs, kSimpleCombos);
    out.push_back(cells.front());
  }
  return out;
}

std::string format_metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "disease,horizon,model,mape,mase,eval_window\n";
  for (const auto& r : rows) {
    out += csv::escape(r.disease) + ',' + std::to_string(r.horizon) + ',' + csv::escape(r.model) + ',' +
           csv::format_double(r.mape) + ',' + csv::format_double(r.mase) + ',' + std::string(to_string(r.window)) +
           '\n';
  }
  return out;
}

std::string format_metrics_json(const std::vector<MetricRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"disease", r.disease},
                   {"horizon", r.horizon},
                   {"model", r.model},
                   {"eval_window", std::string(to_string(r.window))},
                   {"mape", r.mape},
                   {"mase", r.mase},
                   {"n", r.n}});
  return arr.dump(2) + "\n";
}

std::string format_dm_table_csv(const std::vector<NonEquivalenceCell>& cells) {
  std::vector<std::string> diseases;
  std::vector<int> horizons;
  for (const auto& c : cells) {
    if (std::find(diseases.begin(), diseases.end(), c.disease) == diseases.end()) diseases.push_back(c.disease);
    if (std::find(horizons.begin(), horizons.end(), c.horizon) == horizons.end()) horizons.push_back(c.horizon);
  }
  std::sort(horizons.begin(), horizons.end());
  std::string out = "disease";
  for (int h : horizons) out += ",h" + std::to_string(h);
  out += '\n';
  for (const auto& d : diseases) {
    out += csv::escape(d);
    for (int h : horizons) {
      out += ',';
      for (const auto& c : cells)
        if (c.disease == d && c.horizon == h) out += csv::format_double(c.proportion());
    }
    out += '\n';
  }
  return out;
}

std::string format_weights_csv(const std::vector<WeightRow>& rows) {
  std::string out = "disease,horizon,week,scheme,model_id,weight\n";
  for (const auto& r : rows) {
    out += csv::escape(r.disease) + ',' + std::to_string(r.horizon) + ',' + csv::escape(r.week) + ',' + r.scheme +
           ',' + csv::escape(r.model) + ',' + csv::format_double(r.weight) + '\n';
  }
  return out;
}

std::string format_manifest(const BacktestResult& result) {
  json j;
  j["software_version"] = std::string(kSoftwareVersion);
  j["config"] = config_json(result.config);
  j["config_hash"] = config_hash(result.config);
  j["panel_hash"] = result.panel_hash;
  j["seed"] = result.config.seed;
  j["wall_clock_seconds"] = result.seconds;
  j["combiner_outputs"] = combiner_ids(result.config);
  json pipelines = json::array();
  for (std::size_t i = 0; i < result.contexts.size(); ++i) {
    json p = context_json(result.contexts[i]);
    p["submodel_seed"] = derive_seed(result.config.seed, hash_string(result.contexts[i].disease),
                                     result.contexts[i].horizon);
    json fits = json::array(), combos = json::array();
    if (i < result.fits.size())
      for (const auto& f : result.fits[i].second) fits.push_back(fit_json(f));
    if (i < result.combiner_fits.size())
      for (const auto& c : result.combiner_fits[i].second) combos.push_back(combiner_json(c));
    p["submodels"] = fits;
    p["combiners"] = combos;
    pipelines.push_back(p);
  }
  j["pipelines"] = pipelines;
  return j.dump(2) + "\n";
}

std::string format_aggregation_csv(const std::vector<AggregationRow>& rows) {
  std::string out = "horizon,model,source,mape,mase,eval_window\n";
  for (const auto& r : rows)
    out += std::to_string(r.horizon) + ',' + csv::escape(r.model) + ',' + r.source + ',' +
           csv::format_double(r.mape) + ',' + csv::format_double(r.mase) + ',' + std::string(to_string(r.window)) +
           '\n';
  return out;
}

std::string format_plot_csv(const ForecastStore& store, const std::string& disease, int horizon) {
  const auto models = store.models(disease, horizon);
  std::vector<std::string> weeks;
  std::vector<double> actual;
  std::vector<ForecastSeries> series;
  for (const auto& m : models) {
    series.push_back(store.series(disease, horizon, m));
    const auto& s = series.back();
    for (int i = 0; i < s.size(); ++i) {
      if (std::find(weeks.begin(), weeks.end(), s.weeks[i]) == weeks.end()) {
        weeks.push_back(s.weeks[i]);
        actual.push_back(s.actual(i));
      }
    }
  }
  std::string out = "target_week,actual";
  for (const auto& m : models) out += ',' + csv::escape(m);
  out += '\n';
  for (std::size_t w = 0; w < weeks.size(); ++w) {
    out += csv::escape(weeks[w]) + ',' + csv::format_double(actual[w]);
    for (const auto& s : series) {
      out += ',';
      const auto it = std::find(s.weeks.begin(), s.weeks.end(), weeks[w]);
      if (it != s.weeks.end()) out += csv::format_double(s.forecast(it - s.weeks.begin()));
    }
    out += '\n';
  }
  return out;
}

void emit_reports(const BacktestResult& result, const std::filesystem::path& outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir / "plots", ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + outdir.string() + ": " + ec.message());
  write_forecast_csv(result.store, outdir / "forecasts.csv");
  write_text_file(outdir / "metrics.csv", format_metrics_csv(result.metrics));
  write_text_file(outdir / "metrics.json", format_metrics_json(result.metrics));
  write_text_file(outdir / "dm_table.csv", format_dm_table_csv(result.table));
  write_text_file(outdir / "weights.csv", format_weights_csv(result.weights));
  write_text_file(outdir / "manifest.json", format_manifest(result));
  for (const auto& ctx : result.contexts) {
    const std::string name = ctx.disease + "_h" + std::to_string(ctx.horizon) + ".csv";
    write_text_file(outdir / "plots" / name, format_plot_csv(result.store, ctx.disease, ctx.horizon));
  }
}

BacktestResult load_run(const std::filesystem::path& dir) {
  const std::string text = read_text_file(dir / "manifest.json");
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("manifest is not valid JSON: ") + e.what());
  }
  BacktestResult out;
  out.config = config_from_manifest(text);
  try {
    out.panel_hash = j.at("panel_hash").get<std::string>();
    out.seconds = j.at("wall_clock_seconds").get<double>();
    for (const auto& p : j.at("pipelines")) {
      const PipelineContext ctx = context_read(p);
      out.contexts.push_back(ctx);
      std::vector<ModelFitSummary> fits;
      for (const auto& f : p.at("submodels")) fits.push_back(fit_read(f));
      std::vector<CombinerSummary> combos;
      for (const auto& c : p.at("combiners")) combos.push_back(combiner_read(c));
      out.fits.emplace_back(ctx, fits);
      out.combiner_fits.emplace_back(ctx, combos);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed manifest: ") + e.what());
  }
  out.store = read_forecast_csv(dir / "forecasts.csv");
  const RunConfig& c = out.config;
  out.metrics = compute_metrics(out.store, out.contexts, c.split_ratio, c.p3_mode, c.mape_squared);
  out.weights = weight_trajectories(out.store, out.contexts, c.p3_mode);
  out.table = proportion_table(out.store, out.contexts);
  return out;
}

// --- exercises ---------------------------------------------------------------------

ExerciseResult run_exercise_allcause(const RunConfig& config, bool with_exog) {
  config.validate();
  return run_exercise_allcause(config, load_panel(config), with_exog);
}

ExerciseResult run_exercise_allcause(const RunConfig& config, const SeriesPanel& panel, bool with_exog) {
  config.validate();
  set_threads(config.threads);
  const std::vector<ModelId> models = exercise_models(config);
  const std::string label = with_exog ? "all_cause_env" : "all_cause";
  std::vector<PipelineResult> results(config.horizons.size());
  run_tasks(static_cast<int>(results.size()), [&](int i) {
    const int h = config.horizons[static_cast<std::size_t>(i)];
    try {
      const LagDesign design = build_total_design(panel, h, with_exog, config.lag_order);
      results[static_cast<std::size_t>(i)] = run_pipeline(design, panel.weeks(), label, config, models, false);
    } catch (const Error& e) {
      throw e.tagged(label + " h=" + std::to_string(h));
    }
  });
  ExerciseResult out;
  for (auto& r : results) {
    out.contexts.push_back(r.context);
    out.store.append(r.store);
  }
  out.metrics = compute_metrics(out.store, out.contexts, config.split_ratio, config.p3_mode, config.mape_squared);
  return out;
}

ForecastStore aggregate_forecasts(const ForecastStore& cause_store, const std::vector<std::string>& diseases,
                                  const std::vector<int>& horizons, const std::vector<std::string>& models) {
  ForecastStore out;
  for (int h : horizons) {
    for (const auto& model : models) {
      ForecastSeries total;
      for (std::size_t d = 0; d < diseases.size(); ++d) {
        if (!cause_store.has(diseases[d], h, model))
          throw Error(ErrorCode::MissingCauseForecasts,
                      model + " h=" + std::to_string(h) + " missing for " + diseases[d]);
        const ForecastSeries s = cause_store.series(diseases[d], h, model);
        if (d == 0) {
          total = s;
        } else {
          if (s.weeks != total.weeks)
            throw Error(ErrorCode::LengthMismatch, diseases[d] + " target weeks differ for " + model);
          total.forecast += s.forecast;
          total.actual += s.actual;
        }
      }
      for (int i = 0; i < total.size(); ++i)
        out.append({"all_cause_aggregated", h, total.weeks[static_cast<std::size_t>(i)], model, total.forecast(i),
                    total.actual(i)});
    }
  }
  return out;
}

AggregationResult run_exercise_aggregation(const RunConfig& config) {
  config.validate();
  return run_exercise_aggregation(config, load_panel(config));
}

AggregationResult run_exercise_aggregation(const RunConfig& config, const SeriesPanel& panel,
                                           const ForecastStore* cause_forecasts) {
  config.validate();
  set_threads(config.threads);
  const std::vector<std::string> diseases = panel.disease_names();
  const std::vector<std::string> models = model_names(config.models);

  ForecastStore causes;
  if (cause_forecasts == nullptr) {
    RunConfig cause_config = config;
    cause_config.diseases = diseases;
    cause_config.combiners.clear();
    std::vector<PipelineResult> results(diseases.size() * config.horizons.size());
    run_tasks(static_cast<int>(results.size()), [&](int i) {
      const auto& d = diseases[static_cast<std::size_t>(i) / config.horizons.size()];
      const int h = config.horizons[static_cast<std::size_t>(i) % config.horizons.size()];
      results[static_cast<std::size_t>(i)] = run_disease_pipeline(panel, d, h, cause_config);
    });
    for (auto& r : results) causes.append(r.store);
    cause_forecasts = &causes;
  }

  AggregationResult out;
  out.aggregated = aggregate_forecasts(*cause_forecasts, diseases, config.horizons, models);

  // Direct forecasts of the total with the same models and environmental lags.
  std::vector<PipelineResult> direct(config.horizons.size());
  run_tasks(static_cast<int>(direct.size()), [&](int i) {
    const int h = config.horizons[static_cast<std::size_t>(i)];
    try {
      const LagDesign design = build_total_design(panel, h, true, config.lag_order);
      direct[static_cast<std::size_t>(i)] =
          run_pipeline(design, panel.weeks(), "all_cause_direct", config, config.models, false);
    } catch (const Error& e) {
      throw e.tagged("all_cause_direct h=" + std::to_string(h));
    }
  });

  for (std::size_t i = 0; i < direct.size(); ++i) {
    const PipelineResult& d = direct[i];
    out.direct.append(d.store);
    const int h = d.context.horizon;
    const int n_eval = d.context.rows - d.context.eval30_begin;
    for (const auto& model : models) {
      for (const char* source : {"aggregated", "direct"}) {
        const bool agg = std::string_view(source) == "aggregated";
        const ForecastSeries s = agg ? out.aggregated.series("all_cause_aggregated", h, model)
                                     : d.store.series("all_cause_direct", h, model);
        for (EvalWindow w : {EvalWindow::FullForecastSet, EvalWindow::Eval30}) {
          const int n = w == EvalWindow::Eval30 ? n_eval : s.size();
          AggregationRow row;
          row.horizon = h;
          row.model = model;
          row.source = source;
          row.window = w;
          row.mape = mape(s.actual.tail(n), s.forecast.tail(n), config.mape_squared);
          row.mase = mase(s.actual.tail(n), s.forecast.tail(n), d.context.mase_scale);
          row.n = n;
          out.rows.push_back(row);
        }
      }
    }
  }
  return out;
}

}  // namespace fcomb
