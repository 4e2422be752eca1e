#include "fcomb/design.hpp"

#include <cmath>

#include "fcomb/error.hpp"
#include "json.hpp"

namespace fcomb {

namespace {

struct Source {
  std::string name;
  const std::vector<double>* values;
};

LagDesign assemble(const SeriesPanel& panel, std::string target_name, const std::vector<double>& target,
                   const std::vector<Source>& env, const std::vector<Source>& cross, int horizon,
                   int lag_order, PredictorSpec spec) {
  if (horizon < 1) throw Error(ErrorCode::InvalidConfig, "horizon must be >= 1");
  if (lag_order < 1) throw Error(ErrorCode::InvalidConfig, "lag_order must be >= 1");
  const int length = static_cast<int>(panel.length());
  const int rows = length - (lag_order - 1) - horizon;
  if (rows < 1)
    throw Error(ErrorCode::PanelTooShort, "panel length " + std::to_string(length) + " < lag_order + horizon");

  const int n_vars = 1 + static_cast<int>(env.size() + cross.size());
  const int cols = n_vars * lag_order;

  LagDesign d;
  d.target = std::move(target_name);
  d.horizon = horizon;
  d.lag_order = lag_order;
  d.spec = spec;
  d.x.resize(rows, cols);
  d.y.resize(rows);
  d.origin.resize(rows);
  d.own = {0, lag_order};
  d.env = {lag_order, lag_order * (1 + static_cast<int>(env.size()))};
  d.cross = {d.env.end, cols};

  std::vector<Source> all;
  all.push_back({d.target, &target});
  all.insert(all.end(), env.begin(), env.end());
  all.insert(all.end(), cross.begin(), cross.end());
  for (int v = 0; v < n_vars; ++v) {
    d.group_names.push_back(all[v].name);
    for (int l = 0; l < lag_order; ++l) {
      d.column_names.push_back(all[v].name + "@lag" + std::to_string(l));
      d.column_group.push_back(v);
    }
  }

  for (int r = 0; r < rows; ++r) {
    const int t = r + lag_order - 1;
    d.origin[r] = t;
    d.y(r) = target[t + horizon];
    for (int v = 0; v < n_vars; ++v) {
      const auto& series = *all[v].values;
      for (int l = 0; l < lag_order; ++l) d.x(r, v * lag_order + l) = series[t - l];
    }
  }
  return d;
}

const char* spec_name(PredictorSpec s) {
  switch (s) {
    case PredictorSpec::A: return "A";
    case PredictorSpec::B: return "B";
    case PredictorSpec::C: return "C";
  }
  return "C";
}

PredictorSpec spec_from_name(const std::string& s) {
  if (s == "A") return PredictorSpec::A;
  if (s == "B") return PredictorSpec::B;
  if (s == "C") return PredictorSpec::C;
  throw Error(ErrorCode::MalformedCsv, "unknown predictor spec " + s);
}

int floor_fraction(double ratio, int n) {
  // Guard against 0.7 * 100 landing just below 70.
  return static_cast<int>(std::floor(ratio * n + 1e-9));
}

}  // namespace

bool LagDesign::operator==(const LagDesign& o) const {
  return target == o.target && horizon == o.horizon && lag_order == o.lag_order && spec == o.spec &&
         x.rows() == o.x.rows() && x.cols() == o.x.cols() && x == o.x && y.size() == o.y.size() &&
         y == o.y && origin == o.origin && column_names == o.column_names &&
         column_group == o.column_group && group_names == o.group_names && own == o.own &&
         env == o.env && cross == o.cross;
}

LagDesign build_lag_design(const SeriesPanel& panel, std::string_view disease, int horizon,
                           PredictorSpec spec, int lag_order) {
  const std::size_t target = panel.disease_index(disease);
  std::vector<Source> env, cross;
  if (spec != PredictorSpec::A)
    for (const auto& s : panel.env()) env.push_back({s.name, &s.values});
  if (spec == PredictorSpec::C)
    for (std::size_t i = 0; i < panel.diseases().size(); ++i)
      if (i != target) cross.push_back({panel.diseases()[i].name, &panel.diseases()[i].values});
  return assemble(panel, panel.diseases()[target].name, panel.diseases()[target].values, env, cross,
                  horizon, lag_order, spec);
}

LagDesign build_total_design(const SeriesPanel& panel, int horizon, bool with_env, int lag_order) {
  const std::vector<double> total = panel.total_admissions();
  std::vector<Source> env;
  if (with_env)
    for (const auto& s : panel.env()) env.push_back({s.name, &s.values});
  return assemble(panel, "all_cause", total, env, {}, horizon, lag_order,
                  with_env ? PredictorSpec::B : PredictorSpec::A);
}

int predictor_count(PredictorSpec spec, int n_env, int n_diseases, int lag_order) {
  switch (spec) {
    case PredictorSpec::A: return lag_order;
    case PredictorSpec::B: return lag_order * (1 + n_env);
    case PredictorSpec::C: return lag_order * (n_env + n_diseases);
  }
  return 0;
}

ColumnBlock spec_columns(const LagDesign& d, PredictorSpec spec) {
  switch (spec) {
    case PredictorSpec::A: return d.own;
    case PredictorSpec::B: return {0, d.env.end};
    case PredictorSpec::C: return {0, d.cols()};
  }
  return {0, d.cols()};
}

std::string design_to_json(const LagDesign& d) {
  nlohmann::json j;
  j["target"] = d.target;
  j["horizon"] = d.horizon;
  j["lag_order"] = d.lag_order;
  j["spec"] = spec_name(d.spec);
  j["origin"] = d.origin;
  j["column_names"] = d.column_names;
  j["column_group"] = d.column_group;
  j["group_names"] = d.group_names;
  j["blocks"] = {d.own.begin, d.own.end, d.env.begin, d.env.end, d.cross.begin, d.cross.end};
  j["y"] = std::vector<double>(d.y.data(), d.y.data() + d.y.size());
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < d.rows(); ++r) {
    std::vector<double> row(d.cols());
    for (int c = 0; c < d.cols(); ++c) row[c] = d.x(r, c);
    rows.push_back(std::move(row));
  }
  j["x"] = std::move(rows);
  return j.dump();
}

LagDesign design_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  LagDesign d;
  d.target = j.at("target").get<std::string>();
  d.horizon = j.at("horizon").get<int>();
  d.lag_order = j.at("lag_order").get<int>();
  d.spec = spec_from_name(j.at("spec").get<std::string>());
  d.origin = j.at("origin").get<std::vector<int>>();
  d.column_names = j.at("column_names").get<std::vector<std::string>>();
  d.column_group = j.at("column_group").get<std::vector<int>>();
  d.group_names = j.at("group_names").get<std::vector<std::string>>();
  const auto b = j.at("blocks").get<std::vector<int>>();
  d.own = {b.at(0), b.at(1)};
  d.env = {b.at(2), b.at(3)};
  d.cross = {b.at(4), b.at(5)};
  const auto y = j.at("y").get<std::vector<double>>();
  d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const auto& rows = j.at("x");
  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.column_names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = rows[r].get<std::vector<double>>();
    for (std::size_t c = 0; c < row.size(); ++c) d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return d;
}

SplitPlan split_initial(const LagDesign& design, double ratio) {
  return split_initial(design.rows(), design.horizon, ratio);
}

SplitPlan split_initial(int rows, int horizon, double ratio) {
  if (rows < 10) throw Error(ErrorCode::TooFewRows, std::to_string(rows) + " design rows, need >= 10");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidConfig, "split ratio must lie in (0,1)");
  SplitPlan p;
  p.rows = rows;
  p.horizon = horizon;
  p.train_end = floor_fraction(ratio, rows);
  const int forecast = rows - p.train_end;
  p.eval30_begin = rows - floor_fraction(1.0 - ratio, forecast);
  return p;
}

ExpandingWindowSchedule expanding_schedule(const SplitPlan& split) {
  ExpandingWindowSchedule s;
  s.horizon = split.horizon;
  for (int row = split.train_end; row < split.rows; ++row)
    s.steps.push_back({realized_end(row, split.horizon), row});
  return s;
}

int ColumnStats::zero_variance_count() const {
  int n = 0;
  for (bool z : zero_variance) n += z;
  return n;
}

Eigen::VectorXd ColumnStats::apply(const Eigen::Ref<const Eigen::VectorXd>& raw) const {
  Eigen::VectorXd z(raw.size());
  for (Eigen::Index j = 0; j < raw.size(); ++j)
    z(j) = zero_variance[j] ? 0.0 : (raw(j) - mean(j)) / sd(j);
  return z;
}

Eigen::MatrixXd ColumnStats::apply_rows(const Eigen::Ref<const Eigen::MatrixXd>& raw) const {
  Eigen::MatrixXd z(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    if (zero_variance[j])
      z.col(j).setZero();
    else
      z.col(j) = (raw.col(j).array() - mean(j)) / sd(j);
  }
  return z;
}

ColumnStats column_stats(const Eigen::Ref<const Eigen::MatrixXd>& fit_block) {
  const Eigen::Index n = fit_block.rows();
  if (n < 2) throw Error(ErrorCode::TooFewRows, "standardization needs >= 2 fit rows");
  ColumnStats s;
  s.mean = fit_block.colwise().mean().transpose();
  s.sd.resize(fit_block.cols());
  s.zero_variance.assign(static_cast<std::size_t>(fit_block.cols()), false);
  for (Eigen::Index j = 0; j < fit_block.cols(); ++j) {
    const double ss = (fit_block.col(j).array() - s.mean(j)).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 1e-12 * (1.0 + std::abs(s.mean(j))))) {
      s.zero_variance[j] = true;
      s.sd(j) = 0.0;
    } else {
      s.sd(j) = sd;
    }
  }
  return s;
}

StandardizedDesign standardize_columns(const LagDesign& design, int fit_end) {
  StandardizedDesign out{design, column_stats(design.x.topRows(fit_end))};
  out.design.x = out.stats.apply_rows(design.x);
  return out;
}

}  // namespace fcomb
