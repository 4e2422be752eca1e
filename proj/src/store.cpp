#include "fcomb/store.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>

#include "fcomb/error.hpp"
#include "fcomb/panel.hpp"

namespace fcomb {

namespace {

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

void ForecastStore::append(ForecastRecord record) { records_.push_back(std::move(record)); }

void ForecastStore::append(const ForecastStore& other) {
  records_.insert(records_.end(), other.records_.begin(), other.records_.end());
}

const std::vector<std::size_t>* ForecastStore::find(std::string_view disease, int horizon,
                                                    std::string_view model) const {
  if (indexed_ > records_.size()) {
    index_.clear();
    indexed_ = 0;
  }
  for (; indexed_ < records_.size(); ++indexed_) {
    const auto& r = records_[indexed_];
    index_[Key{r.disease, r.horizon, r.model_id}].push_back(indexed_);
  }
  const auto it = index_.find(Key{std::string(disease), horizon, std::string(model)});
  return it == index_.end() ? nullptr : &it->second;
}

bool ForecastStore::has(std::string_view disease, int horizon, std::string_view model) const {
  return find(disease, horizon, model) != nullptr;
}

ForecastSeries ForecastStore::series(std::string_view disease, int horizon, std::string_view model) const {
  ForecastSeries s;
  std::vector<double> f, a;
  if (const auto* rows = find(disease, horizon, model)) {
    for (std::size_t i : *rows) {
      const auto& r = records_[i];
      s.weeks.push_back(r.target_week);
      f.push_back(r.forecast);
      a.push_back(r.actual);
    }
  }
  if (s.weeks.empty())
    throw Error(ErrorCode::MissingForecasts, std::string(model) + " for " + std::string(disease) + " h=" +
                                                 std::to_string(horizon));
  s.forecast = Eigen::Map<Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  s.actual = Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  return s;
}

std::vector<std::string> ForecastStore::diseases() const {
  std::vector<std::string> out;
  for (const auto& r : records_) push_unique(out, r.disease);
  return out;
}

std::vector<int> ForecastStore::horizons() const {
  std::vector<int> out;
  for (const auto& r : records_) push_unique(out, r.horizon);
  return out;
}

std::vector<std::string> ForecastStore::models() const {
  std::vector<std::string> out;
  for (const auto& r : records_) push_unique(out, r.model_id);
  return out;
}

std::vector<std::string> ForecastStore::models(std::string_view disease, int horizon) const {
  std::vector<std::string> out;
  for (const auto& r : records_)
    if (r.horizon == horizon && r.disease == disease) push_unique(out, r.model_id);
  return out;
}

void ForecastStore::canonicalize(const std::vector<std::string>& disease_order,
                                 const std::vector<std::string>& model_order) {
  auto rank = [](const std::vector<std::string>& order, const std::string& key) {
    const auto it = std::find(order.begin(), order.end(), key);
    return static_cast<std::size_t>(it - order.begin());
  };
  std::stable_sort(records_.begin(), records_.end(), [&](const ForecastRecord& a, const ForecastRecord& b) {
    const auto da = rank(disease_order, a.disease), db = rank(disease_order, b.disease);
    if (da != db) return da < db;
    if (a.horizon != b.horizon) return a.horizon < b.horizon;
    return rank(model_order, a.model_id) < rank(model_order, b.model_id);
  });
  index_.clear();
  indexed_ = 0;
}

std::string format_forecast_csv(const ForecastStore& store) {
  std::string out(kForecastCsvHeader);
  out += '\n';
  for (const auto& r : store.records()) {
    out += csv::escape(r.disease);
    out += ',';
    out += std::to_string(r.horizon);
    out += ',';
    out += csv::escape(r.target_week);
    out += ',';
    out += csv::escape(r.model_id);
    out += ',';
    out += csv::format_double(r.forecast);
    out += ',';
    out += csv::format_double(r.actual);
    out += '\n';
  }
  return out;
}

ForecastStore parse_forecast_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw Error(ErrorCode::MalformedCsv, "empty forecast file");
  const std::vector<std::string> header = {"disease", "horizon", "target_week", "model_id", "forecast", "actual"};
  if (rows[0] != header) throw Error(ErrorCode::MalformedCsv, "unexpected forecast header");
  ForecastStore store;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size())
      throw Error(ErrorCode::MalformedCsv, "forecast row " + std::to_string(i + 1) + " has the wrong width");
    ForecastRecord r;
    r.disease = row[0];
    const auto [p, ec] = std::from_chars(row[1].data(), row[1].data() + row[1].size(), r.horizon);
    if (ec != std::errc() || p != row[1].data() + row[1].size())
      throw Error(ErrorCode::MalformedCsv, "bad horizon '" + row[1] + "'");
    r.target_week = row[2];
    r.model_id = row[3];
    r.forecast = csv::parse_double(row[4]);
    r.actual = csv::parse_double(row[5]);
    store.append(std::move(r));
  }
  return store;
}

void write_forecast_csv(const ForecastStore& store, const std::filesystem::path& path) {
  write_text_file(path, format_forecast_csv(store));
}

ForecastStore read_forecast_csv(const std::filesystem::path& path) { return parse_forecast_csv(read_text_file(path)); }

}  // namespace fcomb
