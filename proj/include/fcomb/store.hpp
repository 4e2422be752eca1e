#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <tuple>
#include <string>
#include <string_view>
#include <vector>

namespace fcomb {

struct ForecastRecord {
  std::string disease;
  int horizon = 1;
  std::string target_week;
  std::string model_id;
  double forecast = 0.0;
  double actual = 0.0;

  bool operator==(const ForecastRecord&) const = default;
};

/// Forecasts of one (disease, horizon, model) aligned by target week.
struct ForecastSeries {
  std::vector<std::string> weeks;
  Eigen::VectorXd forecast;
  Eigen::VectorXd actual;
  int size() const { return static_cast<int>(weeks.size()); }
};

/// Long-format forecast records: (disease, horizon, target_week, model_id,
/// forecast, actual). Records keep insertion order; the CSV is written in
/// canonical order (disease, horizon, model, week as inserted).
class ForecastStore {
 public:
  void append(ForecastRecord record);
  void append(const ForecastStore& other);
  const std::vector<ForecastRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// Throws MissingForecasts when the series is absent.
  ForecastSeries series(std::string_view disease, int horizon, std::string_view model) const;
  bool has(std::string_view disease, int horizon, std::string_view model) const;

  /// Distinct keys in first-appearance order.
  std::vector<std::string> diseases() const;
  std::vector<int> horizons() const;
  std::vector<std::string> models() const;
  std::vector<std::string> models(std::string_view disease, int horizon) const;

  /// Stable sort by (disease order, horizon, model order) keeping week order.
  void canonicalize(const std::vector<std::string>& disease_order, const std::vector<std::string>& model_order);

  bool operator==(const ForecastStore& other) const { return records_ == other.records_; }

 private:
  using Key = std::tuple<std::string, int, std::string>;
  const std::vector<std::size_t>* find(std::string_view disease, int horizon, std::string_view model) const;

  std::vector<ForecastRecord> records_;
  mutable std::map<Key, std::vector<std::size_t>, std::less<>> index_;
  mutable std::size_t indexed_ = 0;
};

inline constexpr std::string_view kForecastCsvHeader = "disease,horizon,target_week,model_id,forecast,actual";

std::string format_forecast_csv(const ForecastStore& store);
ForecastStore parse_forecast_csv(std::string_view text);
void write_forecast_csv(const ForecastStore& store, const std::filesystem::path& path);
ForecastStore read_forecast_csv(const std::filesystem::path& path);

}  // namespace fcomb
