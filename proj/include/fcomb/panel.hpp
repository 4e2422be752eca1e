#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fcomb {

/// ISO-style epidemiological week label `YYYY-Www`.
struct EpiWeek {
  int year = 0;
  int week = 0;

  auto operator<=>(const EpiWeek&) const = default;
};

namespace epiweek {

EpiWeek parse(std::string_view label);
std::string format(EpiWeek w);
/// 52 or 53, per the ISO-8601 week-numbering year.
int weeks_in_year(int year);
EpiWeek next(EpiWeek w);
/// Consecutive labels starting at `first`.
std::vector<std::string> sequence(EpiWeek first, std::size_t count);

}  // namespace epiweek

struct NamedSeries {
  std::string name;
  std::vector<double> values;

  bool operator==(const NamedSeries&) const = default;
};

/// Aligned weekly panel of disease counts and environmental covariates.
///
/// Construction validates the invariants: identical lengths, strictly
/// increasing gap-free week labels, non-negative finite counts and finite
/// covariates. Instances are immutable afterwards.
class SeriesPanel {
 public:
  SeriesPanel() = default;
  SeriesPanel(std::vector<std::string> weeks, std::vector<NamedSeries> diseases,
              std::vector<NamedSeries> env);

  std::size_t length() const { return weeks_.size(); }
  const std::vector<std::string>& weeks() const { return weeks_; }
  const std::vector<NamedSeries>& diseases() const { return diseases_; }
  const std::vector<NamedSeries>& env() const { return env_; }

  /// Throws UnknownDisease.
  std::size_t disease_index(std::string_view name) const;
  std::vector<std::string> disease_names() const;

  /// Sum of every disease series, week by week.
  std::vector<double> total_admissions() const;

  bool operator==(const SeriesPanel&) const = default;

 private:
  std::vector<std::string> weeks_;
  std::vector<NamedSeries> diseases_;
  std::vector<NamedSeries> env_;
};

/// Panel CSV: header `epi_week,ed.<name>...,env.<name>...`, one row per week.
SeriesPanel parse_panel_csv(std::string_view text);
SeriesPanel read_panel_csv(const std::filesystem::path& path);
std::string format_panel_csv(const SeriesPanel& panel);
void write_panel_csv(const SeriesPanel& panel, const std::filesystem::path& path);

namespace csv {

/// RFC 4180 record splitting (quoted fields, doubled quotes, CRLF or LF).
std::vector<std::vector<std::string>> parse(std::string_view text);
std::string escape(std::string_view field);
/// Shortest representation that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace csv

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace fcomb
