#include "fcomb/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fcomb/error.hpp"

namespace fcomb {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
long days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

// 0 = Monday ... 6 = Sunday
int iso_weekday(int y, unsigned m, unsigned d) {
  const long days = days_from_civil(y, m, d);
  return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr std::string_view kDiseasePrefix = "ed.";
constexpr std::string_view kEnvPrefix = "env.";

}  // namespace

namespace epiweek {

EpiWeek parse(std::string_view label) {
  auto fail = [&] { throw Error(ErrorCode::MalformedCsv, "bad epi_week label '" + std::string(label) + "'"); };
  if (label.size() != 8 || label[4] != '-' || label[5] != 'W') fail();
  EpiWeek w;
  auto r1 = std::from_chars(label.data(), label.data() + 4, w.year);
  auto r2 = std::from_chars(label.data() + 6, label.data() + 8, w.week);
  if (r1.ec != std::errc{} || r1.ptr != label.data() + 4 || r2.ec != std::errc{} ||
      r2.ptr != label.data() + 8)
    fail();
  if (w.week < 1 || w.week > weeks_in_year(w.year)) fail();
  return w;
}

std::string format(EpiWeek w) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-W%02d", w.year, w.week);
  return buf;
}

int weeks_in_year(int year) {
  const int jan1 = iso_weekday(year, 1, 1);
  if (jan1 == 3) return 53;
  if (jan1 == 2 && is_leap(year)) return 53;
  return 52;
}

EpiWeek next(EpiWeek w) {
  if (w.week >= weeks_in_year(w.year)) return {w.year + 1, 1};
  return {w.year, w.week + 1};
}

std::vector<std::string> sequence(EpiWeek first, std::size_t count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(format(first));
    first = next(first);
  }
  return out;
}

}  // namespace epiweek

SeriesPanel::SeriesPanel(std::vector<std::string> weeks, std::vector<NamedSeries> diseases,
                         std::vector<NamedSeries> env)
    : weeks_(std::move(weeks)), diseases_(std::move(diseases)), env_(std::move(env)) {
  const std::size_t n = weeks_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const EpiWeek w = epiweek::parse(weeks_[i]);
    if (i == 0) continue;
    const EpiWeek prev = epiweek::parse(weeks_[i - 1]);
    if (!(prev < w))
      throw Error(ErrorCode::NonIncreasingWeeks, weeks_[i - 1] + " then " + weeks_[i]);
    if (epiweek::next(prev) != w)
      throw Error(ErrorCode::MissingWeek, "gap between " + weeks_[i - 1] + " and " + weeks_[i]);
  }
  for (const auto& s : diseases_) {
    if (s.values.size() != n) throw Error(ErrorCode::LengthMismatch, "disease series " + s.name);
    for (double v : s.values) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "disease series " + s.name);
      if (v < 0) throw Error(ErrorCode::NegativeCount, "disease series " + s.name);
    }
  }
  for (const auto& s : env_) {
    if (s.values.size() != n) throw Error(ErrorCode::LengthMismatch, "env series " + s.name);
    for (double v : s.values)
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "env series " + s.name);
  }
}

std::size_t SeriesPanel::disease_index(std::string_view name) const {
  for (std::size_t i = 0; i < diseases_.size(); ++i)
    if (diseases_[i].name == name) return i;
  throw Error(ErrorCode::UnknownDisease, std::string(name));
}

std::vector<std::string> SeriesPanel::disease_names() const {
  std::vector<std::string> out;
  for (const auto& s : diseases_) out.push_back(s.name);
  return out;
}

std::vector<double> SeriesPanel::total_admissions() const {
  std::vector<double> total(length(), 0.0);
  for (const auto& s : diseases_)
    for (std::size_t t = 0; t < total.size(); ++t) total[t] += s.values[t];
  return total;
}

namespace csv {

std::vector<std::vector<std::string>> parse(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else if (c == '\n') {
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::MalformedCsv, "unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw Error(ErrorCode::MalformedCsv, "not a number: '" + std::string(text) + "'");
  return v;
}

}  // namespace csv

SeriesPanel parse_panel_csv(std::string_view text) {
  const auto records = csv::parse(text);
  if (records.empty()) throw Error(ErrorCode::MalformedCsv, "empty panel file");
  const auto& header = records.front();
  if (header.empty() || header[0] != "epi_week")
    throw Error(ErrorCode::MalformedCsv, "first column must be epi_week");

  struct Column {
    bool disease;
    std::size_t slot;
  };
  std::vector<Column> columns;
  std::vector<NamedSeries> diseases;
  std::vector<NamedSeries> env;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name.starts_with(kDiseasePrefix)) {
      columns.push_back({true, diseases.size()});
      diseases.push_back({name.substr(kDiseasePrefix.size()), {}});
    } else if (name.starts_with(kEnvPrefix)) {
      columns.push_back({false, env.size()});
      env.push_back({name.substr(kEnvPrefix.size()), {}});
    } else {
      throw Error(ErrorCode::MalformedCsv, "column '" + name + "' lacks ed./env. prefix");
    }
  }

  std::vector<std::string> weeks;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size())
      throw Error(ErrorCode::MalformedCsv, "row " + std::to_string(r) + " has " +
                                               std::to_string(rec.size()) + " fields");
    weeks.push_back(rec[0]);
    for (std::size_t c = 1; c < rec.size(); ++c) {
      const Column& col = columns[c - 1];
      auto& target = col.disease ? diseases[col.slot] : env[col.slot];
      target.values.push_back(csv::parse_double(rec[c]));
    }
  }
  return SeriesPanel(std::move(weeks), std::move(diseases), std::move(env));
}

std::string format_panel_csv(const SeriesPanel& panel) {
  std::ostringstream out;
  out << "epi_week";
  for (const auto& s : panel.diseases()) out << ',' << csv::escape(std::string(kDiseasePrefix) + s.name);
  for (const auto& s : panel.env()) out << ',' << csv::escape(std::string(kEnvPrefix) + s.name);
  out << '\n';
  for (std::size_t t = 0; t < panel.length(); ++t) {
    out << panel.weeks()[t];
    for (const auto& s : panel.diseases()) out << ',' << csv::format_double(s.values[t]);
    for (const auto& s : panel.env()) out << ',' << csv::format_double(s.values[t]);
    out << '\n';
  }
  return out.str();
}

SeriesPanel read_panel_csv(const std::filesystem::path& path) {
  return parse_panel_csv(read_text_file(path));
}

void write_panel_csv(const SeriesPanel& panel, const std::filesystem::path& path) {
  write_text_file(path, format_panel_csv(panel));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace fcomb
