#include "fcomb/error.hpp"

#include <utility>

namespace fcomb {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::UnknownDisease: return "UnknownDisease";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::MissingWeek: return "MissingWeek";
    case ErrorCode::NonIncreasingWeeks: return "NonIncreasingWeeks";
    case ErrorCode::NegativeCount: return "NegativeCount";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::PanelTooShort: return "PanelTooShort";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::ZeroActual: return "ZeroActual";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingForecasts: return "MissingForecasts";
    case ErrorCode::MissingCauseForecasts: return "MissingCauseForecasts";
    case ErrorCode::NonStationarySpec: return "NonStationarySpec";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::DeadlineExceeded: return "DeadlineExceeded";
  }
  return "Unknown";
}

bool is_config_error(ErrorCode code) {
  return code == ErrorCode::InvalidConfig || code == ErrorCode::UnknownModel ||
         code == ErrorCode::UnknownDisease;
}

std::string describe_flags(std::uint32_t flags) {
  static constexpr std::pair<FitFlag, const char*> kNames[] = {
      {kFlagRankDeficient, "rank_deficient"},
      {kFlagNoConvergence, "no_convergence"},
      {kFlagCvFallback, "cv_fallback"},
      {kFlagDegeneratePca, "degenerate_pca"},
      {kFlagFewerRowsThanK, "fewer_rows_than_k"},
      {kFlagCollinearForecasts, "collinear_forecasts"},
      {kFlagZeroVarianceColumn, "zero_variance_column"},
  };
  std::string out;
  for (const auto& [flag, name] : kNames) {
    if (flags & flag) {
      if (!out.empty()) out += '|';
      out += name;
    }
  }
  return out;
}

}  // namespace fcomb
