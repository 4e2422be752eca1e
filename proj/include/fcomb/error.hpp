#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fcomb {

enum class ErrorCode {
  // configuration
  InvalidConfig,
  UnknownModel,
  UnknownDisease,
  // data
  MalformedCsv,
  MissingWeek,
  NonIncreasingWeeks,
  NegativeCount,
  NonFiniteValue,
  PanelTooShort,
  TooFewRows,
  NonFiniteInput,
  ZeroActual,
  ZeroDenominator,
  LengthMismatch,
  MissingForecasts,
  MissingCauseForecasts,
  NonStationarySpec,
  Io,
  // run control
  DeadlineExceeded,
};

std::string_view to_string(ErrorCode code);

/// True for errors caused by the caller's configuration rather than the data.
bool is_config_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}
  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same code, message prefixed with `context`.
  Error tagged(const std::string& context) const { return Error(code_, context + ": " + detail_); }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Non-fatal conditions recorded alongside a fit.
enum FitFlag : std::uint32_t {
  kFlagNone = 0,
  kFlagRankDeficient = 1u << 0,
  kFlagNoConvergence = 1u << 1,
  kFlagCvFallback = 1u << 2,
  kFlagDegeneratePca = 1u << 3,
  kFlagFewerRowsThanK = 1u << 4,
  kFlagCollinearForecasts = 1u << 5,
  kFlagZeroVarianceColumn = 1u << 6,
};

std::string describe_flags(std::uint32_t flags);

}  // namespace fcomb
