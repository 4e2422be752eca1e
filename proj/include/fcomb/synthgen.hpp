#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fcomb/panel.hpp"
#include "fcomb/submodels.hpp"

namespace fcomb {

struct DiseaseProcess {
  std::string name;
  double baseline = 500.0;
  double ar = 0.6;  ///< own persistence of the relative deviation
  double seasonal_amplitude = 0.05;  ///< fraction of baseline
  double seasonal_phase = 0.0;       ///< radians
  double noise_sd = 0.05;            ///< fraction of baseline
};

struct EnvProcess {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
  double ar = 0.7;
  double seasonal_amplitude = 0.5;  ///< in sd units
  double floor = -1e300;            ///< values are clamped from below
  /// Haze-like episodes: bursts of several weeks at many times the usual level.
  bool spiky = false;
};

struct Spillover {
  int from = 0;
  int to = 0;
  double coef = 0.0;
};

struct EnvEffect {
  int env = 0;
  int disease = 0;
  int lag = 0;
  double coef = 0.0;  ///< relative deviation per env sd
};

/// Data-generating process for a synthetic panel.
///
/// Disease d follows y = baseline·(1 + seasonal + u) with
/// u_t = A u_{t-1} + Σ env effects + ε, where A holds the own AR terms on
/// its diagonal plus the spillovers. Counts pass through a softplus floor
/// at 1 and are rounded.
struct DgpSpec {
  std::uint64_t seed = 1;
  int n_weeks = 522;
  std::string start_week = "2009-W01";
  double period = 52.0;
  int burn_in = 104;
  bool round_counts = true;
  std::vector<DiseaseProcess> diseases;
  std::vector<EnvProcess> env;
  std::vector<Spillover> spillover;
  std::vector<EnvEffect> env_effects;

  /// Throws InvalidConfig or NonStationarySpec.
  void validate() const;
  /// Largest |eigenvalue| of the deviation transition matrix.
  double spectral_radius() const;
};

/// 16 diseases and 12 environmental series with levels from descriptive
/// statistics of weekly admissions and weather/pollution records.
DgpSpec default_dgp_spec(std::uint64_t seed = 1, int n_weeks = 522);

std::string dgp_to_json(const DgpSpec& spec);
DgpSpec dgp_from_json(std::string_view text);

SeriesPanel generate_panel(const DgpSpec& spec);

/// y ↦ 1 + softplus(y - 1): strictly above 1, close to y when y ≫ 1.
double softplus_floor(double y);

enum class OracleKind { RandomWalk, PureAr1, FactorDriven };
std::string_view to_string(OracleKind kind);
OracleKind oracle_kind_from_string(std::string_view s);

struct OracleCase {
  OracleKind kind = OracleKind::RandomWalk;
  SeriesPanel panel;
  std::string target;  ///< the disease whose optimal forecaster is known
  ModelId optimal = ModelId::Naive;
  double ar_coefficient = 0.0;  ///< PureAr1: the true coefficient
};

/// Panels with the full 16 + 12 layout where one registry member is the
/// population-optimal forecaster of `target`:
///   RandomWalk   target is a random walk (Naive optimal at h = 1)
///   PureAr1      target is an AR(1) with no exogenous effects (AR_A)
///   FactorDriven every other series is loading × one factor + tiny noise (PF, R = 1)
OracleCase generate_oracle_case(OracleKind kind, std::uint64_t seed = 7, int n_weeks = 522);

}  // namespace fcomb
