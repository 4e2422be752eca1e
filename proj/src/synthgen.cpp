#include "fcomb/synthgen.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "fcomb/error.hpp"
#include "json.hpp"
#include "fcomb/rng.hpp"

namespace fcomb {

namespace {

using nlohmann::json;

// Haze episodes shared by every spiky series: (start, length, intensity).
struct Episode {
  int start = 0;
  int length = 0;
  double intensity = 0.0;
};

std::vector<Episode> draw_episodes(int total_weeks, double period, Rng& rng) {
  std::vector<Episode> out;
  const int years = static_cast<int>(std::ceil(total_weeks / period)) + 1;
  for (int y = 0; y < years; ++y) {
    if (rng.uniform() >= 0.6) continue;
    Episode e;
    e.start = static_cast<int>(y * period) + 30 + static_cast<int>(rng.index(11));
    e.length = 2 + static_cast<int>(rng.index(5));
    e.intensity = 1.5 - 2.5 * std::log(1.0 - rng.uniform());
    out.push_back(e);
  }
  return out;
}

double spike_at(const std::vector<Episode>& episodes, int t) {
  double s = 0.0;
  for (const auto& e : episodes)
    if (t >= e.start && t < e.start + e.length)
      s += e.intensity * std::sin(std::numbers::pi * (t - e.start + 0.5) / e.length);
  return s;
}

std::vector<std::string> week_labels(const std::string& start, int n) {
  return epiweek::sequence(epiweek::parse(start), static_cast<std::size_t>(n));
}

}  // namespace

double softplus_floor(double y) {
  const double x = y - 1.0;
  // log1p(exp(x)) without overflow.
  const double sp = x > 30.0 ? x : std::log1p(std::exp(x));
  return 1.0 + sp;
}

double DgpSpec::spectral_radius() const {
  const int d = static_cast<int>(diseases.size());
  if (d == 0) return 0.0;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) a(i, i) = diseases[i].ar;
  for (const auto& s : spillover) a(s.to, s.from) += s.coef;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(a, false);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

void DgpSpec::validate() const {
  if (n_weeks < 1) throw Error(ErrorCode::InvalidConfig, "n_weeks must be >= 1");
  if (burn_in < 0) throw Error(ErrorCode::InvalidConfig, "burn_in must be >= 0");
  if (!(period > 0)) throw Error(ErrorCode::InvalidConfig, "period must be positive");
  if (diseases.empty()) throw Error(ErrorCode::InvalidConfig, "at least one disease is required");
  epiweek::parse(start_week);
  const int d = static_cast<int>(diseases.size()), k = static_cast<int>(env.size());
  for (const auto& p : diseases) {
    if (p.name.empty()) throw Error(ErrorCode::InvalidConfig, "disease without a name");
    if (!(p.baseline > 0)) throw Error(ErrorCode::InvalidConfig, p.name + ": baseline must be positive");
    if (!(p.noise_sd >= 0)) throw Error(ErrorCode::InvalidConfig, p.name + ": noise_sd must be >= 0");
  }
  for (const auto& e : env) {
    if (e.name.empty()) throw Error(ErrorCode::InvalidConfig, "env series without a name");
    if (!(e.sd >= 0)) throw Error(ErrorCode::InvalidConfig, e.name + ": sd must be >= 0");
    if (!(std::abs(e.ar) < 1)) throw Error(ErrorCode::NonStationarySpec, e.name + ": |ar| must be < 1");
  }
  for (const auto& s : spillover)
    if (s.from < 0 || s.from >= d || s.to < 0 || s.to >= d)
      throw Error(ErrorCode::InvalidConfig, "spillover index out of range");
  for (const auto& e : env_effects)
    if (e.env < 0 || e.env >= k || e.disease < 0 || e.disease >= d || e.lag < 0)
      throw Error(ErrorCode::InvalidConfig, "env effect index out of range");
  const double rho = spectral_radius();
  if (!(rho < 1.0))
    throw Error(ErrorCode::NonStationarySpec, "transition spectral radius " + std::to_string(rho) + " >= 1");
}

DgpSpec default_dgp_spec(std::uint64_t seed, int n_weeks) {
  DgpSpec s;
  s.seed = seed;
  s.n_weeks = n_weeks;
  struct D {
    const char* name;
    double baseline, amp;
  };
  const D diseases[] = {{"cardiovascular", 842.1, 0.05},
                        {"chronic_respiratory", 586.5, 0.08},
                        {"diabetes", 70.9, 0.06},
                        {"digestive", 1297.1, 0.07},
                        {"endocrine", 279.0, 0.06},
                        {"health_services_contact", 98.3, 0.07},
                        {"genitourinary", 638.2, 0.05},
                        {"ill_defined", 3424.9, 0.05},
                        {"infectious_parasitic", 1301.7, 0.10},
                        {"malignant_neoplasms", 77.8, 0.04},
                        {"musculoskeletal", 1042.0, 0.06},
                        {"neurological_sense", 798.9, 0.05},
                        {"oral", 69.1, 0.06},
                        {"other_neoplasms", 16.7, 0.05},
                        {"respiratory_infection", 2512.0, 0.15},
                        {"skin", 713.5, 0.05}};
  const double ar[] = {0.5, 0.6, 0.7, 0.8};
  for (int i = 0; i < 16; ++i) {
    DiseaseProcess p;
    p.name = diseases[i].name;
    p.baseline = diseases[i].baseline;
    p.seasonal_amplitude = diseases[i].amp;
    p.seasonal_phase = 0.4 * i;
    p.ar = ar[i % 4];
    p.noise_sd = 0.05 + 0.01 * (i % 3);
    s.diseases.push_back(p);
  }
  struct E {
    const char* name;
    double mean, sd, amp, floor;
    bool spiky;
  };
  const E env[] = {{"max_temperature", 304.865, 0.979, 0.8, -1e300, false},
                   {"mean_temperature", 300.982, 0.859, 0.8, -1e300, false},
                   {"min_temperature", 298.116, 0.801, 0.8, -1e300, false},
                   {"relative_humidity", 79.464, 3.898, 0.6, 0.0, false},
                   {"absolute_humidity", 21.33, 0.878, 0.6, 0.0, false},
                   {"total_precipitation", 0.005, 0.006, 0.5, 0.0, false},
                   {"pm25", 16.0, 3.0, 0.4, 0.0, true},
                   {"pm10", 27.0, 4.0, 0.4, 0.0, true},
                   {"o3", 24.299, 7.969, 0.5, 0.0, false},
                   {"no2", 23.863, 5.703, 0.3, 0.0, false},
                   {"so2", 10.78, 5.025, 0.3, 0.0, false},
                   {"co", 0.537, 0.132, 0.3, 0.0, false}};
  for (const auto& e : env) {
    EnvProcess p;
    p.name = e.name;
    p.mean = e.mean;
    p.sd = e.sd;
    p.seasonal_amplitude = e.amp;
    p.floor = e.floor;
    p.spiky = e.spiky;
    s.env.push_back(p);
  }
  s.spillover = {{14, 1, 0.10}, {8, 3, 0.08}, {0, 2, 0.05}, {7, 6, 0.05}, {4, 2, 0.05}};
  s.env_effects = {{6, 1, 1, 0.02},   {7, 14, 1, 0.015}, {0, 0, 0, 0.01},   {3, 14, 2, 0.02},
                   {1, 8, 1, 0.015},  {4, 8, 3, 0.01},   {8, 1, 0, 0.01},   {5, 10, 0, -0.01},
                   {9, 0, 1, 0.01},   {10, 11, 2, 0.005}, {11, 15, 1, 0.005}, {2, 13, 0, 0.01}};
  return s;
}

std::string dgp_to_json(const DgpSpec& s) {
  json j;
  j["seed"] = s.seed;
  j["n_weeks"] = s.n_weeks;
  j["start_week"] = s.start_week;
  j["period"] = s.period;
  j["burn_in"] = s.burn_in;
  j["round_counts"] = s.round_counts;
  j["diseases"] = json::array();
  for (const auto& p : s.diseases)
    j["diseases"].push_back({{"name", p.name},
                             {"baseline", p.baseline},
                             {"ar", p.ar},
                             {"seasonal_amplitude", p.seasonal_amplitude},
                             {"seasonal_phase", p.seasonal_phase},
                             {"noise_sd", p.noise_sd}});
  j["env"] = json::array();
  for (const auto& e : s.env) {
    json je = {{"name", e.name},
               {"mean", e.mean},
               {"sd", e.sd},
               {"ar", e.ar},
               {"seasonal_amplitude", e.seasonal_amplitude},
               {"spiky", e.spiky}};
    if (e.floor > -1e300) je["floor"] = e.floor;
    j["env"].push_back(je);
  }
  j["spillover"] = json::array();
  for (const auto& x : s.spillover) j["spillover"].push_back({{"from", x.from}, {"to", x.to}, {"coef", x.coef}});
  j["env_effects"] = json::array();
  for (const auto& x : s.env_effects)
    j["env_effects"].push_back({{"env", x.env}, {"disease", x.disease}, {"lag", x.lag}, {"coef", x.coef}});
  return j.dump(2);
}

DgpSpec dgp_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("DGP spec is not valid JSON: ") + e.what());
  }
  DgpSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    s.n_weeks = j.value("n_weeks", s.n_weeks);
    s.start_week = j.value("start_week", s.start_week);
    s.period = j.value("period", s.period);
    s.burn_in = j.value("burn_in", s.burn_in);
    s.round_counts = j.value("round_counts", s.round_counts);
    for (const auto& x : j.at("diseases")) {
      DiseaseProcess p;
      p.name = x.at("name").get<std::string>();
      p.baseline = x.value("baseline", p.baseline);
      p.ar = x.value("ar", p.ar);
      p.seasonal_amplitude = x.value("seasonal_amplitude", p.seasonal_amplitude);
      p.seasonal_phase = x.value("seasonal_phase", p.seasonal_phase);
      p.noise_sd = x.value("noise_sd", p.noise_sd);
      s.diseases.push_back(p);
    }
    for (const auto& x : j.value("env", json::array())) {
      EnvProcess e;
      e.name = x.at("name").get<std::string>();
      e.mean = x.value("mean", e.mean);
      e.sd = x.value("sd", e.sd);
      e.ar = x.value("ar", e.ar);
      e.seasonal_amplitude = x.value("seasonal_amplitude", e.seasonal_amplitude);
      e.floor = x.value("floor", e.floor);
      e.spiky = x.value("spiky", e.spiky);
      s.env.push_back(e);
    }
    for (const auto& x : j.value("spillover", json::array()))
      s.spillover.push_back({x.at("from").get<int>(), x.at("to").get<int>(), x.at("coef").get<double>()});
    for (const auto& x : j.value("env_effects", json::array()))
      s.env_effects.push_back(
          {x.at("env").get<int>(), x.at("disease").get<int>(), x.value("lag", 0), x.at("coef").get<double>()});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("DGP spec: ") + e.what());
  }
  return s;
}

SeriesPanel generate_panel(const DgpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int d = static_cast<int>(spec.diseases.size()), k = static_cast<int>(spec.env.size());
  const int total = spec.burn_in + spec.n_weeks;
  const double w = 2.0 * std::numbers::pi / spec.period;

  // Environmental series (standardized deviation z, and raw values).
  const auto episodes = draw_episodes(total, spec.period, rng);
  Eigen::MatrixXd env_z(total, k), env_raw(total, k);
  for (int j = 0; j < k; ++j) {
    const auto& e = spec.env[j];
    double z = rng.normal();
    const double innov = std::sqrt(1.0 - e.ar * e.ar);
    for (int t = 0; t < total; ++t) {
      z = e.ar * z + innov * rng.normal();
      double dev = z + e.seasonal_amplitude * std::sin(w * t + 0.3 * j);
      double value = e.mean + e.sd * dev;
      if (e.spiky) {
        value += e.mean * spike_at(episodes, t);
        dev = e.sd > 0 ? (value - e.mean) / e.sd : 0.0;
      }
      if (value < e.floor) value = e.floor;
      env_z(t, j) = dev;
      env_raw(t, j) = value;
    }
  }

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) a(i, i) = spec.diseases[i].ar;
  for (const auto& s : spec.spillover) a(s.to, s.from) += s.coef;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd counts(total, d);
  for (int t = 0; t < total; ++t) {
    Eigen::VectorXd next = a * u;
    for (const auto& e : spec.env_effects)
      if (t - e.lag >= 0) next(e.disease) += e.coef * env_z(t - e.lag, e.env);
    for (int i = 0; i < d; ++i) next(i) += spec.diseases[i].noise_sd * rng.normal();
    u = next;
    for (int i = 0; i < d; ++i) {
      const auto& p = spec.diseases[i];
      const double level = p.baseline * (1.0 + p.seasonal_amplitude * std::sin(w * t + p.seasonal_phase) + u(i));
      double y = softplus_floor(level);
      if (spec.round_counts) y = std::max(1.0, std::round(y));
      counts(t, i) = y;
    }
  }

  std::vector<NamedSeries> dis, env;
  for (int i = 0; i < d; ++i) {
    NamedSeries s{spec.diseases[i].name, {}};
    for (int t = spec.burn_in; t < total; ++t) s.values.push_back(counts(t, i));
    dis.push_back(std::move(s));
  }
  for (int j = 0; j < k; ++j) {
    NamedSeries s{spec.env[j].name, {}};
    for (int t = spec.burn_in; t < total; ++t) s.values.push_back(env_raw(t, j));
    env.push_back(std::move(s));
  }
  return SeriesPanel(week_labels(spec.start_week, spec.n_weeks), std::move(dis), std::move(env));
}

std::string_view to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::RandomWalk: return "random_walk";
    case OracleKind::PureAr1: return "pure_ar1";
    case OracleKind::FactorDriven: return "factor_driven";
  }
  return "random_walk";
}

OracleKind oracle_kind_from_string(std::string_view s) {
  if (s == "random_walk") return OracleKind::RandomWalk;
  if (s == "pure_ar1") return OracleKind::PureAr1;
  if (s == "factor_driven") return OracleKind::FactorDriven;
  throw Error(ErrorCode::InvalidConfig, "unknown oracle kind '" + std::string(s) + "'");
}

OracleCase generate_oracle_case(OracleKind kind, std::uint64_t seed, int n_weeks) {
  OracleCase oc;
  oc.kind = kind;
  DgpSpec base = default_dgp_spec(seed, n_weeks);
  SeriesPanel panel = generate_panel(base);
  std::vector<NamedSeries> dis = panel.diseases();
  std::vector<NamedSeries> env = panel.env();
  oc.target = dis[0].name;
  Rng rng(derive_seed(seed, hash_string(to_string(kind))));
  const auto n = static_cast<std::size_t>(n_weeks);

  switch (kind) {
    case OracleKind::RandomWalk: {
      oc.optimal = ModelId::Naive;
      double y = 2000.0;
      for (std::size_t t = 0; t < n; ++t) {
        y += 25.0 * rng.normal();
        dis[0].values[t] = softplus_floor(y);
      }
      break;
    }
    case OracleKind::PureAr1: {
      oc.optimal = ModelId::AR_A;
      oc.ar_coefficient = 0.7;
      const double mu = 1000.0, sd = 40.0;
      double dev = sd / std::sqrt(1.0 - 0.49) * rng.normal();
      for (std::size_t t = 0; t < n; ++t) {
        dev = oc.ar_coefficient * dev + sd * rng.normal();
        dis[0].values[t] = softplus_floor(mu + dev);
      }
      break;
    }
    case OracleKind::FactorDriven: {
      oc.optimal = ModelId::PF;
      // A slow factor: its lags are nearly collinear, so one component
      // carries almost all of the exogenous variance.
      std::vector<double> f(n);
      double slow = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        slow = 0.995 * slow + 0.05 * rng.normal();
        f[t] = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 260.0) + slow;
      }
      for (std::size_t i = 1; i < dis.size(); ++i) {
        const double level = 200.0 + 40.0 * static_cast<double>(i);
        const double loading = 0.3 * level * (i % 2 == 0 ? 1.0 : -1.0) * (0.5 + 0.05 * static_cast<double>(i));
        for (std::size_t t = 0; t < n; ++t)
          dis[i].values[t] = softplus_floor(level + loading * f[t] + 1e-3 * level * rng.normal());
      }
      for (std::size_t j = 0; j < env.size(); ++j) {
        const double loading = (0.5 + 0.1 * static_cast<double>(j)) * (j % 3 == 0 ? -1.0 : 1.0);
        for (std::size_t t = 0; t < n; ++t) env[j].values[t] = 10.0 + loading * f[t] + 1e-3 * rng.normal();
      }
      double dev = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        dev = 0.5 * dev + 20.0 * rng.normal();
        const double lagged = t >= 1 ? f[t - 1] : f[0];
        dis[0].values[t] = softplus_floor(1000.0 + 150.0 * lagged + dev);
      }
      break;
    }
  }
  oc.panel = SeriesPanel(panel.weeks(), std::move(dis), std::move(env));
  return oc;
}

}  // namespace fcomb
