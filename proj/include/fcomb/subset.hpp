#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fcomb/combiners.hpp"
#include "fcomb/design.hpp"
#include "fcomb/parallel.hpp"
#include "fcomb/rng.hpp"

namespace fcomb {

inline constexpr int kSubsetCap = 1000;
inline constexpr int kProjectionDraws = 100;

/// Exact binomial coefficient; throws InvalidConfig on overflow.
std::uint64_t binomial(int n, int k);

/// C(env_vars, p) · C(cross_vars, p).
std::uint64_t csr_candidate_count(int env_vars, int cross_vars, int p);

/// Every k-subset of {0..n-1} in lexicographic order.
std::vector<std::vector<int>> enumerate_combinations(int n, int k);

/// The k-subset with the given lexicographic rank.
std::vector<int> unrank_combination(int n, int k, std::uint64_t rank);

/// `count` distinct values from [0, population), ascending (Floyd's algorithm).
std::vector<std::uint64_t> sample_without_replacement(std::uint64_t population, std::uint64_t count, Rng& rng);

struct SubsetCandidate {
  std::vector<int> env;    ///< environmental variable indices
  std::vector<int> cross;  ///< other-disease variable indices
  bool operator==(const SubsetCandidate&) const = default;
  auto operator<=>(const SubsetCandidate&) const = default;
};

/// The candidate regressions of one P10 or P11 run, fixed per (disease, horizon).
struct SubsetPlan {
  Scheme scheme = Scheme::P10;
  int p = 1;
  int env_vars = 0;
  int cross_vars = 0;
  std::uint64_t total = 0;  ///< size of the full candidate space
  // P10
  std::vector<SubsetCandidate> subsets;
  // P11: projection matrices and the sampled (env draw, cross draw) pairs
  std::vector<Eigen::MatrixXd> env_projections;
  std::vector<Eigen::MatrixXd> cross_projections;
  std::vector<std::pair<int, int>> pairs;

  int size() const { return static_cast<int>(scheme == Scheme::P10 ? subsets.size() : pairs.size()); }
  std::string id() const;  ///< "P10_p2" etc.
};

/// All candidates when the space has at most `cap` members, otherwise `cap`
/// sampled without replacement.
SubsetPlan plan_csr(int env_vars, int cross_vars, int p, std::uint64_t seed, int cap = kSubsetCap);

/// `draws` Gaussian projections per block (env_cols × p and cross_cols × p)
/// and `cap` sampled pairings out of draws².
SubsetPlan plan_rp(int env_cols, int cross_cols, int p, std::uint64_t seed, int draws = kProjectionDraws,
                   int cap = kSubsetCap);

/// The average of the candidate OLS regressions, folded into one linear
/// model on the raw design columns.
struct SubsetEnsemble {
  double intercept = 0.0;
  Eigen::VectorXd beta;
  int candidates = 0;
  int rank_deficient = 0;  ///< candidates solved by pseudoinverse
  std::uint32_t flags = 0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const { return intercept + beta.dot(raw_row); }
};

/// Fit every candidate on design rows [0, fit_end). Candidates run in
/// parallel under Exec::Parallel; the average is reduced in candidate order.
SubsetEnsemble fit_subset_ensemble(const LagDesign& design, int fit_end, const SubsetPlan& plan,
                                   Exec exec = Exec::Parallel);

/// Number of lagged variables in the env and cross-disease blocks.
int env_variable_count(const LagDesign& design);
int cross_variable_count(const LagDesign& design);

SubsetPlan plan_for(const LagDesign& design, Scheme scheme, int p, std::uint64_t seed);

/// One-shot P10/P11 forecasts for a single row.
double csr_forecast(const LagDesign& design, int fit_end, int predict_row, int p, std::uint64_t seed);
double rp_forecast(const LagDesign& design, int fit_end, int predict_row, int p, std::uint64_t seed);

}  // namespace fcomb
