#include "fcomb/penalized.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "fcomb/error.hpp"

namespace fcomb {

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

constexpr double kRidgeAlphaForGrid = 1e-3;

struct Group {
  std::vector<int> members;  // non-degenerate columns
  double weight = 0.0;       // sqrt(d_g)
  double step = 0.0;         // 1 / largest eigenvalue of the group Gram block
  Eigen::MatrixXd block;     // Gram block of the members
};

std::vector<Group> build_groups(const GramSystem& s, const PenaltySpec& spec) {
  std::map<int, std::vector<int>> by_id;
  std::map<int, int> full_size;
  for (int j = 0; j < s.dim(); ++j) {
    ++full_size[spec.groups[j]];
    if (!s.zero_variance[j]) by_id[spec.groups[j]].push_back(j);
  }
  std::vector<Group> out;
  for (auto& [id, members] : by_id) {
    Group g;
    g.weight = std::sqrt(static_cast<double>(full_size[id]));
    const auto k = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd block(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) block(a, b) = s.gram(members[a], members[b]);
    const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(block, Eigen::EigenvaluesOnly)
                           .eigenvalues()
                           .maxCoeff();
    g.step = top > 0 ? 1.0 / top : 0.0;
    g.block = std::move(block);
    g.members = std::move(members);
    out.push_back(std::move(g));
  }
  return out;
}

double weight_of(const PenaltySpec& spec, int j) {
  return spec.adaptive_weights.size() == 0 ? 1.0 : spec.adaptive_weights(j);
}

class CoordinateDescent {
 public:
  CoordinateDescent(const GramSystem& s, const PenaltySpec& spec, double lambda, const SolverOptions& opt)
      : s_(s), spec_(spec), lambda_(lambda), opt_(opt) {
    const double a = spec.l1_share();
    l1_.resize(s.dim());
    for (int j = 0; j < s.dim(); ++j) l1_(j) = lambda * a * weight_of(spec, j);
    l2_ = spec.kind == PenaltyKind::SparseGroupLasso ? 0.0 : lambda * (1.0 - a);
    group_scale_ = spec.kind == PenaltyKind::SparseGroupLasso ? lambda * (1.0 - a) : 0.0;
    threshold_ = opt.tol * std::max(s.yty, std::numeric_limits<double>::min());
  }

  PenalizedFit run(const Eigen::VectorXd* warm) {
    PenalizedFit fit;
    b_ = warm && warm->size() == s_.dim() ? *warm : Eigen::VectorXd::Zero(s_.dim());
    for (int j = 0; j < s_.dim(); ++j)
      if (s_.zero_variance[j]) b_(j) = 0.0;
    q_ = s_.gram * b_;

    if (spec_.kind == PenaltyKind::SparseGroupLasso) {
      groups_ = build_groups(s_, spec_);
      run_groups(fit);
    } else {
      run_coordinates(fit);
    }
    fit.b = b_;
    fit.objective = penalized_objective(s_, spec_, lambda_, b_);
    return fit;
  }

 private:
  double update_coordinate(int j) {
    const double gjj = s_.gram(j, j);
    const double old = b_(j);
    const double z = s_.xty(j) - q_(j) + gjj * old;
    const double next = soft_threshold(z, l1_(j)) / (gjj + l2_);
    const double delta = next - old;
    if (delta != 0.0) {
      b_(j) = next;
      q_.noalias() += delta * s_.gram.col(j);
    }
    return gjj * delta * delta;
  }

  void trace(PenalizedFit& fit) {
    if (opt_.trace_objective) fit.objective_trace.push_back(penalized_objective(s_, spec_, lambda_, b_));
  }

  void run_coordinates(PenalizedFit& fit) {
    const int p = s_.dim();
    std::vector<int> active;
    while (fit.sweeps < opt_.max_sweeps) {
      double change = 0.0;
      active.clear();
      for (int j = 0; j < p; ++j) {
        if (s_.zero_variance[j]) continue;
        change = std::max(change, update_coordinate(j));
        if (b_(j) != 0.0) active.push_back(j);
      }
      ++fit.sweeps;
      trace(fit);
      if (change < threshold_) {
        fit.converged = true;
        return;
      }
      while (fit.sweeps < opt_.max_sweeps) {
        double inner = 0.0;
        for (int j : active) inner = std::max(inner, update_coordinate(j));
        ++fit.sweeps;
        if (inner < threshold_) break;
      }
    }
  }

  // Proximal step of the group subproblem at point `at`, written to `out`.
  void group_prox(const Group& g, const Eigen::VectorXd& at, double l1, double gpen) {
    const double t = g.step;
    grad_.noalias() = g.block * at;
    grad_ -= partial_;
    u_ = at - t * grad_;
    for (Eigen::Index a = 0; a < u_.size(); ++a) u_(a) = soft_threshold(u_(a), t * l1);
    const double norm = u_.norm();
    if (norm > t * gpen)
      cand_ = (1.0 - t * gpen / norm) * u_;
    else
      cand_.setZero();
  }

  double update_group(const Group& g) {
    const auto k = static_cast<Eigen::Index>(g.members.size());
    old_.resize(k);
    partial_.resize(k);
    for (Eigen::Index a = 0; a < k; ++a) old_(a) = b_(g.members[a]);
    // Correlation with the residual that excludes this group's own contribution.
    own_.noalias() = g.block * old_;
    for (Eigen::Index a = 0; a < k; ++a) {
      const int j = g.members[a];
      partial_(a) = s_.xty(j) - q_(j) + own_(a);
    }
    const double l1 = l1_(g.members.front());
    const double gpen = group_scale_ * g.weight;

    next_.setZero(k);
    double shrunk = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) shrunk += std::pow(soft_threshold(partial_(a), l1), 2);
    if (std::sqrt(shrunk) > gpen && g.step > 0) {
      // Accelerated proximal gradient with adaptive restart.
      next_ = old_;
      look_ = old_;
      double momentum = 1.0;
      for (int it = 0; it < 10000; ++it) {
        group_prox(g, look_, l1, gpen);
        double move = 0.0;
        for (Eigen::Index a = 0; a < k; ++a) {
          const double d = cand_(a) - next_(a);
          move = std::max(move, g.block(a, a) * d * d);
        }
        if (move < threshold_ * 1e-2) {
          next_ = cand_;
          break;
        }
        const bool restart = (look_ - cand_).dot(cand_ - next_) > 0.0;
        const double following = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        if (restart) {
          momentum = 1.0;
          look_ = cand_;
        } else {
          look_ = cand_ + ((momentum - 1.0) / following) * (cand_ - next_);
          momentum = following;
        }
        next_ = cand_;
      }
    }
    const Eigen::VectorXd& next = next_;
    const Eigen::VectorXd& old = old_;

    double change = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) {
      const int j = g.members[a];
      const double delta = next(a) - old(a);
      if (delta != 0.0) {
        b_(j) = next(a);
        q_.noalias() += delta * s_.gram.col(j);
      }
      change = std::max(change, s_.gram(j, j) * delta * delta);
    }
    return change;
  }

  void run_groups(PenalizedFit& fit) {
    std::vector<const Group*> active;
    while (fit.sweeps < opt_.max_sweeps) {
      double change = 0.0;
      active.clear();
      for (const auto& g : groups_) {
        change = std::max(change, update_group(g));
        for (int j : g.members)
          if (b_(j) != 0.0) {
            active.push_back(&g);
            break;
          }
      }
      ++fit.sweeps;
      trace(fit);
      if (change < threshold_) {
        fit.converged = true;
        return;
      }
      while (fit.sweeps < opt_.max_sweeps) {
        double inner = 0.0;
        for (const Group* g : active) inner = std::max(inner, update_group(*g));
        ++fit.sweeps;
        if (inner < threshold_) break;
      }
    }
  }

  const GramSystem& s_;
  const PenaltySpec& spec_;
  double lambda_;
  const SolverOptions& opt_;
  Eigen::VectorXd l1_;
  double l2_ = 0.0;
  double group_scale_ = 0.0;
  double threshold_ = 0.0;
  Eigen::VectorXd b_;
  Eigen::VectorXd q_;
  std::vector<Group> groups_;
  Eigen::VectorXd old_, partial_, own_, next_, look_, grad_, u_, cand_;
};

}  // namespace

std::string_view to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::Ridge: return "ridge";
    case PenaltyKind::Lasso: return "lasso";
    case PenaltyKind::AdaptiveLasso: return "alasso";
    case PenaltyKind::SparseGroupLasso: return "sgl";
    case PenaltyKind::ElasticNet: return "enet";
    case PenaltyKind::AdaptiveElasticNet: return "aenet";
  }
  return "?";
}

double PenaltySpec::l1_share() const {
  switch (kind) {
    case PenaltyKind::Ridge: return 0.0;
    case PenaltyKind::Lasso:
    case PenaltyKind::AdaptiveLasso: return 1.0;
    default: return alpha;
  }
}

void PenaltySpec::validate(int dim) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in [0,1]");
  if (adaptive_weights.size() != 0) {
    if (adaptive_weights.size() != dim) throw Error(ErrorCode::InvalidConfig, "adaptive weight count mismatch");
    for (Eigen::Index j = 0; j < adaptive_weights.size(); ++j)
      if (!(adaptive_weights(j) > 0.0) || !std::isfinite(adaptive_weights(j)))
        throw Error(ErrorCode::InvalidConfig, "adaptive weights must be positive and finite");
  }
  if (kind == PenaltyKind::SparseGroupLasso && static_cast<int>(groups.size()) != dim)
    throw Error(ErrorCode::InvalidConfig, "SGL needs a group id for every column");
}

double penalized_objective(const GramSystem& s, const PenaltySpec& spec, double lambda,
                           const Eigen::Ref<const Eigen::VectorXd>& b) {
  const double a = spec.l1_share();
  double l1 = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) l1 += weight_of(spec, static_cast<int>(j)) * std::abs(b(j));
  double value = s.half_mse(b) + lambda * a * l1;
  if (spec.kind == PenaltyKind::SparseGroupLasso) {
    std::map<int, double> sq;
    std::map<int, int> size;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      sq[spec.groups[j]] += b(j) * b(j);
      ++size[spec.groups[j]];
    }
    for (const auto& [id, ss] : sq) value += lambda * (1.0 - a) * std::sqrt(static_cast<double>(size[id])) * std::sqrt(ss);
  } else {
    value += 0.5 * lambda * (1.0 - a) * b.squaredNorm();
  }
  return value;
}

PenalizedFit solve_penalized(const GramSystem& system, const PenaltySpec& spec, double lambda,
                             const SolverOptions& options, const Eigen::VectorXd* warm_start) {
  spec.validate(system.dim());
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be >= 0");
  CoordinateDescent cd(system, spec, lambda, options);
  return cd.run(warm_start);
}

double lambda_max(const GramSystem& s, const PenaltySpec& spec) {
  spec.validate(s.dim());
  double a = spec.l1_share();
  if (spec.kind == PenaltyKind::Ridge) a = kRidgeAlphaForGrid;
  double best = 0.0;
  if (spec.kind != PenaltyKind::SparseGroupLasso) {
    if (a <= 0.0) a = kRidgeAlphaForGrid;
    for (int j = 0; j < s.dim(); ++j)
      if (!s.zero_variance[j]) best = std::max(best, std::abs(s.xty(j)) / (a * weight_of(spec, j)));
    return best;
  }
  // SGL: per group, the smallest λ with ||S(c_g, λα)||₂ <= λ(1-α)√d_g.
  std::map<int, std::vector<double>> c;
  std::map<int, int> size;
  for (int j = 0; j < s.dim(); ++j) {
    ++size[spec.groups[j]];
    if (!s.zero_variance[j]) c[spec.groups[j]].push_back(s.xty(j));
  }
  for (const auto& [id, cg] : c) {
    const double w = std::sqrt(static_cast<double>(size[id]));
    auto excess = [&](double lam) {
      double ss = 0.0;
      for (double z : cg) {
        const double v = soft_threshold(z, lam * a);
        ss += v * v;
      }
      return std::sqrt(ss) - lam * (1.0 - a) * w;
    };
    double hi = 0.0;
    for (double z : cg) hi = std::max(hi, std::abs(z));
    hi = a > 0 ? hi / a : 0.0;
    if (a < 1.0) {
      double norm = 0.0;
      for (double z : cg) norm += z * z;
      hi = std::max(hi, std::sqrt(norm) / ((1.0 - a) * w));
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (excess(mid) > 0 ? lo : hi) = mid;
    }
    best = std::max(best, hi);
  }
  return best;
}

std::vector<double> lambda_grid(double lmax, int count, double ratio) {
  if (count < 1) throw Error(ErrorCode::InvalidConfig, "lambda grid needs >= 1 value");
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (!(lmax > 0)) lmax = 1e-12;
  if (count == 1) {
    grid[0] = lmax;
    return grid;
  }
  const double step = std::log(ratio) / (count - 1);
  for (int k = 0; k < count; ++k) grid[k] = lmax * std::exp(step * k);
  return grid;
}

Eigen::VectorXd adaptive_weights_from_ols(const Eigen::Ref<const Eigen::VectorXd>& beta, double cap) {
  Eigen::VectorXd w(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double a = std::abs(beta(j));
    w(j) = a > 1.0 / cap ? 1.0 / a : cap;
  }
  return w;
}

Coefficients to_coefficients(const GramSystem& system, const PenalizedFit& fit) {
  Coefficients c;
  system.to_raw(fit.b, c.intercept, c.beta);
  if (!fit.converged) c.flags |= kFlagNoConvergence;
  return c;
}

std::vector<CvFold> tscv_folds(int rows, int gap, int n_splits, int min_fold_rows) {
  std::vector<CvFold> folds;
  const int test = rows / (n_splits + 1);
  if (test < min_fold_rows) return folds;
  for (int i = 0; i < n_splits; ++i) {
    CvFold f;
    f.valid_begin = rows - (n_splits - i) * test;
    f.valid_end = f.valid_begin + test;
    f.train_end = f.valid_begin - gap;
    if (f.train_end < std::max(min_fold_rows, 3)) return {};
    folds.push_back(f);
  }
  return folds;
}

std::vector<FoldData> make_fold_data(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     const std::vector<CvFold>& folds) {
  std::vector<FoldData> out;
  out.reserve(folds.size());
  for (const auto& f : folds) {
    FoldData d;
    d.system = GramSystem::from_data(x.topRows(f.train_end), y.head(f.train_end), true);
    d.valid_x = x.middleRows(f.valid_begin, f.valid_end - f.valid_begin);
    d.valid_y = y.segment(f.valid_begin, f.valid_end - f.valid_begin);
    out.push_back(std::move(d));
  }
  return out;
}

Eigen::VectorXd predict_system(const GramSystem& system, const Eigen::Ref<const Eigen::VectorXd>& b,
                               const Eigen::Ref<const Eigen::MatrixXd>& raw_x) {
  double intercept = 0.0;
  Eigen::VectorXd beta;
  system.to_raw(b, intercept, beta);
  return (raw_x * beta).array() + intercept;
}

TuneResult select_lambda_tscv(const GramSystem& full, const std::vector<FoldData>& folds,
                              const TuneRequest& request, const SolverOptions& options) {
  if (request.alphas.empty()) throw Error(ErrorCode::InvalidConfig, "alpha grid is empty");
  TuneResult result;
  auto spec_for = [&](const GramSystem& s, int fold, double alpha) {
    PenaltySpec spec;
    spec.kind = request.kind;
    spec.alpha = alpha;
    spec.groups = request.groups;
    if (request.weights) spec.adaptive_weights = request.weights(s, fold, alpha);
    return spec;
  };

  double best_mse = std::numeric_limits<double>::infinity();
  for (std::size_t ai = 0; ai < request.alphas.size(); ++ai) {
    const double alpha = request.alphas[ai];
    const auto grid =
        lambda_grid(lambda_max(full, spec_for(full, -1, alpha)), request.grid_size, request.grid_ratio);
    result.grids.push_back(grid);
    std::vector<double> mse(grid.size(), 0.0);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto& fold = folds[f];
      const PenaltySpec spec = spec_for(fold.system, static_cast<int>(f), alpha);
      Eigen::VectorXd warm = Eigen::VectorXd::Zero(fold.system.dim());
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const PenalizedFit fit = solve_penalized(fold.system, spec, grid[k], options, &warm);
        warm = fit.b;
        const Eigen::VectorXd pred = predict_system(fold.system, fit.b, fold.valid_x);
        mse[k] += (pred - fold.valid_y).squaredNorm() / static_cast<double>(fold.valid_y.size()) /
                  static_cast<double>(folds.size());
      }
    }
    std::size_t arg = 0;
    for (std::size_t k = 1; k < grid.size(); ++k)
      if (mse[k] < mse[arg]) arg = k;
    result.best_lambda_per_alpha.push_back(grid[arg]);
    result.cv_mse.push_back(mse);
    if (!folds.empty() && mse[arg] < best_mse) {
      best_mse = mse[arg];
      result.lambda = grid[arg];
      result.alpha = alpha;
    }
  }
  if (folds.empty()) {
    const std::size_t mid_alpha = request.alphas.size() / 2;
    const auto& grid = result.grids[mid_alpha];
    result.alpha = request.alphas[mid_alpha];
    result.lambda = grid[grid.size() / 2];
    for (std::size_t ai = 0; ai < request.alphas.size(); ++ai)
      result.best_lambda_per_alpha[ai] = result.grids[ai][result.grids[ai].size() / 2];
    result.flags |= kFlagCvFallback;
  }
  return result;
}

Eigen::VectorXd aenet_weights(const GramSystem& system, double alpha, double enet_lambda,
                              const SolverOptions& options, double cap, const Eigen::VectorXd* warm_start) {
  PenaltySpec spec;
  spec.kind = PenaltyKind::ElasticNet;
  spec.alpha = alpha;
  return adaptive_weights_from_ols(solve_penalized(system, spec, enet_lambda, options, warm_start).b, cap);
}

AenetTuning tune_adaptive_elastic_net(const GramSystem& full, const std::vector<FoldData>& folds,
                                      const std::vector<double>& alphas, int grid_size, double grid_ratio,
                                      const SolverOptions& options, double cap) {
  AenetTuning out;
  TuneRequest r;
  r.kind = PenaltyKind::ElasticNet;
  r.alphas = alphas;
  r.grid_size = grid_size;
  r.grid_ratio = grid_ratio;
  out.enet = select_lambda_tscv(full, folds, r, options);

  const auto& enet_lambda = out.enet.best_lambda_per_alpha;
  auto lambda_for = [&](double alpha) {
    const auto it = std::find(alphas.begin(), alphas.end(), alpha);
    return enet_lambda[static_cast<std::size_t>(it - alphas.begin())];
  };
  r.kind = PenaltyKind::AdaptiveElasticNet;
  r.weights = [&](const GramSystem& s, int, double alpha) {
    return aenet_weights(s, alpha, lambda_for(alpha), options, cap);
  };
  out.aenet = select_lambda_tscv(full, folds, r, options);
  out.aenet.flags |= out.enet.flags;
  out.weight_lambda = lambda_for(out.aenet.alpha);
  return out;
}

}  // namespace fcomb
