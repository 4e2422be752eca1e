#include "fcomb/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fcomb/error.hpp"
#include "fcomb/rng.hpp"

namespace fcomb {

// ---------------------------------------------------------------------------
// RegressionTree

double RegressionTree::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  int i = 0;
  while (nodes_[i].feature >= 0) i = x(nodes_[i].feature) <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
  return nodes_[i].value;
}

double RegressionTree::predict_row(const Eigen::MatrixXd& x, Eigen::Index row) const {
  int i = 0;
  while (nodes_[i].feature >= 0)
    i = x(row, nodes_[i].feature) <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
  return nodes_[i].value;
}

int RegressionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

int RegressionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].feature < 0) continue;
    d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

double TreeEnsemble::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  if (mode == EnsembleMode::Bagged) return trees.empty() ? base : sum / static_cast<double>(trees.size());
  return base + sum;
}

Eigen::VectorXd TreeEnsemble::predict_rows(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict_row(x, r);
    out(r) = mode == EnsembleMode::Bagged ? (trees.empty() ? base : sum / static_cast<double>(trees.size()))
                                          : base + sum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random forest

int default_mtry(int predictors) {
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(predictors)))));
}

namespace {

// Per-feature ascending row order over the fit rows, shared by every tree.
struct SortedColumns {
  std::vector<std::vector<int>> order;
  std::vector<std::vector<double>> value;

  explicit SortedColumns(const Eigen::MatrixXd& x) {
    const int n = static_cast<int>(x.rows());
    order.resize(static_cast<std::size_t>(x.cols()));
    value.resize(static_cast<std::size_t>(x.cols()));
    for (int f = 0; f < x.cols(); ++f) {
      auto& o = order[f];
      o.resize(static_cast<std::size_t>(n));
      std::iota(o.begin(), o.end(), 0);
      std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
      auto& v = value[f];
      v.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) v[i] = x(o[i], f);
    }
  }
};

// Exact CART on a bootstrap sample. Copies of one row always fall on the same
// side of a split, so the sample is held as distinct rows with multiplicities.
class CartBuilder {
 public:
  CartBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SortedColumns& sorted, int mtry,
              int min_leaf, Rng& rng)
      : x_(x), y_(y), sorted_(sorted), mtry_(mtry), min_leaf_(std::max(1, min_leaf)), rng_(rng) {
    features_.resize(static_cast<std::size_t>(x.cols()));
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build(const std::vector<int>& sample) {
    const int n = static_cast<int>(x_.rows());
    weight_.assign(static_cast<std::size_t>(n), 0);
    for (int r : sample) ++weight_[r];
    rows_.clear();
    for (int r = 0; r < n; ++r)
      if (weight_[r] > 0) rows_.push_back(r);
    node_of_.assign(static_cast<std::size_t>(n), -1);
    for (int r : rows_) node_of_[r] = 0;

    RegressionTree tree;
    auto& nodes = tree.mutable_nodes();
    nodes.emplace_back();
    struct Item {
      int node, begin, end;
    };
    std::vector<Item> stack{{0, 0, static_cast<int>(rows_.size())}};
    while (!stack.empty()) {
      const Item item = stack.back();
      stack.pop_back();
      Split split = find_split(item.node, item.begin, item.end);
      nodes[item.node].value = split.mean;
      if (split.feature < 0) continue;
      const auto mid = std::partition(rows_.begin() + item.begin, rows_.begin() + item.end,
                                      [&](int r) { return x_(r, split.feature) <= split.threshold; });
      const int middle = static_cast<int>(mid - rows_.begin());
      const int left = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes.emplace_back();
      nodes[item.node].feature = split.feature;
      nodes[item.node].threshold = split.threshold;
      nodes[item.node].left = left;
      nodes[item.node].right = left + 1;
      for (int i = item.begin; i < middle; ++i) node_of_[rows_[i]] = left;
      for (int i = middle; i < item.end; ++i) node_of_[rows_[i]] = left + 1;
      stack.push_back({left + 1, middle, item.end});
      stack.push_back({left, item.begin, middle});
    }
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double mean = 0.0;
  };

  struct Point {
    double x;
    double wy;
    int w;
  };

  Split find_split(int node, int begin, int end) {
    Split best;
    int n = 0;
    double sum = 0.0, lo = y_(rows_[begin]), hi = lo;
    for (int i = begin; i < end; ++i) {
      const int r = rows_[i];
      const double v = y_(r);
      n += weight_[r];
      sum += weight_[r] * v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    best.mean = sum / n;
    if (n < 2 * min_leaf_ || lo == hi) return best;

    // Partial Fisher-Yates draw of mtry distinct features.
    const int p = static_cast<int>(features_.size());
    const int draws = std::min(mtry_, p);
    for (int k = 0; k < draws; ++k) {
      const int j = k + static_cast<int>(rng_.index(static_cast<std::uint64_t>(p - k)));
      std::swap(features_[k], features_[j]);
    }

    const int distinct = end - begin;
    const int total = static_cast<int>(x_.rows());
    // Scanning the presorted column beats sorting once the node is large.
    const bool scan = 4.0 * distinct * std::log2(distinct + 1.0) > total;
    const double base = sum * sum / n;
    double best_gain = base + 1e-12 * std::abs(base);
    for (int k = 0; k < draws; ++k) {
      const int f = features_[k];
      points_.clear();
      if (scan) {
        const auto& order = sorted_.order[f];
        const auto& value = sorted_.value[f];
        for (int i = 0; i < total; ++i) {
          const int r = order[i];
          if (node_of_[r] == node) points_.push_back({value[i], weight_[r] * y_(r), weight_[r]});
        }
      } else {
        for (int i = begin; i < end; ++i) {
          const int r = rows_[i];
          points_.push_back({x_(r, f), weight_[r] * y_(r), weight_[r]});
        }
        std::sort(points_.begin(), points_.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
      }
      if (points_.front().x == points_.back().x) continue;
      double left = 0.0;
      int nl = 0;
      const int m = static_cast<int>(points_.size());
      for (int i = 0; i + 1 < m; ++i) {
        left += points_[i].wy;
        nl += points_[i].w;
        if (points_[i].x == points_[i + 1].x) continue;
        if (nl < min_leaf_) continue;
        if (n - nl < min_leaf_) break;
        const double right = sum - left;
        const double gain = left * left / nl + right * right / (n - nl);
        if (gain > best_gain) {
          best_gain = gain;
          best.feature = f;
          const double a = points_[i].x, b = points_[i + 1].x;
          double mid = a + 0.5 * (b - a);
          if (!(mid < b)) mid = a;
          best.threshold = mid;
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  const SortedColumns& sorted_;
  int mtry_;
  int min_leaf_;
  Rng& rng_;
  std::vector<int> features_;
  std::vector<int> rows_;
  std::vector<int> weight_;
  std::vector<int> node_of_;
  std::vector<Point> points_;
};

RegressionTree fit_bootstrap_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SortedColumns& sorted,
                                  const ForestParams& params, int mtry, int index) {
  Rng rng(derive_seed(params.seed, 0x7265u, static_cast<std::uint64_t>(index)));
  const int n = static_cast<int>(x.rows());
  std::vector<int> sample(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) sample[i] = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
  CartBuilder builder(x, y, sorted, mtry, params.min_leaf, rng);
  return builder.build(sample);
}

}  // namespace

TreeEnsemble fit_random_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestParams& params,
                               Exec exec) {
  if (x.rows() < 2) throw Error(ErrorCode::TooFewRows, "random forest needs >= 2 fit rows");
  if (params.trees < 1) throw Error(ErrorCode::InvalidConfig, "random forest needs >= 1 tree");
  TreeEnsemble forest;
  forest.mode = EnsembleMode::Bagged;
  forest.mtry = params.mtry > 0 ? params.mtry : default_mtry(static_cast<int>(x.cols()));
  forest.base = y.mean();
  forest.trees.resize(static_cast<std::size_t>(params.trees));
  const int count = params.trees;
  const SortedColumns sorted(x);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int t = 0; t < count; ++t) forest.trees[t] = fit_bootstrap_tree(x, y, sorted, params, forest.mtry, t);
  return forest;
}

// ---------------------------------------------------------------------------
// Histogram gradient boosting

BinnedMatrix bin_features(const Eigen::MatrixXd& x, int max_bins) {
  if (max_bins < 2 || max_bins > 256) throw Error(ErrorCode::InvalidConfig, "max_bins must lie in [2,256]");
  BinnedMatrix b;
  b.rows = static_cast<int>(x.rows());
  b.cols = static_cast<int>(x.cols());
  b.edges.resize(static_cast<std::size_t>(b.cols));
  b.codes.resize(static_cast<std::size_t>(b.rows) * b.cols);
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(b.rows));
  std::vector<double> sorted(static_cast<std::size_t>(b.rows));
  std::vector<double> uniq;
  for (int f = 0; f < b.cols; ++f) {
    for (int i = 0; i < b.rows; ++i) order[i] = {x(i, f), i};
    std::sort(order.begin(), order.end());
    for (int i = 0; i < b.rows; ++i) sorted[i] = order[i].first;
    uniq.clear();
    for (double v : sorted)
      if (uniq.empty() || v != uniq.back()) uniq.push_back(v);
    auto& edges = b.edges[f];
    auto midpoint = [](double a, double c) {
      const double m = a + 0.5 * (c - a);
      return m < c ? m : a;
    };
    if (static_cast<int>(uniq.size()) <= max_bins) {
      for (std::size_t k = 1; k < uniq.size(); ++k) edges.push_back(midpoint(uniq[k - 1], uniq[k]));
    } else {
      for (int q = 1; q < max_bins; ++q) {
        const std::size_t pos = static_cast<std::size_t>(q) * sorted.size() / static_cast<std::size_t>(max_bins);
        const double v = sorted[pos == 0 ? 0 : pos - 1];
        const auto next = std::upper_bound(uniq.begin(), uniq.end(), v);
        if (next == uniq.end()) continue;
        const double e = midpoint(v, *next);
        if (edges.empty() || e > edges.back()) edges.push_back(e);
      }
    }
    // code = number of edges below the value, found by walking the sorted order
    std::size_t code = 0;
    std::uint8_t* col = b.codes.data() + static_cast<std::size_t>(f) * b.rows;
    for (const auto& [v, i] : order) {
      while (code < edges.size() && edges[code] < v) ++code;
      col[i] = static_cast<std::uint8_t>(code);
    }
  }
  return b;
}

namespace {

struct Bin {
  double sum;
  double count;
};

struct Histogram {
  std::vector<Bin> bins;
};

struct Candidate {
  int node = 0;
  int begin = 0;
  int end = 0;
  int depth = 0;
  double sum = 0.0;
  double sumsq = 0.0;
  int hist = -1;  // index into the builder's pool; -1 when the node cannot split
  int feature = -1;
  int bin = -1;
  double gain = 0.0;
};

// Reused across boosting rounds so histogram buffers are allocated once.
class HistogramTreeBuilder {
 public:
  HistogramTreeBuilder(const BinnedMatrix& bins, const GbmParams& params, Exec exec)
      : bins_(bins), params_(params), exec_(exec) {
    offsets_.resize(static_cast<std::size_t>(bins.cols) + 1, 0);
    for (int f = 0; f < bins.cols; ++f) offsets_[f + 1] = offsets_[f] + bins.bins(f);
    rows_.resize(static_cast<std::size_t>(bins.rows));
    inverse_.resize(static_cast<std::size_t>(bins.rows) + 1, 0.0);
    for (int k = 1; k <= bins.rows; ++k) inverse_[k] = 1.0 / k;
  }

  RegressionTree build(const Eigen::VectorXd& g, std::vector<int>* leaf_of_row) {
    g_ = &g;
    std::iota(rows_.begin(), rows_.end(), 0);
    free_.clear();
    for (int k = 0; k < static_cast<int>(pool_.size()); ++k) free_.push_back(k);

    RegressionTree tree;
    auto& nodes = tree.mutable_nodes();
    nodes.emplace_back();

    std::vector<Candidate> open;
    Candidate root;
    root.end = bins_.rows;
    accumulate(root);
    if (splittable(root)) {
      root.hist = take();
      build_histogram(root);
      evaluate(root);
    }
    open.push_back(root);
    std::vector<Candidate> closed;

    int leaves = 1;
    const bool leaf_wise = params_.growth == GrowthStrategy::LeafWise;
    while (!open.empty()) {
      std::size_t pick = 0;
      if (leaf_wise) {
        if (params_.max_leaves > 0 && leaves >= params_.max_leaves) break;
        for (std::size_t k = 1; k < open.size(); ++k)
          if (open[k].gain > open[pick].gain) pick = k;
      }
      Candidate node = open[pick];
      open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
      if (node.feature < 0) {
        release(node);
        if (leaf_wise) {
          closed.push_back(node);
          // Every remaining candidate has no better gain under leaf-wise order.
          for (auto& c : open) closed.push_back(c);
          open.clear();
          break;
        }
        closed.push_back(node);
        continue;
      }
      ++leaves;
      // Children of the final leaf-wise split stay leaves; skip their histograms.
      const bool grow = !(leaf_wise && params_.max_leaves > 0 && leaves >= params_.max_leaves);
      auto [left, right] = split(node, nodes, grow);
      open.push_back(left);
      open.push_back(right);
    }
    for (auto& c : open) closed.push_back(c);

    if (leaf_of_row) leaf_of_row->assign(static_cast<std::size_t>(bins_.rows), 0);
    for (const auto& c : closed) {
      nodes[c.node].value = c.end > c.begin ? c.sum / (c.end - c.begin) : 0.0;
      if (leaf_of_row)
        for (int i = c.begin; i < c.end; ++i) (*leaf_of_row)[rows_[i]] = c.node;
    }
    return tree;
  }

 private:
  int take() {
    if (free_.empty()) {
      pool_.emplace_back();
      pool_.back().bins.resize(static_cast<std::size_t>(offsets_.back()));
      return static_cast<int>(pool_.size()) - 1;
    }
    const int k = free_.back();
    free_.pop_back();
    return k;
  }

  void release(Candidate& c) {
    if (c.hist >= 0) free_.push_back(c.hist);
    c.hist = -1;
  }

  bool splittable(const Candidate& c) const {
    if (params_.max_depth >= 0 && c.depth >= params_.max_depth) return false;
    return c.end - c.begin >= 2 * std::max(1, params_.min_leaf);
  }

  void accumulate(Candidate& c) const {
    c.sum = 0.0;
    c.sumsq = 0.0;
    const Eigen::VectorXd& g = *g_;
    for (int i = c.begin; i < c.end; ++i) {
      const double v = g(rows_[i]);
      c.sum += v;
      c.sumsq += v * v;
    }
  }

  void build_histogram(Candidate& c) {
    Histogram& h = pool_[c.hist];
    std::fill(h.bins.begin(), h.bins.end(), Bin{0.0, 0.0});
    const int cols = bins_.cols;
    const double* g = g_->data();
    const int* rows = rows_.data();
#pragma omp parallel for schedule(static) if (exec_ == Exec::Parallel)
    for (int f = 0; f < cols; ++f) {
      Bin* hist = h.bins.data() + offsets_[f];
      const std::uint8_t* codes = bins_.codes.data() + static_cast<std::size_t>(f) * bins_.rows;
      for (int i = c.begin; i < c.end; ++i) {
        const int r = rows[i];
        Bin& b = hist[codes[r]];
        b.sum += g[r];
        b.count += 1.0;
      }
    }
  }

  void subtract(int parent, int child, int out) {
    Histogram& o = pool_[out];
    const Histogram& p = pool_[parent];
    const Histogram& c = pool_[child];
    for (std::size_t k = 0; k < p.bins.size(); ++k) {
      o.bins[k].sum = p.bins[k].sum - c.bins[k].sum;
      o.bins[k].count = p.bins[k].count - c.bins[k].count;
    }
  }

  void evaluate(Candidate& c) {
    c.feature = -1;
    c.gain = 0.0;
    if (c.hist < 0) return;
    const Histogram& h = pool_[c.hist];
    const int n = c.end - c.begin;
    const double base = c.sum * c.sum * inverse_[n];
    const double floor = 1e-12 * std::max(c.sumsq, 1e-300);
    const int cols = bins_.cols;
    const double* inv = inverse_.data();
    const int min_leaf = std::max(1, params_.min_leaf);
    gains_.assign(static_cast<std::size_t>(cols), 0.0);
    at_.assign(static_cast<std::size_t>(cols), -1);
#pragma omp parallel for schedule(static) if (exec_ == Exec::Parallel)
    for (int f = 0; f < cols; ++f) {
      const Bin* hist = h.bins.data() + offsets_[f];
      const int nb = bins_.bins(f);
      // An empty bin repeats the previous bin's gain, and ties keep the first
      // bin, so empty bins never win and need no special case.
      double left = 0.0;
      int nl = 0;
      double best = gains_[f];
      int best_bin = -1;
      for (int b = 0; b + 1 < nb; ++b) {
        left += hist[b].sum;
        nl += static_cast<int>(hist[b].count);
        const int nr = n - nl;
        if (nr < min_leaf) break;
        const double right = c.sum - left;
        const double gain = nl < min_leaf ? 0.0 : left * left * inv[nl] + right * right * inv[nr] - base;
        if (gain > best) {
          best = gain;
          best_bin = b;
        }
      }
      gains_[f] = best;
      at_[f] = best_bin;
    }
    for (int f = 0; f < cols; ++f) {
      if (at_[f] >= 0 && gains_[f] > floor && gains_[f] > c.gain) {
        c.gain = gains_[f];
        c.feature = f;
        c.bin = at_[f];
      }
    }
  }

  std::pair<Candidate, Candidate> split(Candidate& parent, std::vector<RegressionTree::Node>& nodes, bool grow) {
    const int f = parent.feature;
    const std::uint8_t* codes = bins_.codes.data() + static_cast<std::size_t>(f) * bins_.rows;
    const auto mid = std::stable_partition(rows_.begin() + parent.begin, rows_.begin() + parent.end,
                                           [&](int r) { return codes[r] <= parent.bin; });
    const int middle = static_cast<int>(mid - rows_.begin());

    const int left_id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    nodes[parent.node].feature = f;
    nodes[parent.node].threshold = bins_.edges[f][parent.bin];
    nodes[parent.node].left = left_id;
    nodes[parent.node].right = left_id + 1;

    Candidate left, right;
    left.node = left_id;
    left.begin = parent.begin;
    left.end = middle;
    right.node = left_id + 1;
    right.begin = middle;
    right.end = parent.end;
    left.depth = right.depth = parent.depth + 1;
    accumulate(left);
    accumulate(right);
    const bool small_is_left = (left.end - left.begin) <= (right.end - right.begin);
    Candidate& small = small_is_left ? left : right;
    Candidate& large = small_is_left ? right : left;
    const bool split_small = grow && splittable(small), split_large = grow && splittable(large);
    if (split_large) {
      // The large child comes from the parent minus the small one.
      small.hist = take();
      build_histogram(small);
      large.hist = take();
      subtract(parent.hist, small.hist, large.hist);
      if (!split_small) release(small);
    } else if (split_small) {
      small.hist = take();
      build_histogram(small);
    }
    release(parent);
    evaluate(left);
    evaluate(right);
    return {left, right};
  }

  const BinnedMatrix& bins_;
  const GbmParams& params_;
  Exec exec_;
  const Eigen::VectorXd* g_ = nullptr;
  std::vector<int> offsets_;
  std::vector<int> rows_;
  std::vector<Histogram> pool_;
  std::vector<int> free_;
  std::vector<double> inverse_;
  std::vector<double> gains_;
  std::vector<int> at_;
};

}  // namespace

RegressionTree fit_histogram_tree(const BinnedMatrix& bins, const Eigen::VectorXd& target, const GbmParams& params,
                                  Exec exec, std::vector<int>* leaf_of_row) {
  HistogramTreeBuilder builder(bins, params, exec);
  return builder.build(target, leaf_of_row);
}

TreeEnsemble fit_gbm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GbmParams& params, Exec exec) {
  if (x.rows() < 2) throw Error(ErrorCode::TooFewRows, "gbm needs >= 2 fit rows");
  if (params.trees < 1) throw Error(ErrorCode::InvalidConfig, "gbm needs >= 1 tree");
  if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "learning rate must lie in (0,1]");
  TreeEnsemble model;
  model.mode = EnsembleMode::Boosted;
  model.learning_rate = params.learning_rate;
  model.base = y.mean();

  const BinnedMatrix bins = bin_features(x, params.max_bins);
  const auto n = static_cast<double>(x.rows());
  Eigen::VectorXd fitted = Eigen::VectorXd::Constant(x.rows(), model.base);
  double rmse = std::sqrt((y - fitted).squaredNorm() / n);
  model.train_rmse.push_back(rmse);
  std::vector<int> leaf;
  HistogramTreeBuilder builder(bins, params, exec);
  Eigen::VectorXd residual(x.rows());
  for (int m = 0; m < params.trees; ++m) {
    if (rmse == 0.0) break;
    residual = y - fitted;
    RegressionTree tree = builder.build(residual, &leaf);
    for (auto& node : tree.mutable_nodes())
      if (node.feature < 0) node.value *= params.learning_rate;
    for (Eigen::Index i = 0; i < x.rows(); ++i) fitted(i) += tree.nodes()[leaf[i]].value;
    const double next = std::sqrt((y - fitted).squaredNorm() / n);
    model.trees.push_back(std::move(tree));
    model.train_rmse.push_back(next);
    const double improvement = (rmse - next) / rmse;
    rmse = next;
    if (improvement < params.tolerance) break;
  }
  return model;
}

}  // namespace fcomb
