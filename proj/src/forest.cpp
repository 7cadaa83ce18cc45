#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "encqr/regress.hpp"

namespace encqr {

std::size_t RegressionTree::leaf_for(std::span<const double> input) const {
  std::size_t node = 0;
  while (!nodes[node].is_leaf()) {
    const auto& n = nodes[node];
    node = static_cast<std::size_t>(input[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return node;
}

std::size_t RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 1}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [node, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[node].is_leaf()) {
      stack.push_back({static_cast<std::size_t>(nodes[node].left), d + 1});
      stack.push_back({static_cast<std::size_t>(nodes[node].right), d + 1});
    }
  }
  return deepest;
}

QuantileForestModel::QuantileForestModel(QuantileLevels levels, std::size_t horizon, std::size_t input_size,
                                         std::vector<double> targets, std::vector<RegressionTree> trees)
    : levels_(levels),
      horizon_(horizon),
      input_size_(input_size),
      targets_(std::move(targets)),
      trees_(std::move(trees)) {
  levels_.validate();
  if (horizon_ == 0 || targets_.size() % horizon_ != 0) fail(ErrorCode::ShapeError, "target matrix shape");
  if (trees_.empty()) fail(ErrorCode::NotFitted, "forest has no trees");
  const std::size_t rows = targets_.size() / horizon_;
  for (const auto& tree : trees_) {
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) {
        if (node.rows.empty()) fail(ErrorCode::FormatError, "empty leaf");
        for (auto r : node.rows) {
          if (r >= rows) fail(ErrorCode::FormatError, "leaf row out of range");
        }
      } else if (node.left < 0 || node.right < 0 || static_cast<std::size_t>(node.left) >= tree.nodes.size() ||
                 static_cast<std::size_t>(node.right) >= tree.nodes.size() ||
                 static_cast<std::size_t>(node.feature) >= input_size_) {
        fail(ErrorCode::FormatError, "malformed split node");
      }
    }
  }
}

std::vector<double> QuantileForestModel::pooled_leaf_values(std::span<const double> input, std::size_t step) const {
  std::vector<double> pooled;
  for (const auto& tree : trees_) {
    const auto& leaf = tree.nodes[tree.leaf_for(input)];
    for (auto r : leaf.rows) pooled.push_back(targets_[r * horizon_ + step]);
  }
  return pooled;
}

QuantileForecast QuantileForestModel::predict(std::span<const double> input) const {
  if (input.size() != input_size_) fail(ErrorCode::ShapeError, "input window has the wrong size");
  std::vector<const TreeNode*> leaves;
  leaves.reserve(trees_.size());
  std::size_t pool_size = 0;
  for (const auto& tree : trees_) {
    leaves.push_back(&tree.nodes[tree.leaf_for(input)]);
    pool_size += leaves.back()->rows.size();
  }
  const std::size_t r_lo = quantile_rank(pool_size, levels_.lo, QuantileConvention::plain) - 1;
  const std::size_t r_mid = quantile_rank(pool_size, levels_.mid, QuantileConvention::plain) - 1;
  const std::size_t r_hi = quantile_rank(pool_size, levels_.hi, QuantileConvention::plain) - 1;

  QuantileForecast f;
  f.lo.resize(horizon_);
  f.mid.resize(horizon_);
  f.hi.resize(horizon_);
  std::vector<double> pooled(pool_size);
  for (std::size_t h = 0; h < horizon_; ++h) {
    std::size_t k = 0;
    for (const auto* leaf : leaves) {
      for (auto r : leaf->rows) pooled[k++] = targets_[r * horizon_ + h];
    }
    std::sort(pooled.begin(), pooled.end());
    f.lo[h] = pooled[r_lo];
    f.mid[h] = pooled[r_mid];
    f.hi[h] = pooled[r_hi];
  }
  uncross(f);
  return f;
}

namespace {

struct SplitChoice {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double cost = 0.0;
  std::size_t left_count = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const WindowedDataset& data, const ForestParams& params, std::mt19937_64& rng)
      : data_(data), params_(params), rng_(rng), p_(data.input_size()), m_(data.n_y()) {
    mtry_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(params.max_features * static_cast<double>(p_))));
    mtry_ = std::min(mtry_, p_);
    features_.resize(p_);
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build(std::vector<std::uint32_t> rows) {
    RegressionTree tree;
    tree.nodes.emplace_back();
    struct Work {
      std::size_t node;
      std::vector<std::uint32_t> rows;
    };
    std::vector<Work> stack;
    stack.push_back({0, std::move(rows)});
    while (!stack.empty()) {
      Work work = std::move(stack.back());
      stack.pop_back();
      SplitChoice split;
      if (work.rows.size() >= 2 * params_.min_samples_leaf && !pure(work.rows)) split = best_split(work.rows);
      if (split.feature < 0) {
        tree.nodes[work.node].rows = std::move(work.rows);
        continue;
      }
      std::vector<std::uint32_t> left;
      std::vector<std::uint32_t> right;
      for (auto r : work.rows) {
        (data_.input(r)[static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(r);
      }
      const auto l = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[work.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = l;
      node.right = l + 1;
      stack.push_back({static_cast<std::size_t>(l + 1), std::move(right)});
      stack.push_back({static_cast<std::size_t>(l), std::move(left)});
    }
    return tree;
  }

 private:
  bool pure(const std::vector<std::uint32_t>& rows) const {
    auto first = data_.target(rows.front());
    for (auto r : rows) {
      auto t = data_.target(r);
      if (!std::equal(t.begin(), t.end(), first.begin())) return false;
    }
    return true;
  }

  // Variance-reduction split over up to mtry informative features. Features
  // that are constant on the node do not count towards mtry.
  SplitChoice best_split(const std::vector<std::uint32_t>& rows) {
    const std::size_t n = rows.size();
    std::vector<double> total(m_, 0.0);
    double sq_total = 0.0;
    for (auto r : rows) {
      auto t = data_.target(r);
      for (std::size_t h = 0; h < m_; ++h) {
        total[h] += t[h];
        sq_total += t[h] * t[h];
      }
    }
    double tt = 0.0;
    for (double v : total) tt += v * v;
    const double parent_cost = sq_total - tt / static_cast<double>(n);

    std::shuffle(features_.begin(), features_.end(), rng_);
    SplitChoice best;
    best.cost = parent_cost;
    std::size_t examined = 0;
    std::vector<std::pair<double, std::uint32_t>> order(n);
    std::vector<double> left_sum(m_);

    for (std::size_t fi = 0; fi < p_ && examined < mtry_; ++fi) {
      const std::size_t f = features_[fi];
      for (std::size_t i = 0; i < n; ++i) order[i] = {data_.input(rows[i])[f], rows[i]};
      std::sort(order.begin(), order.end());
      if (order.front().first == order.back().first) continue;
      ++examined;

      std::fill(left_sum.begin(), left_sum.end(), 0.0);
      double sq_left = 0.0;
      double s2_left = 0.0;  // sum_h left_sum[h]^2
      double cross = 0.0;    // sum_h total[h] * left_sum[h]
      for (std::size_t i = 0; i + 1 < n; ++i) {
        auto t = data_.target(order[i].second);
        for (std::size_t h = 0; h < m_; ++h) {
          s2_left += 2.0 * left_sum[h] * t[h] + t[h] * t[h];
          cross += total[h] * t[h];
          left_sum[h] += t[h];
          sq_left += t[h] * t[h];
        }
        const std::size_t nl = i + 1;
        const std::size_t nr = n - nl;
        if (nl < params_.min_samples_leaf || nr < params_.min_samples_leaf) continue;
        if (order[i].first == order[i + 1].first) continue;
        const double cost = (sq_left - s2_left / static_cast<double>(nl)) +
                            ((sq_total - sq_left) - (tt - 2.0 * cross + s2_left) / static_cast<double>(nr));
        if (cost < best.cost - 1e-12 * (1.0 + parent_cost)) {
          double mid = 0.5 * (order[i].first + order[i + 1].first);
          if (!(mid < order[i + 1].first)) mid = order[i].first;
          best = {static_cast<std::int32_t>(f), mid, cost, nl};
        }
      }
    }
    return best;
  }

  const WindowedDataset& data_;
  const ForestParams& params_;
  std::mt19937_64& rng_;
  std::size_t p_;
  std::size_t m_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> features_;
};

}  // namespace

QuantileForestModel fit_quantile_forest(const WindowedDataset& data, const QuantileLevels& levels,
                                        const ForestParams& params, std::uint64_t seed) {
  levels.validate();
  if (data.empty()) fail(ErrorCode::NoTrainingData, "quantile forest needs training pairs");
  if (params.n_trees == 0 || params.min_samples_leaf == 0) {
    fail(ErrorCode::InvalidArgument, "n_trees and min_samples_leaf must be positive");
  }
  if (data.size() < params.min_samples_leaf) {
    fail(ErrorCode::NoTrainingData, "fewer training pairs than min_samples_leaf");
  }
  const std::size_t n = data.size();
  std::vector<RegressionTree> trees;
  trees.reserve(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::vector<std::uint32_t> rows(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
      for (auto& r : rows) r = pick(rng);
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), 0u);
    }
    TreeBuilder builder(data, params, rng);
    trees.push_back(builder.build(std::move(rows)));
  }
  auto targets = data.all_targets();
  return QuantileForestModel(levels, data.n_y(), data.input_size(), std::vector<double>(targets.begin(), targets.end()),
                             std::move(trees));
}

}  // namespace encqr
