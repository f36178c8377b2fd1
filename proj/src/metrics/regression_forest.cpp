#include "acbvae/metrics/regression_forest.hpp"

#include <algorithm>
#include <numeric>

#include "acbvae/errors.hpp"

namespace acbvae {

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;  // decrease in summed squared error
  std::size_t left_count = 0;
};

// Chooses `count` distinct features out of `cols` (partial Fisher-Yates).
std::vector<std::size_t> choose_features(std::size_t cols, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(cols);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(static_cast<std::uint32_t>(cols - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace

void RegressionTree::fit(const FeatureMatrix& x, std::span<const double> y, std::vector<std::size_t> sample,
                         const ForestOptions& options, Rng& rng, std::vector<double>& importance) {
  nodes_.clear();
  const std::size_t mtry = options.max_features > 0
                               ? std::min<std::size_t>(options.max_features, x.cols)
                               : x.cols;

  struct Pending {
    std::size_t node;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<std::pair<double, double>> order;  // (feature value, label)
  std::vector<Pending> stack;
  nodes_.push_back(Node{});
  stack.push_back({0, 0, sample.size()});

  while (!stack.empty()) {
    const Pending job = stack.back();
    stack.pop_back();
    const std::size_t count = job.end - job.begin;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = job.begin; i < job.end; ++i) {
      const double v = y[sample[i]];
      sum += v;
      sum_sq += v * v;
    }
    nodes_[job.node].value = count ? sum / static_cast<double>(count) : 0.0;
    const double sse = sum_sq - sum * sum / static_cast<double>(std::max<std::size_t>(count, 1));
    if (nodes_[job.node].depth >= options.max_depth ||
        count < static_cast<std::size_t>(std::max(2, options.min_samples_split)) || sse <= 1e-12) {
      continue;
    }

    Split best;
    for (std::size_t f : choose_features(x.cols, mtry, rng)) {
      order.clear();
      for (std::size_t i = job.begin; i < job.end; ++i) order.emplace_back(x.at(sample[i], f), y[sample[i]]);
      std::sort(order.begin(), order.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_sum = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const double v = order[i].second;
        left_sum += v;
        left_sq += v * v;
        if (order[i].first == order[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = static_cast<double>(count) - nl;
        const double right_sum = sum - left_sum;
        const double right_sq = sum_sq - left_sq;
        const double child = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
        const double gain = sse - child;
        if (gain > best.gain + 1e-12) {
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (order[i].first + order[i + 1].first);
          best.gain = gain;
          best.left_count = i + 1;
        }
      }
    }
    if (best.feature < 0) continue;

    importance[static_cast<std::size_t>(best.feature)] += best.gain;
    auto mid = std::partition(sample.begin() + static_cast<std::ptrdiff_t>(job.begin),
                              sample.begin() + static_cast<std::ptrdiff_t>(job.end),
                              [&](std::size_t r) { return x.at(r, best.feature) <= best.threshold; });
    const std::size_t split_at = static_cast<std::size_t>(mid - sample.begin());
    const int child_depth = nodes_[job.node].depth + 1;
    Node left_node, right_node;
    left_node.depth = right_node.depth = child_depth;
    nodes_.push_back(left_node);
    nodes_.push_back(right_node);
    const auto left_id = static_cast<std::int32_t>(nodes_.size() - 2);
    const auto right_id = static_cast<std::int32_t>(nodes_.size() - 1);
    nodes_[job.node].feature = best.feature;
    nodes_[job.node].threshold = best.threshold;
    nodes_[job.node].left = left_id;
    nodes_[job.node].right = right_id;
    stack.push_back({static_cast<std::size_t>(right_id), split_at, job.end});
    stack.push_back({static_cast<std::size_t>(left_id), job.begin, split_at});
  }
}

double RegressionTree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(nodes_[i].feature)] <= nodes_[i].threshold
                                     ? nodes_[i].left
                                     : nodes_[i].right);
  }
  return nodes_[i].value;
}

int RegressionTree::depth() const {
  int d = 0;
  for (const Node& n : nodes_) d = std::max(d, n.depth);
  return d;
}

void RegressionForest::fit(const FeatureMatrix& x, std::span<const double> y, const ForestOptions& options) {
  if (x.rows == 0 || y.size() != x.rows) throw UsageError("forest fit: empty data or label count mismatch");
  if (options.num_trees <= 0) throw UsageError("forest fit: num_trees must be positive");
  trees_.assign(static_cast<std::size_t>(options.num_trees), RegressionTree{});
  importances_.assign(x.cols, 0.0);
  Rng rng(options.seed);
  for (RegressionTree& tree : trees_) {
    std::vector<std::size_t> sample(x.rows);
    for (std::size_t& s : sample) s = rng.below(static_cast<std::uint32_t>(x.rows));
    std::vector<double> imp(x.cols, 0.0);
    Rng tree_rng = rng.split();
    tree.fit(x, y, std::move(sample), options, tree_rng, imp);
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0) {
      for (std::size_t c = 0; c < x.cols; ++c) importances_[c] += imp[c] / total;
    }
  }
  for (double& v : importances_) v /= static_cast<double>(trees_.size());
}

double RegressionForest::predict(std::span<const double> row) const {
  double s = 0.0;
  for (const RegressionTree& t : trees_) s += t.predict(row);
  return s / static_cast<double>(trees_.size());
}

double RegressionForest::mse(const FeatureMatrix& x, std::span<const double> y) const {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double d = predict(x.row(r)) - y[r];
    s += d * d;
  }
  return x.rows ? s / static_cast<double>(x.rows) : 0.0;
}

}  // namespace acbvae
