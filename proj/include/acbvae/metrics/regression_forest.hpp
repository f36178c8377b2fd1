#ifndef ACBVAE_METRICS_REGRESSION_FOREST_HPP_
#define ACBVAE_METRICS_REGRESSION_FOREST_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "acbvae/numerics/rng.hpp"

namespace acbvae {

// Row-major feature matrix view.
struct FeatureMatrix {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return values.subspan(r * cols, cols); }
};

struct ForestOptions {
  int num_trees = 20;
  int max_depth = 8;
  /// Features tried per split, in random order; 0 means all of them.
  int max_features = 0;
  int min_samples_split = 2;
  std::uint64_t seed = 0;
};

/// CART regression tree grown on squared error.
class RegressionTree {
 public:
  /// Fits on rows `sample` of X (repeats allowed) and adds the weighted
  /// impurity decrease of every split to `importance` (length cols).
  void fit(const FeatureMatrix& x, std::span<const double> y, std::vector<std::size_t> sample,
           const ForestOptions& options, Rng& rng, std::vector<double>& importance);
  double predict(std::span<const double> row) const;
  std::size_t node_count() const { return nodes_.size(); }
  int depth() const;

 private:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
    int depth = 0;
  };

  std::vector<Node> nodes_;
};

/// Bagged regression trees with per-split feature subsampling.
class RegressionForest {
 public:
  void fit(const FeatureMatrix& x, std::span<const double> y, const ForestOptions& options);
  double predict(std::span<const double> row) const;
  double mse(const FeatureMatrix& x, std::span<const double> y) const;
  /// Mean over trees of each tree's impurity-decrease importances
  /// normalised to sum to 1 (trees without splits contribute zeros).
  const std::vector<double>& importances() const { return importances_; }

 private:
  std::vector<RegressionTree> trees_;
  std::vector<double> importances_;
};

}  // namespace acbvae

#endif  // ACBVAE_METRICS_REGRESSION_FOREST_HPP_
