#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "acbvae/errors.hpp"
#include "acbvae/metrics/disentanglement.hpp"
#include "acbvae/metrics/regression_forest.hpp"

using namespace acbvae;

namespace {

ImportanceMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return ImportanceMatrix{rows, cols, std::move(values)};
}

// Synthetic dataset: factors uniform, codes built by `make_codes`.
template <typename F>
RepresentationDataset synthetic(std::size_t n, std::size_t code_dim, std::uint64_t seed, F make_codes) {
  RepresentationDataset d;
  d.code_dim = code_dim;
  Rng rng(seed);
  for (std::size_t r = 0; r < n; ++r) {
    double f[kNumFactors];
    for (double& v : f) v = rng.uniform();
    d.factors.insert(d.factors.end(), f, f + kNumFactors);
    std::vector<double> c(code_dim);
    make_codes(f, c, rng);
    d.codes.insert(d.codes.end(), c.begin(), c.end());
  }
  return d;
}

MetricOptions quick_options() {
  MetricOptions o;
  o.num_trees = 10;
  o.depth_grid = {4, 8};
  o.seed = 3;
  return o;
}

}  // namespace

TEST_CASE("disentanglement hand oracles") {
  // Rows: one-hot, uniform, half-half.
  const auto r = matrix(3, 4, {0, 2, 0, 0, 1, 1, 1, 1, 3, 3, 0, 0});
  const ScoreResult d = disentanglement_scores(r);
  CHECK(d.per_item[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.per_item[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.per_item[2] == doctest::Approx(0.5).epsilon(1e-12));
  // rho = (2, 4, 6) / 12
  CHECK(d.average == doctest::Approx((2.0 * 1.0 + 4.0 * 0.0 + 6.0 * 0.5) / 12.0).epsilon(1e-12));
  CHECK(d.warnings.empty());
}

TEST_CASE("completeness hand oracles") {
  ImportanceMatrix r = matrix(10, 3, std::vector<double>(30, 0.0));
  r.at(4, 0) = 7.0;                                 // one-hot column
  for (std::size_t i = 0; i < 10; ++i) r.at(i, 1) = 0.3;  // uniform column
  r.at(0, 2) = 1.0;
  r.at(1, 2) = 1.0;  // half-half
  const ScoreResult c = completeness_scores(r);
  CHECK(c.per_item[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.per_item[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.per_item[2] == doctest::Approx(1.0 - std::log(2.0) / std::log(10.0)).epsilon(1e-12));
  CHECK(c.per_item[2] == doctest::Approx(0.699).epsilon(1e-3));
  CHECK(c.average == doctest::Approx((c.per_item[0] + c.per_item[1] + c.per_item[2]) / 3.0));
}

TEST_CASE("zero rows and columns score zero with a warning") {
  const auto r = matrix(2, 2, {0, 0, 1, 0});
  const ScoreResult d = disentanglement_scores(r);
  CHECK(d.per_item[0] == 0.0);
  CHECK(d.per_item[1] == doctest::Approx(1.0));
  CHECK_FALSE(d.warnings.empty());
  const ScoreResult c = completeness_scores(r);
  CHECK(c.per_item[1] == 0.0);
  CHECK_FALSE(c.warnings.empty());
}

TEST_CASE("scores stay in [0, 1] and are invariant to the matching rescaling") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(12);
    ImportanceMatrix r = matrix(n, 4, std::vector<double>(n * 4));
    for (double& v : r.values) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 5.0);
    const ScoreResult d = disentanglement_scores(r);
    const ScoreResult c = completeness_scores(r);
    for (double v : d.per_item) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
    for (double v : c.per_item) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }

    // Completeness normalises columns, so positive column scaling leaves it unchanged.
    ImportanceMatrix cols = r;
    for (std::size_t j = 0; j < 4; ++j) {
      const double s = rng.uniform(0.1, 10.0);
      for (std::size_t i = 0; i < n; ++i) cols.at(i, j) *= s;
    }
    const ScoreResult c2 = completeness_scores(cols);
    for (std::size_t j = 0; j < 4; ++j) CHECK(c2.per_item[j] == doctest::Approx(c.per_item[j]).epsilon(1e-9));

    // Per-dim disentanglement normalises rows; the weighted average also
    // survives a global rescale.
    ImportanceMatrix rows = r;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = rng.uniform(0.1, 10.0);
      for (std::size_t j = 0; j < 4; ++j) rows.at(i, j) *= s;
    }
    const ScoreResult d2 = disentanglement_scores(rows);
    for (std::size_t i = 0; i < n; ++i) CHECK(d2.per_item[i] == doctest::Approx(d.per_item[i]).epsilon(1e-9));
    ImportanceMatrix global = r;
    for (double& v : global.values) v *= 3.7;
    CHECK(disentanglement_scores(global).average == doctest::Approx(d.average).epsilon(1e-9));
  }
}

TEST_CASE("ks statistic") {
  CHECK(ks_uniform_statistic({0.5}) == doctest::Approx(0.5));
  std::vector<double> grid;
  for (int i = 0; i < 1000; ++i) grid.push_back((i + 0.5) / 1000.0);
  CHECK(ks_uniform_statistic(grid) == doctest::Approx(0.0005).epsilon(1e-6));
  std::vector<double> low(1000, 0.1);
  CHECK(ks_uniform_statistic(low) == doctest::Approx(0.9));
}

TEST_CASE("regression tree fits a step function exactly") {
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    const double v = i / 200.0;
    x.push_back(v);
    y.push_back(v < 0.3 ? 1.0 : 5.0);
  }
  FeatureMatrix fm{x, 200, 1};
  ForestOptions o;
  o.max_depth = 1;
  Rng rng(0);
  RegressionTree tree;
  std::vector<std::size_t> all(200);
  for (std::size_t i = 0; i < 200; ++i) all[i] = i;
  std::vector<double> imp(1, 0.0);
  tree.fit(fm, y, all, o, rng, imp);
  CHECK(tree.depth() == 1);
  CHECK(tree.predict(std::vector<double>{0.1}) == 1.0);
  CHECK(tree.predict(std::vector<double>{0.9}) == 5.0);
  // Impurity decrease = total SSE before the split.
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= 200.0;
  double sse = 0.0;
  for (double v : y) sse += (v - mean) * (v - mean);
  CHECK(imp[0] == doctest::Approx(sse));
}

TEST_CASE("fit rejects small or non-finite datasets") {
  RepresentationDataset empty;
  CHECK(empty.size() == 0);
  CHECK_THROWS_AS(fit_importance_matrix(empty, MetricOptions{}), UsageError);
  auto small = synthetic(999, 3, 1, [](const double* f, std::vector<double>& c, Rng&) {
    for (std::size_t i = 0; i < 3; ++i) c[i] = f[i];
  });
  CHECK_THROWS_AS(fit_importance_matrix(small, MetricOptions{}), UsageError);
  auto bad = synthetic(1000, 3, 1, [](const double* f, std::vector<double>& c, Rng&) {
    for (std::size_t i = 0; i < 3; ++i) c[i] = f[i];
  });
  bad.codes[5] = std::nan("");
  CHECK_THROWS_AS(fit_importance_matrix(bad, MetricOptions{}), IntegrityError);
}

TEST_CASE("a code dim that copies a factor takes the column argmax") {
  // c_i = factor (i mod 4) for i < 4, c_4.. = noise.
  const auto data = synthetic(3000, 6, 5, [](const double* f, std::vector<double>& c, Rng& rng) {
    c[0] = f[2];
    c[1] = f[0];
    c[2] = f[3];
    c[3] = f[1];
    c[4] = rng.uniform();
    c[5] = rng.uniform();
  });
  const ImportanceFit fit = fit_importance_matrix(data, quick_options());
  const std::size_t expected[kNumFactors] = {1, 3, 0, 2};
  for (std::size_t j = 0; j < kNumFactors; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 6; ++i) {
      if (fit.importance.at(i, j) > fit.importance.at(best, j)) best = i;
    }
    CHECK(best == expected[j]);
  }
  CHECK(fit.validation_r2[0] > 0.95);
  CHECK(fit.validation_r2[1] > 0.95);
  CHECK(fit.validation_r2[2] > 0.95);
  // A perfect permuted copy is fully disentangled and complete.
  CHECK(disentanglement_scores(fit.importance).average > 0.8);
  CHECK(completeness_scores(fit.importance).average > 0.8);
}

TEST_CASE("shuffled labels leave validation R2 at most 0.1") {
  const auto data = synthetic(3000, 5, 6, [](const double*, std::vector<double>& c, Rng& rng) {
    for (double& v : c) v = rng.uniform();
  });
  const ImportanceFit fit = fit_importance_matrix(data, quick_options());
  for (double r2 : fit.validation_r2) CHECK(r2 <= 0.1);
  for (int d : fit.chosen_depth) CHECK((d == 4 || d == 8));
}

TEST_CASE("redundant code dims split the importance") {
  const auto data = synthetic(3000, 4, 7, [](const double* f, std::vector<double>& c, Rng& rng) {
    c[0] = f[0];
    c[1] = f[0];
    c[2] = rng.uniform();
    c[3] = rng.uniform();
  });
  MetricOptions o = quick_options();
  const ImportanceFit fit = fit_importance_matrix(data, o);
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) total += fit.importance.at(i, 0);
  const double share0 = fit.importance.at(0, 0) / total;
  const double share1 = fit.importance.at(1, 0) / total;
  MESSAGE("redundant shares " << share0 << " " << share1);
  CHECK(share0 < 0.9);
  CHECK(share1 < 0.9);
  CHECK(share0 + share1 > 0.9);
}

TEST_CASE("a constant factor yields a uniform column and a warning") {
  auto data = synthetic(1200, 3, 8, [](const double* f, std::vector<double>& c, Rng&) {
    for (std::size_t i = 0; i < 3; ++i) c[i] = f[i];
  });
  for (std::size_t r = 0; r < data.size(); ++r) data.factors[r * kNumFactors + 2] = 0.25;
  const ImportanceFit fit = fit_importance_matrix(data, quick_options());
  for (std::size_t i = 0; i < 3; ++i) CHECK(fit.importance.at(i, 2) == doctest::Approx(1.0 / 3.0));
  CHECK_FALSE(fit.warnings.empty());
}

TEST_CASE("fits are deterministic given the seed") {
  const auto data = synthetic(1500, 5, 9, [](const double* f, std::vector<double>& c, Rng& rng) {
    c[0] = f[0] + 0.1 * rng.uniform();
    c[1] = f[1] * f[2];
    c[2] = f[3];
    c[3] = rng.uniform();
    c[4] = f[2] - f[0];
  });
  const ImportanceFit a = fit_importance_matrix(data, quick_options());
  const ImportanceFit b = fit_importance_matrix(data, quick_options());
  CHECK(a.importance.values == b.importance.values);
  CHECK(a.validation_mse == b.validation_mse);
  MetricOptions other = quick_options();
  other.seed = 4;
  CHECK_FALSE(fit_importance_matrix(data, other).importance.values == a.importance.values);
}

TEST_CASE("collected datasets are deterministic with near-uniform factor marginals") {
  const AgentModelF model = AgentModelF::create(ModelConfig{}, 1);
  const EnvConfig env;
  const RepresentationDataset a = collect_dataset(model, env, 10000, 21);
  CHECK(a.size() == 10000);
  CHECK(a.code_dim == 10);
  const RepresentationDataset b = collect_dataset(model, env, 300, 21);
  for (std::size_t i = 0; i < b.codes.size(); ++i) REQUIRE(b.codes[i] == a.codes[i]);
  for (std::size_t j = 0; j < kNumFactors; ++j) {
    std::vector<double> col;
    for (std::size_t r = 0; r < a.size(); ++r) {
      const double v = a.factors[r * kNumFactors + j];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      col.push_back(v);
    }
    const double ks = ks_uniform_statistic(col);
    MESSAGE(std::string(kFactorNames[j]) << " KS " << ks);
    CHECK(ks < 0.05);
  }
  CHECK(collect_dataset(model, env, 0, 1).size() == 0);
}
