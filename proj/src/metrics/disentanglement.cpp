#include "acbvae/metrics/disentanglement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>

#include "acbvae/metrics/regression_forest.hpp"

namespace acbvae {

namespace {

// 1 - H_base(p) for a non-negative weight vector; nullopt for all zeros.
std::optional<double> one_minus_entropy(const std::vector<double>& w, double base) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) return std::nullopt;
  if (base <= 1.0) return 1.0;
  double h = 0.0;
  for (double v : w) {
    const double p = v / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return 1.0 - h / std::log(base);
}

double variance(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

}  // namespace

RepresentationDataset collect_dataset(const AgentModelF& model, const EnvConfig& env_config, std::size_t n,
                                      std::uint64_t seed, int max_random_steps) {
  RepresentationDataset data;
  data.code_dim = model.config.latent_dim;
  if (n == 0) return data;
  data.codes.reserve(n * data.code_dim);
  data.factors.reserve(n * kNumFactors);
  Rng rng(seed);
  SpritesEnv env(env_config);
  constexpr std::size_t kChunk = 256;
  std::vector<Observation> chunk;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    chunk.clear();
    for (std::size_t i = 0; i < count; ++i) {
      env.reset(rng.next());
      const int steps = static_cast<int>(rng.below(static_cast<std::uint32_t>(max_random_steps + 1)));
      for (int s = 0; s < steps; ++s) {
        env.step(action_from_index(rng.below(static_cast<std::uint32_t>(kNumActions))));
      }
      chunk.push_back(env.observation());
      const ObjectPose& h = env.factors().heart;
      data.factors.push_back((h.x - env_config.pos_min) / (env_config.pos_max - env_config.pos_min));
      data.factors.push_back((h.y - env_config.pos_min) / (env_config.pos_max - env_config.pos_min));
      data.factors.push_back((h.scale - env_config.scale_min) / (env_config.scale_max - env_config.scale_min));
      data.factors.push_back(h.rot / (2.0 * std::numbers::pi));
    }
    std::vector<const Observation*> ptrs;
    for (const Observation& o : chunk) ptrs.push_back(&o);
    for (const LatentStats& s : model.encode_batch(ptrs)) data.codes.insert(data.codes.end(), s.mu.begin(), s.mu.end());
  }
  return data;
}

double ks_uniform_statistic(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = std::clamp(values[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

ImportanceFit fit_importance_matrix(const RepresentationDataset& data, const MetricOptions& options) {
  const std::size_t n_rows = data.size();
  if (n_rows < 1000) {
    throw UsageError("metric scoring needs at least 1000 samples, got " + std::to_string(n_rows));
  }
  if (!(options.validation_fraction > 0.0 && options.validation_fraction < 1.0)) {
    throw UsageError("validation_fraction must lie in (0, 1)");
  }
  if (options.depth_grid.empty()) throw UsageError("depth grid is empty");
  for (double v : data.codes) {
    if (!std::isfinite(v)) throw IntegrityError("dataset contains non-finite codes");
  }

  const std::size_t dim = data.code_dim;
  const auto n_val = static_cast<std::size_t>(std::round(options.validation_fraction * static_cast<double>(n_rows)));
  const std::size_t n_train = n_rows - n_val;
  if (n_val == 0 || n_train == 0) throw UsageError("validation split leaves an empty partition");
  const FeatureMatrix train{std::span<const double>(data.codes).first(n_train * dim), n_train, dim};
  const FeatureMatrix val{std::span<const double>(data.codes).subspan(n_train * dim), n_val, dim};

  ImportanceFit fit;
  fit.importance.rows = dim;
  fit.importance.cols = kNumFactors;
  fit.importance.values.assign(dim * kNumFactors, 0.0);

  for (std::size_t j = 0; j < kNumFactors; ++j) {
    // Targets for this factor: one column, or (sin, cos) for rotation.
    std::vector<std::vector<double>> targets;
    if (j == 3) {
      std::vector<double> s(n_rows), c(n_rows);
      for (std::size_t r = 0; r < n_rows; ++r) {
        const double a = data.factors[r * kNumFactors + 3] * 2.0 * std::numbers::pi;
        s[r] = std::sin(a);
        c[r] = std::cos(a);
      }
      targets = {s, c};
    } else {
      std::vector<double> t(n_rows);
      for (std::size_t r = 0; r < n_rows; ++r) t[r] = data.factors[r * kNumFactors + j];
      targets = {t};
    }

    double best_mse = std::numeric_limits<double>::infinity();
    int best_depth = options.depth_grid.front();
    std::vector<double> best_importance(dim, 0.0);
    double target_var = 0.0;
    bool constant = true;
    for (const auto& t : targets) {
      const double v = variance(std::span<const double>(t).first(n_train));
      target_var += variance(std::span<const double>(t).subspan(n_train));
      if (v > 1e-12) constant = false;
    }
    if (constant) {
      fit.warnings.push_back(std::string("factor '") + kFactorNames[j] +
                             "' is constant; assigning uniform importances");
      for (std::size_t i = 0; i < dim; ++i) fit.importance.at(i, j) = 1.0 / static_cast<double>(dim);
      fit.chosen_depth.push_back(0);
      fit.validation_mse.push_back(0.0);
      fit.validation_r2.push_back(0.0);
      continue;
    }

    for (int depth : options.depth_grid) {
      double mse = 0.0;
      std::vector<double> importance(dim, 0.0);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        ForestOptions fo;
        fo.num_trees = options.num_trees;
        fo.max_depth = depth;
        fo.seed = mix_seed(options.seed, j * 16 + t);
        RegressionForest forest;
        const auto& y = targets[t];
        forest.fit(train, std::span<const double>(y).first(n_train), fo);
        mse += forest.mse(val, std::span<const double>(y).subspan(n_train));
        for (std::size_t i = 0; i < dim; ++i) {
          importance[i] += forest.importances()[i];
        }
      }
      if (mse < best_mse) {
        best_mse = mse;
        best_depth = depth;
        best_importance = importance;
      }
    }
    for (std::size_t i = 0; i < dim; ++i) fit.importance.at(i, j) = best_importance[i];
    fit.chosen_depth.push_back(best_depth);
    fit.validation_mse.push_back(best_mse / static_cast<double>(targets.size()));
    fit.validation_r2.push_back(target_var > 0.0 ? 1.0 - best_mse / target_var : 0.0);
  }
  return fit;
}

ScoreResult disentanglement_scores(const ImportanceMatrix& r) {
  ScoreResult out;
  double grand_total = 0.0;
  std::vector<double> row_totals(r.rows, 0.0);
  for (std::size_t i = 0; i < r.rows; ++i) {
    for (std::size_t j = 0; j < r.cols; ++j) row_totals[i] += r.at(i, j);
    grand_total += row_totals[i];
  }
  for (std::size_t i = 0; i < r.rows; ++i) {
    std::vector<double> row(r.values.begin() + static_cast<std::ptrdiff_t>(i * r.cols),
                            r.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * r.cols));
    const auto d = one_minus_entropy(row, static_cast<double>(r.cols));
    if (!d) out.warnings.push_back("code dim " + std::to_string(i + 1) + " has zero importance; D = 0");
    out.per_item.push_back(d.value_or(0.0));
  }
  if (grand_total > 0.0) {
    for (std::size_t i = 0; i < r.rows; ++i) out.average += out.per_item[i] * row_totals[i] / grand_total;
  }
  return out;
}

ScoreResult completeness_scores(const ImportanceMatrix& r) {
  ScoreResult out;
  for (std::size_t j = 0; j < r.cols; ++j) {
    std::vector<double> col(r.rows);
    for (std::size_t i = 0; i < r.rows; ++i) col[i] = r.at(i, j);
    const auto c = one_minus_entropy(col, static_cast<double>(r.rows));
    if (!c) out.warnings.push_back(std::string("factor ") + std::to_string(j + 1) + " has zero importance; C = 0");
    out.per_item.push_back(c.value_or(0.0));
  }
  if (!out.per_item.empty()) {
    out.average = std::accumulate(out.per_item.begin(), out.per_item.end(), 0.0) /
                  static_cast<double>(out.per_item.size());
  }
  return out;
}

}  // namespace acbvae
