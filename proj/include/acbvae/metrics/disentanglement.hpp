#ifndef ACBVAE_METRICS_DISENTANGLEMENT_HPP_
#define ACBVAE_METRICS_DISENTANGLEMENT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "acbvae/model/agent_model.hpp"

namespace acbvae {

inline constexpr std::size_t kNumFactors = 4;  // heart x, y, scale, rot
inline const char* const kFactorNames[kNumFactors] = {"x", "y", "scale", "rot"};

// N rows of (code, factors). Factors are normalised to [0, 1]; rot is
// stored as rot / 2pi.
struct RepresentationDataset {
  std::size_t code_dim = 0;
  std::vector<double> codes;    // [N x code_dim]
  std::vector<double> factors;  // [N x kNumFactors]

  std::size_t size() const { return code_dim ? codes.size() / code_dim : 0; }
};

/// Resets the environment with a fresh seed per sample and takes up to
/// `max_random_steps` uniformly random actions; the code is mu = encode(s).
RepresentationDataset collect_dataset(const AgentModelF& model, const EnvConfig& env_config, std::size_t n,
                                      std::uint64_t seed, int max_random_steps = 8);

/// Maximum distance between the empirical CDF of `values` and U(0, 1).
double ks_uniform_statistic(std::vector<double> values);

// R[i][j] >= 0: importance of code dim i for factor j. Row-major n x F.
struct ImportanceMatrix {
  std::size_t rows = 0;  // code dims
  std::size_t cols = 0;  // factors
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

struct MetricOptions {
  double validation_fraction = 0.2;
  int num_trees = 20;
  std::vector<int> depth_grid{2, 4, 8, 16};
  std::uint64_t seed = 0;
};

struct ImportanceFit {
  ImportanceMatrix importance;
  std::vector<int> chosen_depth;       // per factor
  std::vector<double> validation_mse;  // per factor, at the chosen depth
  std::vector<double> validation_r2;   // per factor
  std::vector<std::string> warnings;
};

/// One regression forest per factor target with depth chosen by validation
/// MSE. Rotation is regressed as the (sin, cos) pair and the two importance
/// vectors are summed into the rot column. Requires N >= 1000.
ImportanceFit fit_importance_matrix(const RepresentationDataset& data, const MetricOptions& options);

struct ScoreResult {
  std::vector<double> per_item;  // D_i per code dim, or C_j per factor
  double average = 0.0;
  std::vector<std::string> warnings;
};

/// D_i = 1 - H_F(P_i.) with P row-normalised; average weighted by each
/// row's share of total importance.
ScoreResult disentanglement_scores(const ImportanceMatrix& r);

/// C_j = 1 - H_n(P~_.j) with P~ column-normalised; unweighted mean.
ScoreResult completeness_scores(const ImportanceMatrix& r);

}  // namespace acbvae

#endif  // ACBVAE_METRICS_DISENTANGLEMENT_HPP_
