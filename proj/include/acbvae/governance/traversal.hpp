#ifndef ACBVAE_GOVERNANCE_TRAVERSAL_HPP_
#define ACBVAE_GOVERNANCE_TRAVERSAL_HPP_

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "acbvae/model/agent_model.hpp"

namespace acbvae {

/// `steps` points spanning [lo, hi] inclusive.
std::vector<float> linear_grid(float lo, float hi, int steps);

struct TraversalSpec {
  std::size_t dim = 1;  // 1-based
  std::vector<float> grid = linear_grid(-2.0f, 2.0f, 9);
  /// Base mu and logvar; zeros when absent.
  std::optional<LatentStats> base;
  /// Zero the other action-mapped dims before traversing.
  bool zero_other_mapped = false;
  DiscreteAction reference_action = DiscreteAction::kNoop;
};

struct TraversalPoint {
  float value = 0.0f;
  std::vector<float> image;   // decode(mu' + a^map), 64 x 64 probabilities
  std::vector<float> policy;  // pi(. | concat(mu', logvar))
};

/// Throws UsageError for a dim outside [1, n] or a grid that is not
/// strictly increasing.
std::vector<TraversalPoint> traverse(const AgentModelF& model, const TraversalSpec& spec);

// Decoded-state summaries.
enum SummaryIndex : std::size_t { kSumX = 0, kSumY, kSumScale, kSumRot, kSumDistractor, kNumSummaries };
inline const char* const kSummaryNames[kNumSummaries] = {"heart_x", "heart_y", "heart_scale", "heart_rot",
                                                         "distractor_variance"};

struct ImageSummary {
  bool heart_found = false;
  double x = 0.5;  // centroid, fraction of the image side
  double y = 0.5;
  double scale = 0.0;  // from the component area
  double rot = 0.0;    // best heart-template angle in [0, 2 pi)
  double distractor_variance = 0.0;  // pixel variance outside the heart component
};

/// Thresholds at 0.5, takes the connected component that best matches a
/// heart template and reads position, scale and rotation from it.
ImageSummary summarize_image(std::span<const float> image);

struct EffectReport {
  std::size_t dims = 0;
  std::size_t base_count = 0;
  std::vector<float> grid;
  /// [dims x kNumSummaries] standard deviations over the grid, averaged over
  /// the base observations. The rotation column uses the circular std.
  std::vector<double> stds;

  double at(std::size_t dim0, std::size_t summary) const { return stds[dim0 * kNumSummaries + summary]; }
  /// Mean over the listed 0-based dims of the four heart summaries.
  double mean_heart_std(std::size_t first_dim0, std::size_t end_dim0) const;
};

/// Every dim traversed from mu of each base observation.
EffectReport effect_report(const AgentModelF& model, std::span<const Observation> bases,
                           const std::vector<float>& grid = linear_grid(-2.0f, 2.0f, 9));

/// `count` observations from resets of the environment with derived seeds.
std::vector<Observation> reference_observations(const EnvConfig& env_config, std::size_t count, std::uint64_t seed);

using LatentOverrides = std::map<std::size_t, float>;  // 1-based dim -> mu value

struct Prediction {
  LatentStats latent;  // after overrides
  DiscreteAction action = DiscreteAction::kNoop;
  std::vector<float> image;
  std::vector<float> policy;
  float value = 0.0f;
};

/// Throws UsageError if any overridden dim is outside [1, n].
void validate_overrides(const LatentOverrides& overrides, std::size_t latent_dim);

/// Encodes obs, overrides mu, reports pi(.|h) and V(h) and decodes
/// mu + a^map. Without an action the policy's most probable one is used.
Prediction predict_with_override(const AgentModelF& model, const Observation& obs, const LatentOverrides& overrides,
                                 std::optional<DiscreteAction> action = std::nullopt);

}  // namespace acbvae

#endif  // ACBVAE_GOVERNANCE_TRAVERSAL_HPP_
