#ifndef ACBVAE_GOVERNANCE_GOVERN_HPP_
#define ACBVAE_GOVERNANCE_GOVERN_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acbvae/governance/traversal.hpp"

namespace acbvae {

// mu[dim] = value while begin <= step_index < end.
struct OverrideEntry {
  int begin = 0;
  int end = 0;
  std::size_t dim = 1;  // 1-based
  float value = 0.0f;

  friend bool operator==(const OverrideEntry&, const OverrideEntry&) = default;
};

struct OverrideSchedule {
  std::vector<OverrideEntry> entries;

  /// Throws UsageError for a dim outside [1, n], an empty or negative step
  /// range, or overlapping ranges on the same dim.
  void validate(std::size_t latent_dim) const;
  LatentOverrides active(int step_index) const;

  friend bool operator==(const OverrideSchedule&, const OverrideSchedule&) = default;
};

nlohmann::json schedule_to_json(const OverrideSchedule& schedule);
OverrideSchedule schedule_from_json(const nlohmann::json& doc);

struct TraceStep {
  int step_index = 0;  // index of the step taken, starting at 0
  DiscreteAction action = DiscreteAction::kNoop;
  float reward = 0.0f;
  bool done = false;
  LatentOverrides applied_overrides;
  std::vector<float> policy;
  ObjectPose heart;           // after the step
  std::vector<float> frame;   // observation after the step
};

struct GovernTrace {
  std::uint64_t seed = 0;
  OverrideSchedule schedule;
  ObjectPose initial_heart;
  std::vector<float> initial_frame;
  std::vector<TraceStep> steps;

  /// Net horizontal heart displacement, final x minus initial x.
  double net_dx() const;
};

/// One environment driven by the policy acting on mu with overrides. The
/// policy samples its action from a stream derived from the reset seed
/// unless an action is forced.
class GovernedSession {
 public:
  GovernedSession(const AgentModelF& model, EnvConfig env_config) : model_(&model), env_(env_config) {}

  Observation reset(std::uint64_t seed);
  /// Throws ProtocolError before reset or after the episode is done.
  TraceStep step(const LatentOverrides& overrides, std::optional<DiscreteAction> action = std::nullopt);

  const SpritesEnv& env() const { return env_; }
  bool done() const { return env_.done(); }

 private:
  const AgentModelF* model_;
  SpritesEnv env_;
  Rng policy_rng_{0};
};

/// Full episode under the schedule.
GovernTrace govern_rollout(const AgentModelF& model, const EnvConfig& env_config, const OverrideSchedule& schedule,
                           std::uint64_t seed);

/// One step as the JSON object {step_index, action, reward, done, policy,
/// applied_overrides, heart, frame{width, height, data}}.
nlohmann::json trace_step_to_json(const TraceStep& step);
nlohmann::json frame_to_json(std::span<const float> pixels);
/// Inverse of frame_to_json; throws IntegrityError on a malformed frame.
std::vector<float> frame_from_json(const nlohmann::json& frame);
std::string serialize_trace(const GovernTrace& trace);
GovernTrace parse_trace(const std::string& text);

}  // namespace acbvae

#endif  // ACBVAE_GOVERNANCE_GOVERN_HPP_
