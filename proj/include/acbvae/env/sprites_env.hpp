#ifndef ACBVAE_ENV_SPRITES_ENV_HPP_
#define ACBVAE_ENV_SPRITES_ENV_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acbvae/numerics/rng.hpp"

namespace acbvae {

inline constexpr std::size_t kImageSide = 64;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::size_t kNumActions = 9;
inline constexpr std::size_t kActionDims = 4;

// Binary image, row-major, values in {0, 1}.
struct Observation {
  std::vector<float> pixels = std::vector<float>(kImagePixels, 0.0f);

  float at(std::size_t row, std::size_t col) const { return pixels[row * kImageSide + col]; }
  friend bool operator==(const Observation&, const Observation&) = default;
};

// x and y are fractions of the image measured from the left and top edges.
// scale is the half-extent of the shape as a fraction of the image side.
struct ObjectPose {
  double x = 0.5;
  double y = 0.5;
  double scale = 0.14;
  double rot = 0.0;

  friend bool operator==(const ObjectPose&, const ObjectPose&) = default;
};

struct FactorState {
  ObjectPose heart;
  ObjectPose square;

  friend bool operator==(const FactorState&, const FactorState&) = default;
};

struct GoalState {
  double x = 0.5;
  double y = 0.5;
  double scale = 0.14;

  friend bool operator==(const GoalState&, const GoalState&) = default;
};

enum class DiscreteAction : std::uint8_t {
  kUp = 0,
  kDown,
  kLeft,
  kRight,
  kEnlarge,
  kShrink,
  kRotateLeft,
  kRotateRight,
  kNoop,
};

/// (vertical, horizontal, scale, rotate), each in {-1, 0, +1}.
using ActionVector = std::array<float, kActionDims>;

ActionVector action_to_vector(DiscreteAction action);
DiscreteAction action_from_index(std::size_t index);
std::string action_name(DiscreteAction action);
std::optional<DiscreteAction> parse_action(const std::string& name);

struct EnvConfig {
  double pos_min = 0.15;
  double pos_max = 0.85;
  double scale_min = 0.06;
  double scale_max = 0.22;
  double pos_unit = 1.0 / 32.0;
  double scale_unit = 0.01;
  double rot_unit = 3.14159265358979323846 / 16.0;
  int horizon = 64;
};

struct Transition {
  Observation obs;
  DiscreteAction action = DiscreteAction::kNoop;
  ActionVector action_vector{};
  float reward = 0.0f;
  Observation next_obs;
  bool done = false;
  FactorState next_factors;
};

/// Rasterizes both objects by point-sampling pixel centers. The heart is
/// the region (u^2 + v^2 - 1)^3 - u^2 v^3 <= 0 in object coordinates.
Observation render(const FactorState& factors);
/// Only the heart; used for heart masks and summary templates.
Observation render_heart(const ObjectPose& heart);

/// The two-object sprites world: a controllable heart and a square
/// distractor that is re-posed uniformly at random every step.
class SpritesEnv {
 public:
  explicit SpritesEnv(EnvConfig config = {}) : config_(config) {}

  /// Samples heart, square and goal poses. The distractor stream is split
  /// from the seed's stream unless given explicitly.
  Observation reset(std::uint64_t seed);
  Observation reset(std::uint64_t seed, std::uint64_t distractor_seed);

  /// Throws ProtocolError when the episode is over or reset was never called.
  Transition step(DiscreteAction action);

  /// Goal-distance reward of a pose, in [-2, 0].
  float reward(const ObjectPose& heart) const;

  const FactorState& factors() const { return factors_; }
  const GoalState& goal() const { return goal_; }
  const Observation& observation() const { return obs_; }
  const EnvConfig& config() const { return config_; }
  int step_index() const { return step_index_; }
  bool done() const { return done_; }
  bool active() const { return started_ && !done_; }

  /// Uniform pose within the configured ranges, drawn as x, y, scale, rot.
  static ObjectPose sample_pose(const EnvConfig& config, Rng& rng);

  /// Moves the heart one unit along the action's axis with clipping and
  /// rotation wrap-around.
  static ObjectPose apply_action(const EnvConfig& config, ObjectPose heart, DiscreteAction action);

 private:
  EnvConfig config_;
  Rng rng_{0};
  Rng distractor_rng_{0};
  FactorState factors_;
  GoalState goal_;
  Observation obs_;
  int step_index_ = 0;
  bool done_ = false;
  bool started_ = false;
};

}  // namespace acbvae

#endif  // ACBVAE_ENV_SPRITES_ENV_HPP_
