#include "acbvae/env/sprites_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "acbvae/errors.hpp"

namespace acbvae {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Heart curve fitted into roughly [-1, 1]^2 with the lobes on top.
bool inside_heart(double u, double v) {
  const double a = 1.12 * u;
  const double b = -1.12 * v + 0.12;
  const double q = a * a + b * b - 1.0;
  return q * q * q - a * a * b * b * b <= 0.0;
}

bool inside_square(double u, double v) { return std::abs(u) <= 1.0 && std::abs(v) <= 1.0; }

template <typename Inside>
void paint(Observation& obs, const ObjectPose& pose, Inside inside) {
  const double c = std::cos(pose.rot);
  const double s = std::sin(pose.rot);
  const double inv_scale = 1.0 / pose.scale;
  // Objects never extend past 1.5 half-extents; skip rows/cols beyond that.
  const double reach = 1.5 * pose.scale;
  const auto lo = [](double v) {
    return static_cast<std::size_t>(std::clamp(std::floor(v * kImageSide) - 1.0, 0.0, double(kImageSide)));
  };
  const auto hi = [](double v) {
    return static_cast<std::size_t>(std::clamp(std::ceil(v * kImageSide) + 1.0, 0.0, double(kImageSide)));
  };
  for (std::size_t r = lo(pose.y - reach); r < hi(pose.y + reach); ++r) {
    const double dy = (static_cast<double>(r) + 0.5) / kImageSide - pose.y;
    for (std::size_t col = lo(pose.x - reach); col < hi(pose.x + reach); ++col) {
      const double dx = (static_cast<double>(col) + 0.5) / kImageSide - pose.x;
      const double u = (c * dx + s * dy) * inv_scale;
      const double v = (-s * dx + c * dy) * inv_scale;
      if (inside(u, v)) obs.pixels[r * kImageSide + col] = 1.0f;
    }
  }
}

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

}  // namespace

ActionVector action_to_vector(DiscreteAction action) {
  switch (action) {
    case DiscreteAction::kUp: return {1, 0, 0, 0};
    case DiscreteAction::kDown: return {-1, 0, 0, 0};
    case DiscreteAction::kLeft: return {0, -1, 0, 0};
    case DiscreteAction::kRight: return {0, 1, 0, 0};
    case DiscreteAction::kEnlarge: return {0, 0, 1, 0};
    case DiscreteAction::kShrink: return {0, 0, -1, 0};
    case DiscreteAction::kRotateLeft: return {0, 0, 0, -1};
    case DiscreteAction::kRotateRight: return {0, 0, 0, 1};
    case DiscreteAction::kNoop: return {0, 0, 0, 0};
  }
  return {0, 0, 0, 0};
}

DiscreteAction action_from_index(std::size_t index) {
  if (index >= kNumActions) throw UsageError("action index " + std::to_string(index) + " out of range");
  return static_cast<DiscreteAction>(index);
}

std::string action_name(DiscreteAction action) {
  static const char* kNames[] = {"up",     "down",        "left",         "right", "enlarge",
                                 "shrink", "rotate_left", "rotate_right", "noop"};
  return kNames[static_cast<std::size_t>(action)];
}

std::optional<DiscreteAction> parse_action(const std::string& name) {
  for (std::size_t i = 0; i < kNumActions; ++i) {
    if (action_name(action_from_index(i)) == name) return action_from_index(i);
  }
  return std::nullopt;
}

Observation render_heart(const ObjectPose& heart) {
  Observation obs;
  paint(obs, heart, inside_heart);
  return obs;
}

Observation render(const FactorState& factors) {
  Observation obs = render_heart(factors.heart);
  paint(obs, factors.square, inside_square);
  return obs;
}

ObjectPose SpritesEnv::sample_pose(const EnvConfig& config, Rng& rng) {
  ObjectPose p;
  p.x = rng.uniform(config.pos_min, config.pos_max);
  p.y = rng.uniform(config.pos_min, config.pos_max);
  p.scale = rng.uniform(config.scale_min, config.scale_max);
  p.rot = rng.uniform(0.0, kTwoPi);
  return p;
}

ObjectPose SpritesEnv::apply_action(const EnvConfig& config, ObjectPose heart, DiscreteAction action) {
  const ActionVector a = action_to_vector(action);
  // Image rows grow downward, so "up" decreases y.
  heart.y = std::clamp(heart.y - a[0] * config.pos_unit, config.pos_min, config.pos_max);
  heart.x = std::clamp(heart.x + a[1] * config.pos_unit, config.pos_min, config.pos_max);
  heart.scale = std::clamp(heart.scale + a[2] * config.scale_unit, config.scale_min, config.scale_max);
  if (a[3] != 0.0f) heart.rot = wrap_angle(heart.rot + a[3] * config.rot_unit);
  return heart;
}

Observation SpritesEnv::reset(std::uint64_t seed) {
  Rng main(seed);
  Rng distractor = main.split();
  rng_ = main;
  distractor_rng_ = distractor;
  factors_.heart = sample_pose(config_, rng_);
  goal_.x = rng_.uniform(config_.pos_min, config_.pos_max);
  goal_.y = rng_.uniform(config_.pos_min, config_.pos_max);
  goal_.scale = rng_.uniform(config_.scale_min, config_.scale_max);
  factors_.square = sample_pose(config_, distractor_rng_);
  step_index_ = 0;
  done_ = false;
  started_ = true;
  obs_ = render(factors_);
  return obs_;
}

Observation SpritesEnv::reset(std::uint64_t seed, std::uint64_t distractor_seed) {
  reset(seed);
  distractor_rng_ = Rng(distractor_seed);
  factors_.square = sample_pose(config_, distractor_rng_);
  obs_ = render(factors_);
  return obs_;
}

float SpritesEnv::reward(const ObjectPose& heart) const {
  const double pos = (std::abs(heart.x - goal_.x) + std::abs(heart.y - goal_.y)) /
                     (2.0 * (config_.pos_max - config_.pos_min));
  const double scale = std::abs(heart.scale - goal_.scale) / (config_.scale_max - config_.scale_min);
  return static_cast<float>(-(pos + scale));
}

Transition SpritesEnv::step(DiscreteAction action) {
  if (!started_) throw ProtocolError("step called before reset");
  if (done_) throw ProtocolError("step called after the episode ended (step " +
                                 std::to_string(step_index_) + ")");
  Transition t;
  t.obs = obs_;
  t.action = action;
  t.action_vector = action_to_vector(action);
  factors_.heart = apply_action(config_, factors_.heart, action);
  factors_.square = sample_pose(config_, distractor_rng_);
  ++step_index_;
  done_ = step_index_ >= config_.horizon;
  obs_ = render(factors_);
  t.reward = reward(factors_.heart);
  t.next_obs = obs_;
  t.done = done_;
  t.next_factors = factors_;
  return t;
}

}  // namespace acbvae
