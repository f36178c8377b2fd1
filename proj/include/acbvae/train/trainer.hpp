#ifndef ACBVAE_TRAIN_TRAINER_HPP_
#define ACBVAE_TRAIN_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acbvae/env/sprites_env.hpp"
#include "acbvae/model/losses.hpp"
#include "acbvae/numerics/adam.hpp"

namespace acbvae {

enum class ActionMapMode {
  kSampled,   // the taken action's unit vector
  kExpected,  // sum_a pi(a|h) * vec(a), treated as a constant
  kNone,      // plain (beta-)VAE on (s_t, s_{t+1}) pairs
};

std::string action_map_mode_name(ActionMapMode mode);
ActionMapMode parse_action_map_mode(const std::string& name);

struct Hyperparams {
  double beta = 20.0;
  double alpha = 0.01;
  double gamma = 0.99;
  int rollout_steps = 8;  // k
  double entropy_coef = 0.01;
  double lr_vae = 1e-4;     // encoder and decoder
  double lr_policy = 7e-4;  // policy and value heads
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  ActionMapMode action_map = ActionMapMode::kSampled;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct TrainConfig {
  ModelConfig model;
  Hyperparams hyper;
  EnvConfig env;
  std::int64_t total_steps = 200000;
  int num_envs = 8;  // E
  /// Checkpoint every this many updates; 0 disables periodic checkpoints.
  int checkpoint_every = 0;
  std::uint64_t seed = 0;
  /// Replace the policy by the uniform random policy and train only the
  /// encoder/decoder on the AC-beta-VAE loss.
  bool vae_only = false;

  std::int64_t steps_per_update() const { return static_cast<std::int64_t>(num_envs) * hyper.rollout_steps; }
  void validate() const;
};

// Parallel environments with their episode bookkeeping.
struct EnvPool {
  std::vector<SpritesEnv> envs;
  std::vector<Rng> episode_seeds;
  std::vector<float> running_return;

  static EnvPool create(const TrainConfig& config);
};

// E*k transitions stored env-major: index e * k + t.
struct RolloutBatch {
  std::size_t num_envs = 0;
  std::size_t steps = 0;
  std::vector<Transition> transitions;
  std::vector<LatentStats> latents;              // encoder output at s_t
  std::vector<std::vector<float>> noise;         // eps used for z
  std::vector<std::vector<float>> z;             // mu + sigma * eps
  std::vector<std::vector<float>> action_maps;   // a^map added to z
  std::vector<float> log_probs;
  std::vector<float> values;
  std::vector<float> bootstrap;  // per env, 0 after a terminal
  std::vector<float> returns;
  std::vector<float> advantages;
  std::vector<float> finished_episode_returns;

  std::size_t size() const { return transitions.size(); }
};

struct UpdateReport {
  std::int64_t step = 0;    // environment steps consumed so far
  std::int64_t update = 0;  // 1-based update index
  double policy_loss = 0.0;
  double ac_loss = 0.0;
  double critic_loss = 0.0;
  double total_loss = 0.0;
  double mean_return = 0.0;  // mean n-step return R over the batch
  double mean_kl = 0.0;
  double mean_recon = 0.0;   // mean per-sample reconstruction BCE
  int episodes_finished = 0;
  double mean_episode_return = 0.0;  // 0 when no episode finished

  bool all_finite() const;
};

/// Steps every environment k times under the fixed `model` snapshot.
RolloutBatch collect_rollout(EnvPool& pool, const AgentModelF& model, const TrainConfig& config, Rng& rng);

/// Builds the batched loss inputs the update consumes.
LossInputs<float> make_loss_inputs(const RolloutBatch& batch);
LossWeights make_loss_weights(const TrainConfig& config);

/// One Adam step on encoder, decoder and policy from the total loss and one
/// on the value head from the critic loss. Throws TrainingError on a
/// non-finite loss without modifying the model.
UpdateReport train_update(const RolloutBatch& batch, AgentModelF& model, const TrainConfig& config);

struct TrainCallbacks {
  std::function<void(const UpdateReport&)> on_report;
  std::function<void(const AgentModelF&, std::int64_t step)> on_checkpoint;
};

struct TrainResult {
  AgentModelF model;
  std::int64_t steps = 0;
  std::vector<UpdateReport> reports;
};

/// Initial model for a config: deterministic in (model config, seed).
AgentModelF initial_model(const TrainConfig& config);

TrainResult train(const TrainConfig& config, const TrainCallbacks& callbacks = {});

enum class EvalPolicy { kSampled, kGreedy, kUniformRandom };

/// Undiscounted episode returns over `episodes` full episodes.
std::vector<double> evaluate_returns(const AgentModelF& model, const EnvConfig& env_config, int episodes,
                                     std::uint64_t seed, EvalPolicy policy);

}  // namespace acbvae

#endif  // ACBVAE_TRAIN_TRAINER_HPP_
