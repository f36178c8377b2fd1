#ifndef ACBVAE_MODEL_AGENT_MODEL_HPP_
#define ACBVAE_MODEL_AGENT_MODEL_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "acbvae/env/sprites_env.hpp"
#include "acbvae/numerics/mlp.hpp"

namespace acbvae {

struct ModelConfig {
  std::size_t image_pixels = kImagePixels;
  std::size_t latent_dim = 10;  // n
  std::size_t action_dims = 4;  // m, the leading latent dims that receive a^map
  std::vector<std::size_t> encoder_hidden{512, 256};
  std::vector<std::size_t> decoder_hidden{256, 512};
  std::size_t head_hidden = 64;
  std::size_t num_actions = kNumActions;
  double logvar_min = -20.0;
  double logvar_max = 2.0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Encoder output for one observation. h = concat(mu, logvar) is what the
// policy and value heads read.
struct LatentStats {
  std::vector<float> mu;
  std::vector<float> logvar;

  std::vector<float> h() const;
  std::vector<float> sigma() const;
};

/// Shared-backbone model: encoder q(z|s), decoder p(s'|z + a^map), policy
/// head pi(a|h) and value head V(h).
template <typename T>
class AgentModel {
 public:
  struct Latent {
    Var<T> mu;
    Var<T> logvar;
    Var<T> h;
  };

  static AgentModel create(const ModelConfig& config, std::uint64_t seed);

  // Traced forward passes. Inputs are row batches.
  Latent encode(Var<T> obs) const;
  Var<T> decode_logits(Var<T> z_plus) const;
  Var<T> policy_logits(Var<T> h) const;
  /// Reads h through a stop-gradient so the critic never reaches the encoder.
  Var<T> value(Var<T> h) const;

  // Untraced single-sample inference.
  LatentStats encode(const Observation& obs) const;
  std::vector<LatentStats> encode_batch(std::span<const Observation* const> obs) const;
  /// Per-pixel Bernoulli means in (0, 1).
  std::vector<float> decode(std::span<const float> z_plus) const;
  std::vector<float> policy_probs(std::span<const float> h) const;
  float value(std::span<const float> h) const;

  std::vector<ParamSet<T>*> param_sets() { return {&encoder, &decoder, &policy, &value_head}; }
  std::vector<const ParamSet<T>*> param_sets() const {
    return {&encoder, &decoder, &policy, &value_head};
  }

  template <typename U>
  AgentModel<U> cast() const;

  ModelConfig config;
  ParamSet<T> encoder;
  ParamSet<T> decoder;
  ParamSet<T> policy;
  ParamSet<T> value_head;

  friend bool operator==(const AgentModel& a, const AgentModel& b) {
    return a.config == b.config && a.encoder == b.encoder && a.decoder == b.decoder &&
           a.policy == b.policy && a.value_head == b.value_head;
  }
};

using AgentModelF = AgentModel<float>;

/// z_i = mu_i + sigma_i * eps_i with fresh standard-normal eps.
std::vector<float> reparameterize(const LatentStats& stats, Rng& rng);
/// Traced reparameterization with given noise; gradient reaches mu and logvar only.
template <typename T>
Var<T> reparameterize(Var<T> mu, Var<T> logvar, const Tensor<T>& noise);

/// [a, 0...0] of length n. Requires a.size() <= n.
std::vector<float> make_action_map(std::span<const float> action, std::size_t n);

}  // namespace acbvae

#endif  // ACBVAE_MODEL_AGENT_MODEL_HPP_
