#ifndef ACBVAE_MODEL_LOSSES_HPP_
#define ACBVAE_MODEL_LOSSES_HPP_

#include <span>
#include <vector>

#include "acbvae/model/agent_model.hpp"

namespace acbvae {

/// sum_i 0.5 (mu_i^2 + sigma_i^2 - 1 - log sigma_i^2).
double kl_standard_normal(const LatentStats& stats);

/// Per-row KL to N(0, I): [B x n] -> [B x 1].
template <typename T>
Var<T> kl_per_row(Var<T> mu, Var<T> logvar);

template <typename T>
struct AcVaeTerms {
  Var<T> loss;   // recon + beta * kl
  Var<T> recon;  // batch mean of per-sample summed BCE
  Var<T> kl;     // batch mean of per-sample KL
};

/// Minimisation form of the action-conditional objective: batch mean of
/// BCE(decode(z + a^map), s') + beta * KL(q(z|s) || N(0, I)).
template <typename T>
AcVaeTerms<T> ac_beta_vae_loss(Var<T> recon_logits, const Tensor<T>& next_obs, Var<T> mu, Var<T> logvar,
                               double beta);

struct ReturnsAndAdvantages {
  std::vector<float> returns;
  std::vector<float> advantages;
};

/// Backward recursion R <- r_i + gamma R from `bootstrap`. A `done` flag at
/// index i restarts the recursion from zero at that step.
ReturnsAndAdvantages n_step_returns_and_advantages(std::span<const float> rewards,
                                                   std::span<const float> values, float bootstrap,
                                                   float gamma, std::span<const bool> dones = {});

/// -mean_i[log pi(a_i|h_i) A_i] - entropy_coef * mean entropy. Advantages
/// are constants.
template <typename T>
Var<T> a2c_policy_loss(Var<T> logits, const std::vector<std::size_t>& actions, const Tensor<T>& advantages,
                       double entropy_coef);

/// policy + alpha * ac.
template <typename T>
Var<T> total_loss(Var<T> policy_loss, Var<T> ac_loss, double alpha);

/// mean_i (R_i - V_i)^2.
template <typename T>
Var<T> critic_loss(const Tensor<T>& returns, Var<T> values);

// Everything one update needs, in row-batch form.
template <typename T>
struct LossInputs {
  Tensor<T> obs;         // [B x P]
  Tensor<T> next_obs;    // [B x P]
  Tensor<T> action_map;  // [B x n]
  Tensor<T> noise;       // [B x n]
  std::vector<std::size_t> actions;
  Tensor<T> advantages;  // [B x 1]
  Tensor<T> returns;     // [B x 1]
};

struct LossWeights {
  double beta = 20.0;
  double alpha = 0.01;
  double entropy_coef = 0.01;
  /// When false the total is the AC-beta-VAE loss alone (random-policy
  /// regime) and the policy/critic terms are not built.
  bool policy_term = true;
};

template <typename T>
struct LossTerms {
  Var<T> total;
  Var<T> ac;
  Var<T> recon;
  Var<T> kl;
  Var<T> policy;  // untraced when policy_term is false
  Var<T> critic;  // untraced when policy_term is false
  typename AgentModel<T>::Latent latent;
  Var<T> z;
};

/// One encoder evaluation feeds both the VAE path and the heads.
template <typename T>
LossTerms<T> compute_losses(const AgentModel<T>& model, Tape<T>& tape, const LossInputs<T>& in,
                            const LossWeights& weights);

}  // namespace acbvae

#endif  // ACBVAE_MODEL_LOSSES_HPP_
