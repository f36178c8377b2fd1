#include "acbvae/model/losses.hpp"

#include <cmath>

namespace acbvae {

double kl_standard_normal(const LatentStats& stats) {
  double total = 0.0;
  for (std::size_t i = 0; i < stats.mu.size(); ++i) {
    const double mu = stats.mu[i];
    const double lv = stats.logvar[i];
    total += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
  }
  return total;
}

template <typename T>
Var<T> kl_per_row(Var<T> mu, Var<T> logvar) {
  // 0.5 * (mu^2 + exp(lv) - 1 - lv)
  Var<T> inner = ag::sub(ag::add(ag::square(mu), ag::exp(logvar)), ag::add_scalar(logvar, T{1}));
  return ag::scale(ag::row_sum(inner), T{0.5});
}

template <typename T>
AcVaeTerms<T> ac_beta_vae_loss(Var<T> recon_logits, const Tensor<T>& next_obs, Var<T> mu, Var<T> logvar,
                               double beta) {
  const T batch = static_cast<T>(recon_logits.value().rows());
  Var<T> recon = ag::scale(ag::sum(ag::bce_with_logits(recon_logits, next_obs)), T{1} / batch);
  Var<T> kl = ag::mean(kl_per_row(mu, logvar));
  Var<T> loss = ag::add(recon, ag::scale(kl, static_cast<T>(beta)));
  return {loss, recon, kl};
}

ReturnsAndAdvantages n_step_returns_and_advantages(std::span<const float> rewards,
                                                   std::span<const float> values, float bootstrap,
                                                   float gamma, std::span<const bool> dones) {
  if (rewards.size() != values.size()) {
    throw DimensionError("returns: " + std::to_string(rewards.size()) + " rewards vs " +
                         std::to_string(values.size()) + " values");
  }
  if (!dones.empty() && dones.size() != rewards.size()) {
    throw DimensionError("returns: done flags must match rewards");
  }
  ReturnsAndAdvantages out;
  out.returns.resize(rewards.size());
  out.advantages.resize(rewards.size());
  float R = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (!dones.empty() && dones[i]) R = 0.0f;
    R = rewards[i] + gamma * R;
    out.returns[i] = R;
    out.advantages[i] = R - values[i];
  }
  return out;
}

template <typename T>
Var<T> a2c_policy_loss(Var<T> logits, const std::vector<std::size_t>& actions, const Tensor<T>& advantages,
                       double entropy_coef) {
  Tape<T>& tape = *logits.tape;
  Var<T> logp = ag::log_softmax(logits);
  Var<T> taken = ag::gather_cols(logp, actions);
  Var<T> adv = tape.constant(Tensor<T>({advantages.size(), 1}, advantages.storage()));
  Var<T> pg = ag::scale(ag::mean(ag::mul(taken, adv)), T{-1});
  if (entropy_coef == 0.0) return pg;
  // entropy_i = -sum_a p log p
  Var<T> p = ag::softmax(logits);
  Var<T> entropy = ag::scale(ag::row_sum(ag::mul(p, logp)), T{-1});
  return ag::sub(pg, ag::scale(ag::mean(entropy), static_cast<T>(entropy_coef)));
}

template <typename T>
Var<T> total_loss(Var<T> policy_loss, Var<T> ac_loss, double alpha) {
  return ag::add(policy_loss, ag::scale(ac_loss, static_cast<T>(alpha)));
}

template <typename T>
Var<T> critic_loss(const Tensor<T>& returns, Var<T> values) {
  Tape<T>& tape = *values.tape;
  Var<T> target = tape.constant(Tensor<T>(values.shape(), returns.storage()));
  return ag::mean(ag::square(ag::sub(target, values)));
}

template <typename T>
LossTerms<T> compute_losses(const AgentModel<T>& model, Tape<T>& tape, const LossInputs<T>& in,
                            const LossWeights& weights) {
  LossTerms<T> out;
  out.latent = model.encode(tape.constant(in.obs));
  out.z = reparameterize(out.latent.mu, out.latent.logvar, in.noise);
  Var<T> z_plus = ag::add(out.z, tape.constant(in.action_map));
  Var<T> logits = model.decode_logits(z_plus);
  AcVaeTerms<T> ac = ac_beta_vae_loss(logits, in.next_obs, out.latent.mu, out.latent.logvar, weights.beta);
  out.ac = ac.loss;
  out.recon = ac.recon;
  out.kl = ac.kl;
  if (!weights.policy_term) {
    out.total = ac.loss;
    return out;
  }
  out.policy = a2c_policy_loss(model.policy_logits(out.latent.h), in.actions, in.advantages,
                               weights.entropy_coef);
  out.total = total_loss(out.policy, out.ac, weights.alpha);
  out.critic = critic_loss(in.returns, model.value(out.latent.h));
  return out;
}

#define ACBVAE_INSTANTIATE_LOSSES(T)                                                               \
  template Var<T> kl_per_row(Var<T>, Var<T>);                                                      \
  template AcVaeTerms<T> ac_beta_vae_loss(Var<T>, const Tensor<T>&, Var<T>, Var<T>, double);       \
  template Var<T> a2c_policy_loss(Var<T>, const std::vector<std::size_t>&, const Tensor<T>&, double); \
  template Var<T> total_loss(Var<T>, Var<T>, double);                                              \
  template Var<T> critic_loss(const Tensor<T>&, Var<T>);                                           \
  template LossTerms<T> compute_losses(const AgentModel<T>&, Tape<T>&, const LossInputs<T>&,       \
                                       const LossWeights&);

ACBVAE_INSTANTIATE_LOSSES(float)
ACBVAE_INSTANTIATE_LOSSES(double)

#undef ACBVAE_INSTANTIATE_LOSSES

}  // namespace acbvae
