#include "acbvae/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace acbvae {

namespace {

struct HeadOutputs {
  std::vector<LatentStats> latents;
  std::vector<std::vector<float>> probs;
  std::vector<float> values;
};

// One batched, untraced pass of encoder + heads over the current observations.
HeadOutputs evaluate_heads(const AgentModelF& model, const std::vector<const Observation*>& obs,
                           bool with_heads) {
  const std::size_t rows = obs.size();
  TensorF input({rows, model.config.image_pixels});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(obs[r]->pixels.begin(), obs[r]->pixels.end(), input.row(r).begin());
  }
  Tape<float> tape(GradMode::kDisabled);
  auto lat = model.encode(tape.constant(std::move(input)));
  HeadOutputs out;
  out.latents.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto mu = lat.mu.value().row(r);
    auto lv = lat.logvar.value().row(r);
    out.latents[r].mu.assign(mu.begin(), mu.end());
    out.latents[r].logvar.assign(lv.begin(), lv.end());
  }
  if (with_heads) {
    const TensorF& probs = ag::softmax(model.policy_logits(lat.h)).value();
    const TensorF& values = model.value(lat.h).value();
    for (std::size_t r = 0; r < rows; ++r) {
      auto p = probs.row(r);
      out.probs.emplace_back(p.begin(), p.end());
      out.values.push_back(values[r]);
    }
  }
  return out;
}

std::vector<float> expected_action_map(std::span<const float> probs, std::size_t n) {
  std::vector<float> out(n, 0.0f);
  for (std::size_t a = 0; a < probs.size(); ++a) {
    const ActionVector v = action_to_vector(action_from_index(a));
    for (std::size_t d = 0; d < kActionDims && d < n; ++d) out[d] += probs[a] * v[d];
  }
  return out;
}

std::string describe(const UpdateReport& r) {
  std::ostringstream os;
  os << "step " << r.step << " update " << r.update << ": policy_loss=" << r.policy_loss
     << " ac_loss=" << r.ac_loss << " critic_loss=" << r.critic_loss << " recon=" << r.mean_recon
     << " kl=" << r.mean_kl;
  return os.str();
}

}  // namespace

std::string action_map_mode_name(ActionMapMode mode) {
  switch (mode) {
    case ActionMapMode::kSampled: return "sampled";
    case ActionMapMode::kExpected: return "expected";
    case ActionMapMode::kNone: return "none";
  }
  return "sampled";
}

ActionMapMode parse_action_map_mode(const std::string& name) {
  if (name == "sampled") return ActionMapMode::kSampled;
  if (name == "expected") return ActionMapMode::kExpected;
  if (name == "none") return ActionMapMode::kNone;
  throw UsageError("unknown action_map mode '" + name + "' (expected sampled, expected or none)");
}

void TrainConfig::validate() const {
  model.validate();
  if (model.image_pixels != kImagePixels) {
    throw UsageError("training requires image_pixels = " + std::to_string(kImagePixels));
  }
  if (model.num_actions != kNumActions) throw UsageError("training requires 9 actions");
  if (model.action_dims > kActionDims) throw UsageError("action_dims cannot exceed 4");
  if (num_envs <= 0 || hyper.rollout_steps <= 0) throw UsageError("num_envs and rollout_steps must be positive");
  if (total_steps < 0 || total_steps % steps_per_update() != 0) {
    throw UsageError("total_steps (" + std::to_string(total_steps) + ") must be a non-negative multiple of " +
                     "num_envs * rollout_steps (" + std::to_string(steps_per_update()) + ")");
  }
  if (hyper.beta < 0.0 || hyper.alpha < 0.0) throw UsageError("beta and alpha must be non-negative");
  if (!(hyper.gamma > 0.0 && hyper.gamma <= 1.0)) throw UsageError("gamma must lie in (0, 1]");
  if (!(hyper.lr_vae > 0.0 && hyper.lr_policy > 0.0)) throw UsageError("learning rates must be positive");
  if (checkpoint_every < 0) throw UsageError("checkpoint_every must be non-negative");
}

bool UpdateReport::all_finite() const {
  for (double v : {policy_loss, ac_loss, critic_loss, total_loss, mean_return, mean_kl, mean_recon,
                   mean_episode_return}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

EnvPool EnvPool::create(const TrainConfig& config) {
  EnvPool pool;
  for (int e = 0; e < config.num_envs; ++e) {
    pool.envs.emplace_back(config.env);
    pool.episode_seeds.emplace_back(mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(e)));
    pool.envs.back().reset(pool.episode_seeds.back().next());
    pool.running_return.push_back(0.0f);
  }
  return pool;
}

RolloutBatch collect_rollout(EnvPool& pool, const AgentModelF& model, const TrainConfig& config, Rng& rng) {
  const std::size_t E = pool.envs.size();
  const std::size_t k = static_cast<std::size_t>(config.hyper.rollout_steps);
  const std::size_t n = model.config.latent_dim;
  const std::size_t m = model.config.action_dims;
  const bool with_heads = !config.vae_only;

  RolloutBatch batch;
  batch.num_envs = E;
  batch.steps = k;
  const std::size_t total = E * k;
  batch.transitions.resize(total);
  batch.latents.resize(total);
  batch.noise.resize(total);
  batch.z.resize(total);
  batch.action_maps.resize(total);
  batch.log_probs.assign(total, 0.0f);
  batch.values.assign(total, 0.0f);
  batch.bootstrap.assign(E, 0.0f);

  std::vector<const Observation*> current(E);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t e = 0; e < E; ++e) current[e] = &pool.envs[e].observation();
    HeadOutputs heads = evaluate_heads(model, current, with_heads);
    for (std::size_t e = 0; e < E; ++e) {
      const std::size_t idx = e * k + t;
      std::size_t action_index;
      if (with_heads) {
        action_index = rng.categorical(heads.probs[e]);
        batch.log_probs[idx] = std::log(std::max(heads.probs[e][action_index], 1e-30f));
        batch.values[idx] = heads.values[e];
      } else {
        action_index = rng.below(static_cast<std::uint32_t>(kNumActions));
        batch.log_probs[idx] = -std::log(static_cast<float>(kNumActions));
      }
      std::vector<float> eps(n);
      for (float& v : eps) v = static_cast<float>(rng.normal());

      SpritesEnv& env = pool.envs[e];
      Transition tr = env.step(action_from_index(action_index));
      pool.running_return[e] += tr.reward;
      if (tr.done) {
        batch.finished_episode_returns.push_back(pool.running_return[e]);
        pool.running_return[e] = 0.0f;
        env.reset(pool.episode_seeds[e].next());
      }

      const LatentStats& stats = heads.latents[e];
      std::vector<float> z(n);
      for (std::size_t i = 0; i < n; ++i) z[i] = stats.mu[i] + std::exp(0.5f * stats.logvar[i]) * eps[i];
      std::vector<float> amap(n, 0.0f);
      switch (config.hyper.action_map) {
        case ActionMapMode::kSampled:
          amap = make_action_map(std::span<const float>(tr.action_vector.data(), m), n);
          break;
        case ActionMapMode::kExpected: {
          const std::vector<float> uniform(kNumActions, 1.0f / kNumActions);
          amap = expected_action_map(with_heads ? heads.probs[e] : uniform, n);
          std::fill(amap.begin() + static_cast<std::ptrdiff_t>(m), amap.end(), 0.0f);
          break;
        }
        case ActionMapMode::kNone: break;
      }
      batch.transitions[idx] = std::move(tr);
      batch.latents[idx] = stats;
      batch.noise[idx] = std::move(eps);
      batch.z[idx] = std::move(z);
      batch.action_maps[idx] = std::move(amap);
    }
  }

  if (with_heads) {
    for (std::size_t e = 0; e < E; ++e) current[e] = &pool.envs[e].observation();
    HeadOutputs last = evaluate_heads(model, current, true);
    for (std::size_t e = 0; e < E; ++e) {
      batch.bootstrap[e] = batch.transitions[e * k + k - 1].done ? 0.0f : last.values[e];
    }
  }

  batch.returns.resize(total);
  batch.advantages.resize(total);
  for (std::size_t e = 0; e < E; ++e) {
    std::vector<float> rewards(k), values(k);
    auto dones = std::make_unique<bool[]>(k);
    for (std::size_t t = 0; t < k; ++t) {
      rewards[t] = batch.transitions[e * k + t].reward;
      values[t] = batch.values[e * k + t];
      dones[t] = batch.transitions[e * k + t].done;
    }
    const auto ra = n_step_returns_and_advantages(rewards, values, batch.bootstrap[e],
                                                  static_cast<float>(config.hyper.gamma),
                                                  std::span<const bool>(dones.get(), k));
    for (std::size_t t = 0; t < k; ++t) {
      batch.returns[e * k + t] = ra.returns[t];
      batch.advantages[e * k + t] = ra.advantages[t];
    }
  }
  return batch;
}

LossInputs<float> make_loss_inputs(const RolloutBatch& batch) {
  const std::size_t B = batch.size();
  if (B == 0) throw UsageError("empty rollout batch");
  const std::size_t P = batch.transitions[0].obs.pixels.size();
  const std::size_t n = batch.noise[0].size();
  LossInputs<float> in{TensorF({B, P}), TensorF({B, P}), TensorF({B, n}), TensorF({B, n}), {},
                       TensorF({B, 1}), TensorF({B, 1})};
  in.actions.resize(B);
  for (std::size_t i = 0; i < B; ++i) {
    const Transition& tr = batch.transitions[i];
    std::copy(tr.obs.pixels.begin(), tr.obs.pixels.end(), in.obs.row(i).begin());
    std::copy(tr.next_obs.pixels.begin(), tr.next_obs.pixels.end(), in.next_obs.row(i).begin());
    std::copy(batch.action_maps[i].begin(), batch.action_maps[i].end(), in.action_map.row(i).begin());
    std::copy(batch.noise[i].begin(), batch.noise[i].end(), in.noise.row(i).begin());
    in.actions[i] = static_cast<std::size_t>(tr.action);
    in.advantages[i] = batch.advantages[i];
    in.returns[i] = batch.returns[i];
  }
  return in;
}

LossWeights make_loss_weights(const TrainConfig& config) {
  LossWeights w;
  w.beta = config.hyper.beta;
  w.alpha = config.hyper.alpha;
  w.entropy_coef = config.hyper.entropy_coef;
  w.policy_term = !config.vae_only;
  return w;
}

UpdateReport train_update(const RolloutBatch& batch, AgentModelF& model, const TrainConfig& config) {
  const LossInputs<float> in = make_loss_inputs(batch);
  const LossWeights weights = make_loss_weights(config);
  Tape<float> tape;
  LossTerms<float> terms = compute_losses(model, tape, in, weights);

  UpdateReport report;
  report.ac_loss = terms.ac.value()[0];
  report.mean_recon = terms.recon.value()[0];
  report.mean_kl = terms.kl.value()[0];
  report.total_loss = terms.total.value()[0];
  if (weights.policy_term) {
    report.policy_loss = terms.policy.value()[0];
    report.critic_loss = terms.critic.value()[0];
  }
  double ret = 0.0;
  for (float r : batch.returns) ret += r;
  report.mean_return = ret / static_cast<double>(batch.returns.size());
  report.episodes_finished = static_cast<int>(batch.finished_episode_returns.size());
  if (!batch.finished_episode_returns.empty()) {
    double s = 0.0;
    for (float r : batch.finished_episode_returns) s += r;
    report.mean_episode_return = s / static_cast<double>(batch.finished_episode_returns.size());
  }
  if (!report.all_finite()) throw TrainingError("non-finite loss, update aborted: " + describe(report));

  const Hyperparams& h = config.hyper;
  const AdamOptions vae_opt{h.lr_vae, h.adam_beta1, h.adam_beta2, h.adam_eps};
  const AdamOptions head_opt{h.lr_policy, h.adam_beta1, h.adam_beta2, h.adam_eps};

  const Gradients<float> grads = tape.backward(terms.total);
  Gradients<float> critic_grads;
  if (weights.policy_term) critic_grads = tape.backward(terms.critic);

  // Validate all gradients before touching any parameter.
  for (const Gradients<float>* set : std::initializer_list<const Gradients<float>*>{&grads, &critic_grads}) {
    for (const auto& [key, g] : *set) {
      if (!g.all_finite()) throw TrainingError("non-finite gradient for '" + key + "': " + describe(report));
    }
  }
  adam_step(model.encoder, grads, vae_opt);
  adam_step(model.decoder, grads, vae_opt);
  if (weights.policy_term) {
    adam_step(model.policy, grads, head_opt);
    adam_step(model.value_head, critic_grads, head_opt);
  }
  return report;
}

AgentModelF initial_model(const TrainConfig& config) {
  return AgentModelF::create(config.model, mix_seed(config.seed, 1));
}

TrainResult train(const TrainConfig& config, const TrainCallbacks& callbacks) {
  config.validate();
  TrainResult result{initial_model(config), 0, {}};
  EnvPool pool = EnvPool::create(config);
  Rng rng(mix_seed(config.seed, 2));
  const std::int64_t updates = config.total_steps / config.steps_per_update();
  for (std::int64_t u = 1; u <= updates; ++u) {
    RolloutBatch batch = collect_rollout(pool, result.model, config, rng);
    result.steps += static_cast<std::int64_t>(batch.size());
    UpdateReport report = train_update(batch, result.model, config);
    report.step = result.steps;
    report.update = u;
    result.reports.push_back(report);
    if (callbacks.on_report) callbacks.on_report(report);
    if (callbacks.on_checkpoint && config.checkpoint_every > 0 && u % config.checkpoint_every == 0 &&
        u != updates) {
      callbacks.on_checkpoint(result.model, result.steps);
    }
  }
  return result;
}

std::vector<double> evaluate_returns(const AgentModelF& model, const EnvConfig& env_config, int episodes,
                                     std::uint64_t seed, EvalPolicy policy) {
  std::vector<double> out;
  Rng seeds(mix_seed(seed, 77));
  Rng act_rng(mix_seed(seed, 78));
  SpritesEnv env(env_config);
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset(seeds.next());
    double total = 0.0;
    while (!env.done()) {
      std::size_t a;
      if (policy == EvalPolicy::kUniformRandom) {
        a = act_rng.below(static_cast<std::uint32_t>(kNumActions));
      } else {
        const std::vector<float> probs = model.policy_probs(model.encode(env.observation()).h());
        a = policy == EvalPolicy::kGreedy
                ? static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin())
                : act_rng.categorical(probs);
      }
      total += env.step(action_from_index(a)).reward;
    }
    out.push_back(total);
  }
  return out;
}

}  // namespace acbvae
