#include <doctest.h>

#include <cmath>
#include <cstring>

#include "acbvae/errors.hpp"
#include "acbvae/train/trainer.hpp"

using namespace acbvae;

namespace {

TrainConfig small_config(int envs, int k, std::int64_t steps) {
  TrainConfig c;
  c.num_envs = envs;
  c.hyper.rollout_steps = k;
  c.total_steps = steps;
  c.seed = 17;
  return c;
}

bool same_bytes(const ParamSet<float>& a, const ParamSet<float>& b) {
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (std::memcmp(x.weight.data().data(), y.weight.data().data(), x.weight.size() * sizeof(float)) != 0) return false;
    if (std::memcmp(x.bias.data().data(), y.bias.data().data(), x.bias.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

bool reports_equal(const UpdateReport& a, const UpdateReport& b) {
  return a.step == b.step && a.update == b.update && a.policy_loss == b.policy_loss && a.ac_loss == b.ac_loss &&
         a.critic_loss == b.critic_loss && a.total_loss == b.total_loss && a.mean_return == b.mean_return &&
         a.mean_kl == b.mean_kl && a.mean_recon == b.mean_recon && a.episodes_finished == b.episodes_finished &&
         a.mean_episode_return == b.mean_episode_return;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c = small_config(8, 8, 100);
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.total_steps = 128;
  CHECK_NOTHROW(c.validate());
  c.hyper.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.hyper.gamma = 0.99;
  c.model.action_dims = 10;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK(parse_action_map_mode("expected") == ActionMapMode::kExpected);
  CHECK(action_map_mode_name(ActionMapMode::kNone) == "none");
  CHECK_THROWS_AS(parse_action_map_mode("random"), UsageError);
}

TEST_CASE("k = 1 and E = 1 collects exactly one transition") {
  const TrainConfig c = small_config(1, 1, 1);
  EnvPool pool = EnvPool::create(c);
  const AgentModelF model = initial_model(c);
  Rng rng(0);
  const RolloutBatch b = collect_rollout(pool, model, c, rng);
  CHECK(b.size() == 1);
  CHECK(b.returns.size() == 1);
  CHECK(b.advantages.size() == 1);
  CHECK(b.z[0].size() == 10);
  const float expected = b.transitions[0].reward + 0.99f * b.bootstrap[0];
  CHECK(b.returns[0] == expected);
  CHECK(b.advantages[0] == b.returns[0] - b.values[0]);
}

TEST_CASE("rollouts are deterministic for a seed") {
  const TrainConfig c = small_config(3, 4, 12);
  const AgentModelF model = initial_model(c);
  EnvPool p1 = EnvPool::create(c), p2 = EnvPool::create(c);
  Rng r1(5), r2(5);
  const RolloutBatch a = collect_rollout(p1, model, c, r1);
  const RolloutBatch b = collect_rollout(p2, model, c, r2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.transitions[i].next_obs == b.transitions[i].next_obs);
    CHECK(a.transitions[i].action == b.transitions[i].action);
    CHECK(a.z[i] == b.z[i]);
    CHECK(a.log_probs[i] == b.log_probs[i]);
    CHECK(a.returns[i] == b.returns[i]);
  }
}

TEST_CASE("a terminal inside the rollout restarts the return recursion from zero") {
  TrainConfig c = small_config(1, 8, 8);
  c.env.horizon = 3;
  EnvPool pool = EnvPool::create(c);
  const AgentModelF model = initial_model(c);
  Rng rng(1);
  const RolloutBatch b = collect_rollout(pool, model, c, rng);
  CHECK(b.transitions[2].done);
  CHECK(b.transitions[5].done);
  CHECK_FALSE(b.transitions[7].done);
  CHECK(b.returns[2] == b.transitions[2].reward);
  CHECK(b.returns[5] == b.transitions[5].reward);
  const float g = 0.99f;
  CHECK(b.returns[1] == b.transitions[1].reward + g * b.returns[2]);
  CHECK(b.returns[7] == b.transitions[7].reward + g * b.bootstrap[0]);
  CHECK(b.finished_episode_returns.size() == 2);
}

TEST_CASE("a bootstrap after a terminal final step is zero") {
  TrainConfig c = small_config(1, 4, 4);
  c.env.horizon = 4;
  EnvPool pool = EnvPool::create(c);
  const AgentModelF model = initial_model(c);
  Rng rng(1);
  const RolloutBatch b = collect_rollout(pool, model, c, rng);
  CHECK(b.transitions[3].done);
  CHECK(b.bootstrap[0] == 0.0f);
  CHECK(b.returns[3] == b.transitions[3].reward);
}

TEST_CASE("action maps follow the configured mode") {
  for (ActionMapMode mode : {ActionMapMode::kSampled, ActionMapMode::kExpected, ActionMapMode::kNone}) {
    TrainConfig c = small_config(2, 4, 8);
    c.hyper.action_map = mode;
    EnvPool pool = EnvPool::create(c);
    const AgentModelF model = initial_model(c);
    Rng rng(2);
    const RolloutBatch b = collect_rollout(pool, model, c, rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto& amap = b.action_maps[i];
      for (std::size_t d = 4; d < 10; ++d) CHECK(amap[d] == 0.0f);
      if (mode == ActionMapMode::kSampled) {
        const ActionVector v = b.transitions[i].action_vector;
        for (std::size_t d = 0; d < 4; ++d) CHECK(amap[d] == v[d]);
      } else if (mode == ActionMapMode::kNone) {
        for (float x : amap) CHECK(x == 0.0f);
      } else {
        for (std::size_t d = 0; d < 4; ++d) CHECK(std::abs(amap[d]) <= 1.0f);
      }
    }
  }
}

TEST_CASE("vae-only mode samples uniform actions and leaves the heads untouched") {
  TrainConfig c = small_config(2, 4, 64);
  c.vae_only = true;
  const AgentModelF init = initial_model(c);
  const TrainResult r = train(c);
  CHECK(same_bytes(r.model.policy, init.policy));
  CHECK(same_bytes(r.model.value_head, init.value_head));
  CHECK_FALSE(same_bytes(r.model.encoder, init.encoder));
  CHECK_FALSE(same_bytes(r.model.decoder, init.decoder));
  for (const UpdateReport& rep : r.reports) CHECK(rep.policy_loss == 0.0);
}

TEST_CASE("zero total steps returns the initial model") {
  const TrainConfig c = small_config(8, 8, 0);
  const TrainResult r = train(c);
  CHECK(r.steps == 0);
  CHECK(r.reports.empty());
  CHECK(r.model == initial_model(c));
}

TEST_CASE("the critic step never changes encoder, decoder or policy bytes") {
  const TrainConfig c = small_config(2, 4, 8);
  AgentModelF model = initial_model(c);
  EnvPool pool = EnvPool::create(c);
  Rng rng(4);
  const RolloutBatch b = collect_rollout(pool, model, c, rng);

  // Critic gradients alone: with alpha = 0, no entropy bonus and zero
  // advantages the total loss is flat, so only the value head may move.
  TrainConfig critic_only = c;
  critic_only.hyper.alpha = 0.0;
  critic_only.hyper.entropy_coef = 0.0;
  RolloutBatch flat = b;
  std::fill(flat.advantages.begin(), flat.advantages.end(), 0.0f);
  const AgentModelF before = model;
  train_update(flat, model, critic_only);
  CHECK(same_bytes(model.encoder, before.encoder));
  CHECK(same_bytes(model.decoder, before.decoder));
  CHECK(same_bytes(model.policy, before.policy));
  CHECK_FALSE(same_bytes(model.value_head, before.value_head));
}

TEST_CASE("alpha 0 keeps the decoder unchanged") {
  TrainConfig c = small_config(2, 4, 8);
  c.hyper.alpha = 0.0;
  AgentModelF model = initial_model(c);
  EnvPool pool = EnvPool::create(c);
  Rng rng(4);
  const RolloutBatch b = collect_rollout(pool, model, c, rng);
  const AgentModelF before = model;
  train_update(b, model, c);
  CHECK(same_bytes(model.decoder, before.decoder));
  CHECK_FALSE(same_bytes(model.policy, before.policy));
}

TEST_CASE("report fields equal an independent recomputation") {
  const TrainConfig c = small_config(2, 4, 8);
  AgentModelF model = initial_model(c);
  EnvPool pool = EnvPool::create(c);
  Rng rng(6);
  const RolloutBatch b = collect_rollout(pool, model, c, rng);
  const AgentModelF snapshot = model;
  const UpdateReport rep = train_update(b, model, c);

  const AgentModel<double> dm = snapshot.cast<double>();
  const LossInputs<float> inf = make_loss_inputs(b);
  LossInputs<double> in{inf.obs.cast<double>(), inf.next_obs.cast<double>(), inf.action_map.cast<double>(),
                        inf.noise.cast<double>(),   inf.actions,
                        inf.advantages.cast<double>(), inf.returns.cast<double>()};
  Tape<double> tape(GradMode::kDisabled);
  const auto t = compute_losses(dm, tape, in, make_loss_weights(c));
  CHECK(rep.mean_recon == doctest::Approx(t.recon.value()[0]).epsilon(1e-4));
  CHECK(rep.mean_kl == doctest::Approx(t.kl.value()[0]).epsilon(1e-3));
  CHECK(rep.ac_loss == doctest::Approx(t.ac.value()[0]).epsilon(1e-4));
  CHECK(rep.policy_loss == doctest::Approx(t.policy.value()[0]).epsilon(1e-4));
  CHECK(rep.critic_loss == doctest::Approx(t.critic.value()[0]).epsilon(1e-4));
  CHECK(rep.total_loss == doctest::Approx(t.total.value()[0]).epsilon(1e-4));
  double ret = 0.0;
  for (float r : b.returns) ret += r;
  CHECK(rep.mean_return == doctest::Approx(ret / 8.0));
}

TEST_CASE("a non-finite loss aborts without touching the model") {
  const TrainConfig c = small_config(1, 2, 2);
  AgentModelF model = initial_model(c);
  EnvPool pool = EnvPool::create(c);
  Rng rng(3);
  RolloutBatch b = collect_rollout(pool, model, c, rng);
  b.advantages[0] = std::nanf("");
  const AgentModelF before = model;
  CHECK_THROWS_AS(train_update(b, model, c), TrainingError);
  CHECK(model == before);
}

TEST_CASE("repeated updates on one frozen batch do not increase the loss at lr 1e-4") {
  TrainConfig c = small_config(2, 4, 8);
  c.vae_only = true;
  c.hyper.beta = 1.0;
  c.hyper.lr_vae = 1e-4;
  AgentModelF model = initial_model(c);
  EnvPool pool = EnvPool::create(c);
  Rng rng(8);
  const RolloutBatch b = collect_rollout(pool, model, c, rng);
  double prev = train_update(b, model, c).ac_loss;
  for (int i = 0; i < 10; ++i) {
    const double cur = train_update(b, model, c).ac_loss;
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("one-batch overfit drops the beta 1 loss below 60% in 500 steps") {
  TrainConfig c = small_config(2, 4, 8);
  c.vae_only = true;
  c.hyper.beta = 1.0;
  AgentModelF model = initial_model(c);
  EnvPool pool = EnvPool::create(c);
  Rng rng(9);
  const RolloutBatch b = collect_rollout(pool, model, c, rng);
  const double first = train_update(b, model, c).ac_loss;
  double last = first;
  for (int i = 1; i < 500; ++i) last = train_update(b, model, c).ac_loss;
  MESSAGE("overfit loss " << first << " -> " << last);
  CHECK(last < 0.6 * first);
}

TEST_CASE("training is bit-reproducible for a seed") {
  const TrainConfig c = small_config(8, 8, 640);
  const TrainResult a = train(c);
  const TrainResult b = train(c);
  CHECK(a.model == b.model);
  REQUIRE(a.reports.size() == b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) CHECK(reports_equal(a.reports[i], b.reports[i]));
  TrainConfig other = c;
  other.seed = 18;
  CHECK_FALSE(train(other).model == a.model);
}

TEST_CASE("periodic checkpoints fire on cadence except at the final update") {
  TrainConfig c = small_config(2, 4, 40);
  c.checkpoint_every = 2;
  std::vector<std::int64_t> steps;
  TrainCallbacks cb;
  cb.on_checkpoint = [&](const AgentModelF&, std::int64_t s) { steps.push_back(s); };
  int reports = 0;
  cb.on_report = [&](const UpdateReport& r) {
    ++reports;
    CHECK(r.all_finite());
  };
  train(c, cb);
  CHECK(reports == 5);
  CHECK(steps == std::vector<std::int64_t>{16, 32});
}

TEST_CASE("evaluation returns one undiscounted return per episode") {
  const TrainConfig c = small_config(1, 1, 0);
  const AgentModelF model = initial_model(c);
  const auto a = evaluate_returns(model, c.env, 3, 1, EvalPolicy::kUniformRandom);
  const auto b = evaluate_returns(model, c.env, 3, 1, EvalPolicy::kUniformRandom);
  CHECK(a.size() == 3);
  CHECK(a == b);
  for (double r : a) {
    CHECK(r <= 0.0);
    CHECK(r >= -2.0 * 64);
  }
  CHECK(evaluate_returns(model, c.env, 2, 1, EvalPolicy::kGreedy).size() == 2);
}
