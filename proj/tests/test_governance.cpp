#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "acbvae/errors.hpp"
#include "acbvae/governance/govern.hpp"
#include "acbvae/governance/traversal.hpp"

using namespace acbvae;

namespace {

const AgentModelF& random_model() {
  static const AgentModelF model = AgentModelF::create(ModelConfig{}, 11);
  return model;
}

AgentModelF zero_decoder_model() {
  AgentModelF m = AgentModelF::create(ModelConfig{}, 12);
  for (const std::string& key : m.decoder.keys()) {
    for (float& v : m.decoder.parameter(key).storage()) v = 0.0f;
  }
  return m;
}

// Larger policy weights so a random model has a sharp policy.
AgentModelF sharpened_model(std::uint64_t seed) {
  AgentModelF m = AgentModelF::create(ModelConfig{}, seed);
  for (const std::string& key : m.policy.keys()) {
    for (float& v : m.policy.parameter(key).storage()) v *= 4.0f;
  }
  return m;
}

double circ_dist(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  return std::min(d, 2.0 * std::numbers::pi - d);
}

std::vector<float> plain_z(const AgentModelF& m, const LatentStats& s, DiscreteAction a) {
  const ActionVector av = action_to_vector(a);
  const auto amap = make_action_map(std::span<const float>(av.data(), m.config.action_dims), m.config.latent_dim);
  std::vector<float> z(m.config.latent_dim);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = s.mu[i] + amap[i];
  return z;
}

}  // namespace

TEST_CASE("linear grid examples") {
  const auto g = linear_grid(-2.0f, 2.0f, 9);
  REQUIRE(g.size() == 9);
  CHECK(g.front() == -2.0f);
  CHECK(g[4] == 0.0f);
  CHECK(g.back() == 2.0f);
  CHECK(g[1] == -1.5f);
  CHECK(linear_grid(1.0f, 3.0f, 1) == std::vector<float>{1.0f});
  CHECK_THROWS_AS(linear_grid(0.0f, 1.0f, 0), UsageError);
}

TEST_CASE("nine point traversal gives nine images and policies") {
  TraversalSpec spec;
  spec.dim = 3;
  const auto points = traverse(random_model(), spec);
  REQUIRE(points.size() == 9);
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(points[i].value == spec.grid[i]);
    REQUIRE(points[i].image.size() == kImagePixels);
    REQUIRE(points[i].policy.size() == kNumActions);
    double sum = 0.0;
    for (float p : points[i].policy) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    for (float p : points[i].image) REQUIRE((p > 0.0f && p < 1.0f));
  }
}

TEST_CASE("the same grid value always decodes the same image") {
  TraversalSpec a;
  a.dim = 2;
  a.grid = {-1.0f, 0.5f};
  TraversalSpec b = a;
  b.grid = {0.5f, 1.0f};
  const auto pa = traverse(random_model(), a);
  const auto pb = traverse(random_model(), b);
  CHECK(pa[1].image == pb[0].image);
  CHECK(pa[1].policy == pb[0].policy);
  CHECK(pa[0].image != pa[1].image);
}

TEST_CASE("traversal rejects bad dims and grids") {
  TraversalSpec spec;
  spec.dim = 0;
  CHECK_THROWS_AS(traverse(random_model(), spec), UsageError);
  spec.dim = 11;
  CHECK_THROWS_AS(traverse(random_model(), spec), UsageError);
  spec.dim = 10;
  CHECK_NOTHROW(traverse(random_model(), spec));
  spec.grid = {0.0f, 0.0f};
  CHECK_THROWS_AS(traverse(random_model(), spec), UsageError);
  spec.grid = {1.0f, 0.0f};
  CHECK_THROWS_AS(traverse(random_model(), spec), UsageError);
  spec.grid = {};
  CHECK_THROWS_AS(traverse(random_model(), spec), UsageError);
  spec.grid = {0.0f};
  spec.base = LatentStats{std::vector<float>(3, 0.0f), std::vector<float>(3, 0.0f)};
  CHECK_THROWS_AS(traverse(random_model(), spec), DimensionError);
}

TEST_CASE("traversing to the base value reproduces the base decode bit-exactly") {
  const AgentModelF& m = random_model();
  const auto obs = reference_observations(EnvConfig{}, 4, 3);
  for (const Observation& o : obs) {
    const LatentStats base = m.encode(o);
    const std::vector<float> expected = m.decode(base.mu);
    const std::vector<float> expected_pi = m.policy_probs(base.h());
    for (std::size_t d = 1; d <= 10; ++d) {
      TraversalSpec spec;
      spec.dim = d;
      spec.grid = {base.mu[d - 1]};
      spec.base = base;
      const auto p = traverse(m, spec);
      REQUIRE(p[0].image == expected);
      REQUIRE(p[0].policy == expected_pi);
    }
  }
}

TEST_CASE("reference action and zeroing of other mapped dims") {
  const AgentModelF& m = random_model();
  LatentStats base{std::vector<float>(10, 0.3f), std::vector<float>(10, -1.0f)};
  TraversalSpec spec;
  spec.dim = 2;
  spec.grid = {0.7f};
  spec.base = base;
  spec.reference_action = DiscreteAction::kUp;
  LatentStats moved = base;
  moved.mu[1] = 0.7f;
  CHECK(traverse(m, spec)[0].image == m.decode(plain_z(m, moved, DiscreteAction::kUp)));

  spec.reference_action = DiscreteAction::kNoop;
  spec.zero_other_mapped = true;
  LatentStats zeroed = moved;
  zeroed.mu[0] = zeroed.mu[2] = zeroed.mu[3] = 0.0f;
  const auto p = traverse(m, spec);
  CHECK(p[0].image == m.decode(zeroed.mu));
  CHECK(p[0].policy == m.policy_probs(zeroed.h()));
}

TEST_CASE("summaries recover rendered heart poses") {
  Rng rng(5);
  int rot_hits = 0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    const ObjectPose pose{rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75), rng.uniform(0.12, 0.22),
                          rng.uniform(0.0, 2.0 * std::numbers::pi)};
    const ImageSummary s = summarize_image(render_heart(pose).pixels);
    REQUIRE(s.heart_found);
    CHECK(std::abs(s.scale - pose.scale) < 0.15 * pose.scale);
    CHECK(std::abs(s.x - pose.x) < pose.scale);
    CHECK(std::abs(s.y - pose.y) < pose.scale);
    CHECK(s.distractor_variance == 0.0);
    if (circ_dist(s.rot, pose.rot) <= std::numbers::pi / 8) ++rot_hits;
  }
  CHECK(rot_hits >= trials * 8 / 10);

  // A 2-px shift moves the centroid by exactly 2 px.
  const ImageSummary a = summarize_image(render_heart(ObjectPose{0.5, 0.5, 0.15, 0.0}).pixels);
  const ImageSummary b = summarize_image(render_heart(ObjectPose{0.5 + 2.0 / 64, 0.5, 0.15, 0.0}).pixels);
  CHECK(b.x - a.x == doctest::Approx(2.0 / 64).epsilon(1e-9));
  CHECK(b.y == doctest::Approx(a.y).epsilon(1e-12));

  const ImageSummary empty = summarize_image(std::vector<float>(kImagePixels, 0.0f));
  CHECK_FALSE(empty.heart_found);
  CHECK(empty.distractor_variance == 0.0);
  CHECK_THROWS_AS(summarize_image(std::vector<float>(10, 0.0f)), DimensionError);
}

TEST_CASE("summaries ignore the square when measuring the heart") {
  FactorState f;
  f.heart = ObjectPose{0.3, 0.3, 0.15, 0.0};
  f.square = ObjectPose{0.75, 0.75, 0.1, 0.0};
  const ImageSummary with = summarize_image(render(f).pixels);
  const ImageSummary alone = summarize_image(render_heart(f.heart).pixels);
  CHECK(with.x == alone.x);
  CHECK(with.y == alone.y);
  CHECK(with.scale == alone.scale);
  CHECK(with.distractor_variance > 0.0);
}

TEST_CASE("effect report on a random model is well formed") {
  const auto bases = reference_observations(EnvConfig{}, 3, 1);
  const EffectReport r = effect_report(random_model(), bases, linear_grid(-2.0f, 2.0f, 5));
  CHECK(r.dims == 10);
  CHECK(r.base_count == 3);
  REQUIRE(r.stds.size() == 10 * kNumSummaries);
  for (double s : r.stds) {
    CHECK(std::isfinite(s));
    CHECK(s >= 0.0);
  }
  CHECK(std::isfinite(r.mean_heart_std(0, 4)));
  CHECK_THROWS_AS(effect_report(random_model(), std::span<const Observation>{}), UsageError);
}

TEST_CASE("a constant decoder has zero effect everywhere") {
  const AgentModelF m = zero_decoder_model();
  const auto bases = reference_observations(EnvConfig{}, 2, 2);
  const EffectReport r = effect_report(m, bases, linear_grid(-2.0f, 2.0f, 5));
  for (double s : r.stds) CHECK(s == 0.0);
  CHECK(r.mean_heart_std(0, 4) == 0.0);
}

TEST_CASE("effect report does not depend on the order of base observations") {
  auto bases = reference_observations(EnvConfig{}, 4, 9);
  const auto grid = linear_grid(-2.0f, 2.0f, 3);
  const EffectReport a = effect_report(random_model(), bases, grid);
  std::reverse(bases.begin(), bases.end());
  std::swap(bases[0], bases[2]);
  const EffectReport b = effect_report(random_model(), bases, grid);
  CHECK(a.stds == b.stds);
}

TEST_CASE("mean heart std averages the four heart columns") {
  EffectReport r;
  r.dims = 2;
  r.stds = {1, 2, 3, 4, 100, 5, 6, 7, 8, 100};
  CHECK(r.mean_heart_std(0, 1) == 2.5);
  CHECK(r.mean_heart_std(1, 2) == 6.5);
  CHECK(r.mean_heart_std(0, 2) == 4.5);
  CHECK(r.mean_heart_std(1, 1) == 0.0);
}

TEST_CASE("predict with no overrides equals the plain forward pass") {
  const AgentModelF& m = random_model();
  for (const Observation& o : reference_observations(EnvConfig{}, 5, 4)) {
    const LatentStats s = m.encode(o);
    const std::vector<float> pi = m.policy_probs(s.h());
    const auto argmax = action_from_index(static_cast<std::size_t>(std::max_element(pi.begin(), pi.end()) - pi.begin()));
    const Prediction p = predict_with_override(m, o, {});
    CHECK(p.latent.mu == s.mu);
    CHECK(p.policy == pi);
    CHECK(p.value == m.value(s.h()));
    CHECK(p.action == argmax);
    CHECK(p.image == m.decode(plain_z(m, s, argmax)));

    LatentOverrides own;
    for (std::size_t d = 1; d <= 10; ++d) own[d] = s.mu[d - 1];
    const Prediction q = predict_with_override(m, o, own);
    CHECK(q.image == p.image);
    CHECK(q.policy == p.policy);
    CHECK(q.value == p.value);

    const Prediction forced = predict_with_override(m, o, {}, DiscreteAction::kLeft);
    CHECK(forced.action == DiscreteAction::kLeft);
    CHECK(forced.image == m.decode(plain_z(m, s, DiscreteAction::kLeft)));
  }
}

TEST_CASE("predict applies overrides and validates dims") {
  const AgentModelF& m = random_model();
  const Observation o = reference_observations(EnvConfig{}, 1, 8)[0];
  const Prediction p = predict_with_override(m, o, {{2, 1.25f}, {7, -2.0f}});
  CHECK(p.latent.mu[1] == 1.25f);
  CHECK(p.latent.mu[6] == -2.0f);
  LatentStats s = m.encode(o);
  s.mu[1] = 1.25f;
  s.mu[6] = -2.0f;
  CHECK(p.policy == m.policy_probs(s.h()));
  CHECK_THROWS_AS(predict_with_override(m, o, {{11, 0.0f}}), UsageError);
  CHECK_THROWS_AS(predict_with_override(m, o, {{0, 0.0f}}), UsageError);
  CHECK_THROWS_AS(predict_with_override(m, o, {{1, std::nanf("")}}), UsageError);
}

TEST_CASE("schedule validation and activation") {
  OverrideSchedule s{{{0, 10, 2, 1.5f}, {10, 20, 2, -1.0f}, {5, 8, 4, 0.5f}}};
  CHECK_NOTHROW(s.validate(10));
  CHECK(s.active(0) == LatentOverrides{{2, 1.5f}});
  CHECK(s.active(6) == LatentOverrides{{2, 1.5f}, {4, 0.5f}});
  CHECK(s.active(10) == LatentOverrides{{2, -1.0f}});
  CHECK(s.active(20).empty());

  CHECK_THROWS_AS((OverrideSchedule{{{0, 5, 11, 1.0f}}}.validate(10)), UsageError);
  CHECK_THROWS_AS((OverrideSchedule{{{0, 5, 0, 1.0f}}}.validate(10)), UsageError);
  CHECK_THROWS_AS((OverrideSchedule{{{5, 5, 1, 1.0f}}}.validate(10)), UsageError);
  CHECK_THROWS_AS((OverrideSchedule{{{-1, 5, 1, 1.0f}}}.validate(10)), UsageError);
  CHECK_THROWS_AS((OverrideSchedule{{{0, 5, 1, 1.0f}, {4, 9, 1, 2.0f}}}.validate(10)), UsageError);
  CHECK_NOTHROW((OverrideSchedule{{{0, 5, 1, 1.0f}, {4, 9, 2, 2.0f}}}.validate(10)));
  CHECK_THROWS_AS(govern_rollout(random_model(), EnvConfig{}, OverrideSchedule{{{0, 5, 11, 1.0f}}}, 1), UsageError);
}

TEST_CASE("schedule json round trip") {
  const OverrideSchedule s{{{0, 64, 2, 2.0f}, {3, 4, 7, -0.25f}}};
  CHECK(schedule_from_json(schedule_to_json(s)) == s);
  CHECK(schedule_from_json(nlohmann::json{{"overrides", nlohmann::json::array()}}).entries.empty());
  CHECK_THROWS_AS(schedule_from_json(nlohmann::json::parse(R"({"overrides":[{"begin":0,"end":1,"dim":1,"value":0,"x":1}]})")),
                  UsageError);
  CHECK_THROWS_AS(schedule_from_json(nlohmann::json::parse(R"({"overrides":[{"begin":0}]})")), UsageError);
  CHECK_THROWS_AS(schedule_from_json(nlohmann::json::object()), UsageError);
}

TEST_CASE("empty schedule matches an ungoverned rollout") {
  const AgentModelF m = sharpened_model(21);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const GovernTrace g = govern_rollout(m, EnvConfig{}, OverrideSchedule{}, seed);
    GovernedSession session(m, EnvConfig{});
    const Observation first = session.reset(seed);
    CHECK(g.initial_frame == first.pixels);
    std::vector<TraceStep> plain;
    while (!session.done()) plain.push_back(session.step({}));
    REQUIRE(plain.size() == g.steps.size());
    CHECK(g.steps.size() == 64);
    for (std::size_t i = 0; i < plain.size(); ++i) {
      REQUIRE(plain[i].action == g.steps[i].action);
      REQUIRE(plain[i].frame == g.steps[i].frame);
      REQUIRE(plain[i].policy == g.steps[i].policy);
      REQUIRE(plain[i].reward == g.steps[i].reward);
      REQUIRE(g.steps[i].applied_overrides.empty());
      REQUIRE(g.steps[i].step_index == static_cast<int>(i));
    }
    CHECK(g.steps.back().done);
  }
}

TEST_CASE("governed rollouts are deterministic and record their overrides") {
  const AgentModelF m = sharpened_model(22);
  const OverrideSchedule s{{{0, 32, 2, 2.0f}, {40, 50, 5, -2.0f}}};
  const GovernTrace a = govern_rollout(m, EnvConfig{}, s, 77);
  const GovernTrace b = govern_rollout(m, EnvConfig{}, s, 77);
  CHECK(serialize_trace(a) == serialize_trace(b));
  CHECK(a.net_dx() == b.net_dx());
  CHECK(a.steps[0].applied_overrides == LatentOverrides{{2, 2.0f}});
  CHECK(a.steps[35].applied_overrides.empty());
  CHECK(a.steps[45].applied_overrides == LatentOverrides{{5, -2.0f}});
  CHECK(a.net_dx() == doctest::Approx(a.steps.back().heart.x - a.initial_heart.x));
  CHECK(serialize_trace(govern_rollout(m, EnvConfig{}, s, 78)) != serialize_trace(a));
}

TEST_CASE("traces replay bit-exactly from their serialized form") {
  const AgentModelF m = sharpened_model(23);
  const OverrideSchedule s{{{10, 30, 1, -2.0f}}};
  const GovernTrace t = govern_rollout(m, EnvConfig{}, s, 5);
  const std::string text = serialize_trace(t);
  const GovernTrace parsed = parse_trace(text);
  CHECK(serialize_trace(parsed) == text);
  CHECK(parsed.seed == 5);
  CHECK(parsed.schedule == s);
  REQUIRE(parsed.steps.size() == t.steps.size());
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    REQUIRE(parsed.steps[i].frame == t.steps[i].frame);
    REQUIRE(parsed.steps[i].policy == t.steps[i].policy);
    REQUIRE(parsed.steps[i].heart == t.steps[i].heart);
    REQUIRE(parsed.steps[i].action == t.steps[i].action);
  }
  CHECK(serialize_trace(govern_rollout(m, EnvConfig{}, parsed.schedule, parsed.seed)) == text);
  CHECK_THROWS_AS(parse_trace("{}"), IntegrityError);
  CHECK_THROWS_AS(parse_trace(text.substr(0, text.size() / 3)), IntegrityError);
}

TEST_CASE("sessions enforce reset and episode end") {
  const AgentModelF& m = random_model();
  EnvConfig cfg;
  cfg.horizon = 3;
  GovernedSession s(m, cfg);
  CHECK_THROWS_AS(s.step({}), ProtocolError);
  s.reset(1);
  CHECK_THROWS_AS(s.step({{12, 0.0f}}), UsageError);
  for (int i = 0; i < 3; ++i) s.step({});
  CHECK(s.done());
  CHECK_THROWS_AS(s.step({}), ProtocolError);
  s.reset(1);
  CHECK_FALSE(s.done());
}

TEST_CASE("a forced action does not shift later policy draws") {
  const AgentModelF m = sharpened_model(24);
  GovernedSession c(m, EnvConfig{});
  GovernedSession d(m, EnvConfig{});
  c.reset(9);
  d.reset(9);
  const TraceStep first = c.step({});
  CHECK(d.step({}, first.action).action == first.action);
  for (int i = 0; i < 20; ++i) REQUIRE(c.step({}).action == d.step({}).action);
}
