#include "acbvae/governance/govern.hpp"

#include <algorithm>

#include <boost/beast/core/detail/base64.hpp>

#include "acbvae/errors.hpp"
#include "acbvae/io/pgm.hpp"

namespace acbvae {

using nlohmann::json;
namespace base64 = boost::beast::detail::base64;

namespace {

constexpr std::uint64_t kPolicyStream = 0x706f6c;

json pose_to_json(const ObjectPose& p) { return {{"x", p.x}, {"y", p.y}, {"scale", p.scale}, {"rot", p.rot}}; }

ObjectPose pose_from_json(const json& j) {
  return ObjectPose{j.at("x").get<double>(), j.at("y").get<double>(), j.at("scale").get<double>(),
                    j.at("rot").get<double>()};
}

json overrides_to_json(const LatentOverrides& o) {
  json j = json::object();
  for (const auto& [dim, value] : o) j[std::to_string(dim)] = value;
  return j;
}

LatentOverrides overrides_from_json(const json& j) {
  LatentOverrides o;
  for (auto it = j.begin(); it != j.end(); ++it) o[std::stoul(it.key())] = it.value().get<float>();
  return o;
}

}  // namespace

void OverrideSchedule::validate(std::size_t latent_dim) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const OverrideEntry& e = entries[i];
    if (e.dim < 1 || e.dim > latent_dim) {
      throw UsageError("schedule entry " + std::to_string(i) + ": dim " + std::to_string(e.dim) +
                       " is out of range [1, " + std::to_string(latent_dim) + "]");
    }
    if (e.begin < 0 || e.end <= e.begin) {
      throw UsageError("schedule entry " + std::to_string(i) + ": step range must satisfy 0 <= begin < end");
    }
    if (!std::isfinite(e.value)) throw UsageError("schedule entry " + std::to_string(i) + ": value is not finite");
    for (std::size_t k = 0; k < i; ++k) {
      const OverrideEntry& o = entries[k];
      if (o.dim == e.dim && o.begin < e.end && e.begin < o.end) {
        throw UsageError("schedule entries " + std::to_string(k) + " and " + std::to_string(i) +
                         " overlap on dim " + std::to_string(e.dim));
      }
    }
  }
}

LatentOverrides OverrideSchedule::active(int step_index) const {
  LatentOverrides out;
  for (const OverrideEntry& e : entries) {
    if (e.begin <= step_index && step_index < e.end) out[e.dim] = e.value;
  }
  return out;
}

json schedule_to_json(const OverrideSchedule& schedule) {
  json arr = json::array();
  for (const OverrideEntry& e : schedule.entries) {
    arr.push_back({{"begin", e.begin}, {"end", e.end}, {"dim", e.dim}, {"value", e.value}});
  }
  return {{"overrides", arr}};
}

OverrideSchedule schedule_from_json(const json& doc) {
  OverrideSchedule s;
  try {
    for (const json& e : doc.at("overrides")) {
      for (auto it = e.begin(); it != e.end(); ++it) {
        if (it.key() != "begin" && it.key() != "end" && it.key() != "dim" && it.key() != "value") {
          throw UsageError("schedule: unknown key '" + it.key() + "'");
        }
      }
      s.entries.push_back(OverrideEntry{e.at("begin").get<int>(), e.at("end").get<int>(),
                                        e.at("dim").get<std::size_t>(), e.at("value").get<float>()});
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("schedule is malformed: ") + e.what());
  }
  return s;
}

double GovernTrace::net_dx() const { return steps.empty() ? 0.0 : steps.back().heart.x - initial_heart.x; }

Observation GovernedSession::reset(std::uint64_t seed) {
  policy_rng_ = Rng(mix_seed(seed, kPolicyStream));
  return env_.reset(seed);
}

TraceStep GovernedSession::step(const LatentOverrides& overrides, std::optional<DiscreteAction> action) {
  if (!env_.active()) {
    throw ProtocolError(env_.done() ? "episode is over; reset first" : "session has not been reset");
  }
  validate_overrides(overrides, model_->config.latent_dim);
  LatentStats latent = model_->encode(env_.observation());
  for (const auto& [dim, value] : overrides) latent.mu[dim - 1] = value;
  TraceStep out;
  out.step_index = env_.step_index();
  out.policy = model_->policy_probs(latent.h());
  // The stream advances every step so forced actions do not shift later draws.
  const DiscreteAction sampled = action_from_index(policy_rng_.categorical(out.policy));
  out.action = action.value_or(sampled);
  out.applied_overrides = overrides;
  const Transition t = env_.step(out.action);
  out.reward = t.reward;
  out.done = t.done;
  out.heart = t.next_factors.heart;
  out.frame = t.next_obs.pixels;
  return out;
}

GovernTrace govern_rollout(const AgentModelF& model, const EnvConfig& env_config, const OverrideSchedule& schedule,
                           std::uint64_t seed) {
  schedule.validate(model.config.latent_dim);
  GovernTrace trace;
  trace.seed = seed;
  trace.schedule = schedule;
  GovernedSession session(model, env_config);
  trace.initial_frame = session.reset(seed).pixels;
  trace.initial_heart = session.env().factors().heart;
  while (!session.done()) {
    trace.steps.push_back(session.step(schedule.active(session.env().step_index())));
  }
  return trace;
}

json frame_to_json(std::span<const float> pixels) {
  std::string bytes(pixels.size(), '\0');
  std::transform(pixels.begin(), pixels.end(), bytes.begin(), [](float p) { return static_cast<char>(to_byte(p)); });
  std::string encoded(base64::encoded_size(bytes.size()), '\0');
  encoded.resize(base64::encode(encoded.data(), bytes.data(), bytes.size()));
  return {{"width", kImageSide}, {"height", kImageSide}, {"data", encoded}};
}

std::vector<float> frame_from_json(const json& j) {
  if (!j.is_object() || j.value("width", 0) != static_cast<int>(kImageSide) ||
      j.value("height", 0) != static_cast<int>(kImageSide) || !j.contains("data") || !j["data"].is_string()) {
    throw IntegrityError("frame must be {width: 64, height: 64, data: base64}");
  }
  const auto& data = j["data"].get_ref<const std::string&>();
  std::string bytes(base64::decoded_size(data.size()), '\0');
  const auto [written, read] = base64::decode(bytes.data(), data.data(), data.size());
  std::size_t body = data.size();
  while (body > 0 && data[body - 1] == '=') --body;
  if (read != body || written != kImagePixels) throw IntegrityError("frame data is not base64 of 64x64 bytes");
  std::vector<float> out(kImagePixels);
  for (std::size_t i = 0; i < kImagePixels; ++i) out[i] = static_cast<std::uint8_t>(bytes[i]) / 255.0f;
  return out;
}

json trace_step_to_json(const TraceStep& step) {
  return {{"step_index", step.step_index},
          {"action", action_name(step.action)},
          {"reward", step.reward},
          {"done", step.done},
          {"policy", step.policy},
          {"applied_overrides", overrides_to_json(step.applied_overrides)},
          {"heart", pose_to_json(step.heart)},
          {"frame", frame_to_json(step.frame)}};
}

std::string serialize_trace(const GovernTrace& trace) {
  json steps = json::array();
  for (const TraceStep& s : trace.steps) steps.push_back(trace_step_to_json(s));
  json doc = {{"v", 1},
              {"seed", trace.seed},
              {"schedule", schedule_to_json(trace.schedule)},
              {"initial_heart", pose_to_json(trace.initial_heart)},
              {"initial_frame", frame_to_json(trace.initial_frame)},
              {"steps", steps}};
  return doc.dump() + "\n";
}

GovernTrace parse_trace(const std::string& text) {
  GovernTrace t;
  try {
    const json doc = json::parse(text);
    if (doc.at("v").get<int>() != 1) throw IntegrityError("unsupported trace version");
    t.seed = doc.at("seed").get<std::uint64_t>();
    t.schedule = schedule_from_json(doc.at("schedule"));
    t.initial_heart = pose_from_json(doc.at("initial_heart"));
    t.initial_frame = frame_from_json(doc.at("initial_frame"));
    for (const json& j : doc.at("steps")) {
      TraceStep s;
      s.step_index = j.at("step_index").get<int>();
      const auto action = parse_action(j.at("action").get<std::string>());
      if (!action) throw IntegrityError("trace has an unknown action");
      s.action = *action;
      s.reward = j.at("reward").get<float>();
      s.done = j.at("done").get<bool>();
      s.policy = j.at("policy").get<std::vector<float>>();
      s.applied_overrides = overrides_from_json(j.at("applied_overrides"));
      s.heart = pose_from_json(j.at("heart"));
      s.frame = frame_from_json(j.at("frame"));
      t.steps.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("trace is malformed: ") + e.what());
  } catch (const std::logic_error& e) {
    throw IntegrityError(std::string("trace is malformed: ") + e.what());
  }
  return t;
}

}  // namespace acbvae
