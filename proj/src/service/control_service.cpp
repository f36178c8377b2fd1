#include "acbvae/service/control_service.hpp"

#include "acbvae/errors.hpp"
#include "acbvae/io/pgm.hpp"

namespace acbvae {

using nlohmann::json;

namespace {

const char* const kDimNames[kActionDims] = {"vertical", "horizontal", "scale", "rotation"};

std::string error_body(const std::string& message, const std::string& field = {}) {
  json j = {{"v", 1}, {"error", message}};
  if (!field.empty()) j["field"] = field;
  return j.dump();
}

LatentOverrides parse_overrides(const json& j, std::size_t latent_dim, const std::string& field) {
  LatentOverrides out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw RequestError(400, field + ": must be an object of dim -> value");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string name = field + "." + it.key();
    std::size_t dim = 0;
    try {
      std::size_t used = 0;
      dim = std::stoul(it.key(), &used);
      if (used != it.key().size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw RequestError(400, name + ": dim must be an integer");
    }
    if (dim < 1 || dim > latent_dim) {
      throw RequestError(400, name + ": dim out of range [1, " + std::to_string(latent_dim) + "]");
    }
    if (!it.value().is_number()) throw RequestError(400, name + ": value must be a number");
    const double v = it.value().get<double>();
    if (!std::isfinite(v)) throw RequestError(400, name + ": value must be finite");
    out[dim] = static_cast<float>(v);
  }
  return out;
}

std::optional<DiscreteAction> parse_optional_action(const json& request, const std::string& field) {
  auto it = request.find("action");
  if (it == request.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw RequestError(400, field + ": must be an action name");
  const auto a = parse_action(it->get<std::string>());
  if (!a) throw RequestError(400, field + ": unknown action '" + it->get<std::string>() + "'");
  return a;
}

Observation parse_observation(const json& j) {
  Observation obs;
  try {
    obs.pixels = frame_from_json(j);
  } catch (const IntegrityError&) {
    throw RequestError(400, "observation: must be {width: 64, height: 64, data: base64 of 64x64 bytes}");
  }
  return obs;
}

json session_frame(const TraceStep& step) {
  json j = trace_step_to_json(step);
  j["v"] = 1;
  j["type"] = "step";
  return j;
}

}  // namespace

std::string Session::export_trace() const {
  GovernTrace t = log_;
  t.schedule.entries.clear();
  for (const TraceStep& s : t.steps) {
    for (const auto& [dim, value] : s.applied_overrides) {
      bool merged = false;
      for (OverrideEntry& e : t.schedule.entries) {
        if (e.dim == dim && e.value == value && e.end == s.step_index) {
          e.end = s.step_index + 1;
          merged = true;
          break;
        }
      }
      if (!merged) t.schedule.entries.push_back(OverrideEntry{s.step_index, s.step_index + 1, dim, value});
    }
  }
  return serialize_trace(t);
}

ControlService::ControlService(std::optional<Checkpoint> checkpoint) : checkpoint_(std::move(checkpoint)) {}

json ControlService::model_info() const {
  const ModelConfig& m = checkpoint_->model.config;
  json dims = json::array();
  for (std::size_t i = 0; i < m.latent_dim; ++i) {
    const bool mapped = i < m.action_dims;
    dims.push_back({{"index", i + 1}, {"mapped", mapped}, {"name", mapped && i < kActionDims ? kDimNames[i] : "environment"}});
  }
  json actions = json::array();
  for (std::size_t a = 0; a < kNumActions; ++a) actions.push_back(action_name(action_from_index(a)));
  return {{"v", 1},
          {"n", m.latent_dim},
          {"m", m.action_dims},
          {"dims", dims},
          {"actions", actions},
          {"frame", {{"width", kImageSide}, {"height", kImageSide}}},
          {"step_count", checkpoint_->step},
          {"seed", checkpoint_->seed},
          {"config", run_config_to_json(checkpoint_->config)}};
}

json ControlService::predict(const json& request) const {
  if (!request.is_object()) throw RequestError(400, "body must be a JSON object");
  const AgentModelF& model = checkpoint_->model;
  const LatentOverrides overrides =
      parse_overrides(request.contains("overrides") ? request["overrides"] : json(), model.config.latent_dim, "overrides");
  const auto action = parse_optional_action(request, "action");
  Observation obs;
  if (request.contains("session_id")) {
    if (!request["session_id"].is_string()) throw RequestError(400, "session_id: must be a string");
    auto session = find_session(request["session_id"].get<std::string>());
    if (!session) throw RequestError(404, "unknown session '" + request["session_id"].get<std::string>() + "'");
    std::lock_guard lock(session->mutex());
    if (!session->started()) throw RequestError(400, "session_id: session has not been reset");
    obs = session->governed().env().observation();
  } else if (request.contains("observation")) {
    obs = parse_observation(request["observation"]);
  } else {
    throw RequestError(400, "session_id or observation is required");
  }
  const Prediction p = predict_with_override(model, obs, overrides, action);
  return {{"v", 1},
          {"predicted_image", frame_to_json(p.image)},
          {"policy", p.policy},
          {"value", p.value},
          {"action", action_name(p.action)},
          {"mu", p.latent.mu}};
}

HttpReply ControlService::handle_http(const std::string& method, const std::string& target, const std::string& body) {
  const std::string path = target.substr(0, target.find('?'));
  const bool known = path == "/api/model" || path == "/api/predict" ||
                     (path.rfind("/api/session/", 0) == 0 && path.size() > 19 &&
                      path.compare(path.size() - 6, 6, "/trace") == 0);
  if (!known) return {404, error_body("no route for " + path)};
  if (!ready()) return {503, error_body("no checkpoint loaded")};
  try {
    if (path == "/api/model") {
      if (method != "GET") return {405, error_body("use GET")};
      return {200, model_info().dump()};
    }
    if (path == "/api/predict") {
      if (method != "POST") return {405, error_body("use POST")};
      json request;
      try {
        request = json::parse(body);
      } catch (const json::parse_error&) {
        return {400, error_body("body is not valid JSON")};
      }
      return {200, predict(request).dump()};
    }
    if (method != "GET") return {405, error_body("use GET")};
    const std::string id = path.substr(13, path.size() - 13 - 6);
    auto session = find_session(id);
    if (!session) return {404, error_body("unknown session '" + id + "'")};
    std::lock_guard lock(session->mutex());
    return {200, session->export_trace()};
  } catch (const RequestError& e) {
    const std::string msg = e.what();
    const std::size_t colon = msg.find(':');
    const std::string head = msg.substr(0, std::min(colon, msg.find(' ')));
    return {e.status(), error_body(msg, colon != std::string::npos && head.size() == colon ? head : std::string())};
  } catch (const UsageError& e) {
    return {400, error_body(e.what())};
  }
}

std::shared_ptr<Session> ControlService::create_session() {
  std::lock_guard lock(sessions_mutex_);
  const std::string id = "s" + std::to_string(next_session_++);
  auto s = std::make_shared<Session>(id, checkpoint_->model, checkpoint_->config.train.env);
  sessions_[id] = s;
  return s;
}

std::shared_ptr<Session> ControlService::find_session(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void ControlService::close_session(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  sessions_.erase(id);
}

bool ControlService::handle_session_message(Session& session, const std::string& text,
                                            const std::function<void(const std::string&)>& emit) {
  auto error = [&](const std::string& message) { emit(json{{"v", 1}, {"type", "error"}, {"error", message}}.dump()); };
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::parse_error&) {
    error("message is not valid JSON");
    return false;
  }
  if (!msg.is_object() || !msg.contains("cmd") || !msg["cmd"].is_string()) {
    error("message needs a string 'cmd'");
    return false;
  }
  const std::string cmd = msg["cmd"].get<std::string>();
  const std::size_t n = checkpoint_->model.config.latent_dim;
  std::lock_guard lock(session.mutex());
  try {
    if (cmd == "reset") {
      if (!msg.contains("seed") || !msg["seed"].is_number_unsigned()) {
        error("reset needs an unsigned integer 'seed'");
        return false;
      }
      const auto seed = msg["seed"].get<std::uint64_t>();
      const Observation obs = session.governed().reset(seed);
      session.mark_started();
      session.log() = GovernTrace{};
      session.log().seed = seed;
      session.log().initial_frame = obs.pixels;
      session.log().initial_heart = session.governed().env().factors().heart;
      const LatentStats latent = checkpoint_->model.encode(obs);
      emit(json{{"v", 1},
                {"type", "reset"},
                {"session_id", session.id()},
                {"step_index", 0},
                {"reward", 0.0},
                {"done", false},
                {"policy", checkpoint_->model.policy_probs(latent.h())},
                {"applied_overrides", json::object()},
                {"frame", frame_to_json(obs.pixels)}}
               .dump());
      return true;
    }
    if (cmd == "step" || cmd == "auto") {
      int steps = 1;
      if (cmd == "auto") {
        if (!msg.contains("steps") || !msg["steps"].is_number_integer() || msg["steps"].get<int>() < 1) {
          error("auto needs a positive integer 'steps'");
          return false;
        }
        steps = msg["steps"].get<int>();
      }
      const LatentOverrides overrides =
          parse_overrides(msg.contains("overrides") ? msg["overrides"] : json(), n, "overrides");
      const auto action = cmd == "step" ? parse_optional_action(msg, "action") : std::nullopt;
      if (!session.started()) {
        error("session has not been reset");
        return true;
      }
      for (int i = 0; i < steps; ++i) {
        if (session.governed().done()) {
          error("episode is over; reset to continue");
          return true;
        }
        const TraceStep step = session.governed().step(overrides, action);
        session.log().steps.push_back(step);
        emit(session_frame(step).dump());
      }
      return true;
    }
    error("unknown cmd '" + cmd + "'");
    return false;
  } catch (const RequestError& e) {
    error(e.what());
    return true;
  }
}

}  // namespace acbvae
