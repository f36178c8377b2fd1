#ifndef ACBVAE_SERVICE_CONTROL_SERVICE_HPP_
#define ACBVAE_SERVICE_CONTROL_SERVICE_HPP_

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "acbvae/governance/govern.hpp"
#include "acbvae/io/checkpoint.hpp"

namespace acbvae {

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

// One websocket session: an environment, its step log and a lock that
// serialises its steps.
class Session {
 public:
  Session(std::string id, const AgentModelF& model, const EnvConfig& env_config)
      : id_(std::move(id)), session_(model, env_config) {}

  const std::string& id() const { return id_; }
  std::mutex& mutex() { return mutex_; }
  GovernedSession& governed() { return session_; }
  bool started() const { return started_; }
  GovernTrace& log() { return log_; }
  void mark_started() { started_ = true; }

  /// The step log as a trace; the schedule is rebuilt from the per-step
  /// overrides, merging consecutive steps with the same (dim, value).
  std::string export_trace() const;

 private:
  std::string id_;
  GovernedSession session_;
  GovernTrace log_;
  bool started_ = false;
  std::mutex mutex_;
};

/// Transport-independent request handling. All bodies carry {"v": 1}.
class ControlService {
 public:
  explicit ControlService(std::optional<Checkpoint> checkpoint);

  bool ready() const { return checkpoint_.has_value(); }
  const Checkpoint& checkpoint() const { return *checkpoint_; }

  /// GET /api/model, POST /api/predict, GET /api/session/<id>/trace.
  HttpReply handle_http(const std::string& method, const std::string& target, const std::string& body);

  std::shared_ptr<Session> create_session();
  std::shared_ptr<Session> find_session(const std::string& id) const;
  void close_session(const std::string& id);

  /// Handles one client message. `emit` receives each server message in
  /// order. Returns false when the connection must close after a protocol
  /// violation.
  bool handle_session_message(Session& session, const std::string& text,
                              const std::function<void(const std::string&)>& emit);

  nlohmann::json model_info() const;
  nlohmann::json predict(const nlohmann::json& request) const;

 private:
  std::optional<Checkpoint> checkpoint_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;
};

// Raised for malformed requests; carries the offending field.
class RequestError : public UsageError {
 public:
  RequestError(int status, const std::string& message) : UsageError(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

}  // namespace acbvae

#endif  // ACBVAE_SERVICE_CONTROL_SERVICE_HPP_
