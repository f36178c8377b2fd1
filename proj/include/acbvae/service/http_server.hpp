#ifndef ACBVAE_SERVICE_HTTP_SERVER_HPP_
#define ACBVAE_SERVICE_HTTP_SERVER_HPP_

#include <cstdint>
#include <memory>
#include <string>

#include "acbvae/service/control_service.hpp"

namespace acbvae {

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  /// Upper bound on websocket session messages per second.
  double max_messages_per_second = 30.0;
};

/// HTTP/1.1 and websocket front end for ControlService. Requests to
/// /api/session upgrade to a websocket; everything else is plain HTTP with
/// permissive CORS headers.
class HttpServer {
 public:
  HttpServer(ControlService& service, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and starts serving on background threads; returns the bound port.
  std::uint16_t start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; throws UsageError if malformed.
ServerOptions parse_address(const std::string& addr);

}  // namespace acbvae

#endif  // ACBVAE_SERVICE_HTTP_SERVER_HPP_
