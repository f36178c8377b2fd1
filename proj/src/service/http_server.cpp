#include "acbvae/service/http_server.hpp"

#include <chrono>
#include <condition_variable>
#include <list>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "acbvae/errors.hpp"

namespace acbvae {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

template <typename Response>
void add_cors(Response& res) {
  res.set(http::field::access_control_allow_origin, "*");
  res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
  res.set(http::field::access_control_allow_headers, "Content-Type");
}

}  // namespace

struct HttpServer::Impl {
  ControlService& service;
  ServerOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread accept_thread;

  std::mutex mutex;
  std::condition_variable stopped_cv;
  bool stopped = false;
  std::list<std::pair<std::shared_ptr<tcp::socket>, std::thread>> connections;

  Impl(ControlService& s, ServerOptions o) : service(s), options(std::move(o)) {}

  void accept_next() {
    auto socket = std::make_shared<tcp::socket>(ioc);
    acceptor.async_accept(*socket, [this, socket](beast::error_code ec) {
      if (ec) return;
      std::lock_guard lock(mutex);
      if (stopped) return;
      connections.emplace_back(socket, std::thread([this, socket] { serve(*socket); }));
      accept_next();
    });
  }

  void serve(tcp::socket& socket) {
    beast::error_code ec;
    beast::flat_buffer buffer;
    for (;;) {
      http::request<http::string_body> req;
      http::read(socket, buffer, req, ec);
      if (ec) break;
      if (websocket::is_upgrade(req)) {
        if (req.target() == "/api/session") serve_websocket(socket, std::move(req));
        break;
      }
      http::response<http::string_body> res;
      res.version(req.version());
      res.keep_alive(req.keep_alive());
      add_cors(res);
      if (req.method() == http::verb::options) {
        res.result(http::status::no_content);
      } else {
        const HttpReply reply = service.handle_http(std::string(req.method_string()), std::string(req.target()), req.body());
        res.result(static_cast<unsigned>(reply.status));
        res.set(http::field::content_type, "application/json");
        res.body() = reply.body;
      }
      res.prepare_payload();
      http::write(socket, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    socket.shutdown(tcp::socket::shutdown_both, ec);
  }

  void serve_websocket(tcp::socket& socket, http::request<http::string_body> req) {
    websocket::stream<tcp::socket&> ws(socket);
    ws.set_option(websocket::stream_base::decorator([](websocket::response_type& res) { add_cors(res); }));
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    if (!service.ready()) {
      ws.text(true);
      ws.write(asio::buffer(std::string(R"({"v":1,"type":"error","error":"no checkpoint loaded"})")), ec);
      ws.close(websocket::close_code::try_again_later, ec);
      return;
    }
    auto session = service.create_session();
    const auto min_gap = std::chrono::duration<double>(1.0 / options.max_messages_per_second);
    auto last = std::chrono::steady_clock::now() - std::chrono::seconds(1);
    for (;;) {
      beast::flat_buffer buffer;
      ws.read(buffer, ec);
      if (ec) break;
      bool write_failed = false;
      const bool keep = service.handle_session_message(
          *session, beast::buffers_to_string(buffer.data()), [&](const std::string& out) {
            if (write_failed) return;
            std::this_thread::sleep_until(last + std::chrono::duration_cast<std::chrono::steady_clock::duration>(min_gap));
            last = std::chrono::steady_clock::now();
            ws.text(true);
            ws.write(asio::buffer(out), ec);
            if (ec) write_failed = true;
          });
      if (write_failed) break;
      if (!keep) {
        ws.close(websocket::close_code::policy_error, ec);
        break;
      }
    }
    service.close_session(session->id());
  }
};

HttpServer::HttpServer(ControlService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

HttpServer::~HttpServer() { stop(); }

std::uint16_t HttpServer::start() {
  beast::error_code ec;
  const auto address = asio::ip::make_address(impl_->options.host, ec);
  if (ec) throw UsageError("invalid listen address '" + impl_->options.host + "'");
  const tcp::endpoint endpoint(address, impl_->options.port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint, ec);
  if (ec) throw Error("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port) + ": " + ec.message());
  impl_->acceptor.listen();
  const std::uint16_t port = impl_->acceptor.local_endpoint().port();
  impl_->accept_next();
  impl_->accept_thread = std::thread([this] { impl_->ioc.run(); });
  return port;
}

void HttpServer::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

void HttpServer::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->mutex);
    if (impl_->stopped) return;
    impl_->stopped = true;
  }
  asio::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  impl_->ioc.stop();
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  std::list<std::pair<std::shared_ptr<tcp::socket>, std::thread>> connections;
  {
    std::lock_guard lock(impl_->mutex);
    connections.swap(impl_->connections);
  }
  for (auto& [socket, thread] : connections) {
    beast::error_code ec;
    socket->shutdown(tcp::socket::shutdown_both, ec);
    if (thread.joinable()) thread.join();
  }
  impl_->stopped_cv.notify_all();
}

ServerOptions parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size()) {
    throw UsageError("address must look like host:port, got '" + addr + "'");
  }
  ServerOptions o;
  o.host = addr.substr(0, colon);
  try {
    std::size_t used = 0;
    const unsigned long port = std::stoul(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1 || port > 65535) throw std::out_of_range("port");
    o.port = static_cast<std::uint16_t>(port);
  } catch (const std::logic_error&) {
    throw UsageError("invalid port in '" + addr + "'");
  }
  return o;
}

}  // namespace acbvae
