#include "mutual/server.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "mutual/error.hpp"

namespace mutual {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace fs = std::filesystem;
using tcp = asio::ip::tcp;

std::string mime_type(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".txt") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

std::optional<fs::path> resolve_static(const fs::path& root, const std::string& target) {
  if (root.empty()) return std::nullopt;
  std::string path = target.substr(0, target.find_first_of("?#"));
  if (path.empty() || path[0] != '/' || path.find('\0') != std::string::npos) return std::nullopt;
  if (path.find('\\') != std::string::npos || path.find('%') != std::string::npos) return std::nullopt;
  if (path.back() == '/') path += "index.html";
  fs::path rel;
  for (const auto& part : fs::path(path.substr(1))) {
    if (part == ".." || part == ".") return std::nullopt;
    rel /= part;
  }
  std::error_code ec;
  const fs::path base = fs::canonical(root, ec);
  if (ec) return std::nullopt;
  const fs::path full = fs::canonical(base / rel, ec);
  if (ec || !fs::is_regular_file(full)) return std::nullopt;
  // Symlinks may still point outside the root.
  const auto b = base.string(), f = full.string();
  if (f.size() <= b.size() || f.compare(0, b.size(), b) != 0 || f[b.size()] != '/') return std::nullopt;
  return full;
}

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

struct Server::Impl {
  ChatService& service;
  ServerOptions opts;
  asio::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  asio::steady_timer timer{ioc};
  ConnId next_conn = 1;

  class WsSession;
  std::unordered_map<ConnId, std::weak_ptr<WsSession>> sockets;

  Impl(ChatService& s, ServerOptions o) : service(s), opts(std::move(o)) {}

  // ------------------------------------------------------------- websocket
  class WsSession : public std::enable_shared_from_this<WsSession> {
   public:
    WsSession(Impl& impl, tcp::socket&& socket, ConnId id) : impl_(impl), ws_(std::move(socket)), id_(id) {}

    void start(http::request<http::string_body> req) {
      ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->impl_.sockets[self->id_] = self;
        self->read();
      });
    }

    void send(const std::string& text) {
      out_.push_back(text);
      if (out_.size() == 1) write();
    }

   private:
    void read() {
      ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->closed();
        const std::string text = beast::buffers_to_string(self->buf_.data());
        self->buf_.consume(self->buf_.size());
        self->impl_.guarded([&] { self->impl_.service.on_message(self->id_, text, now_ms()); });
        self->read();
      });
    }
    void write() {
      ws_.text(true);
      ws_.async_write(asio::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->closed();
        self->out_.pop_front();
        if (!self->out_.empty()) self->write();
      });
    }
    void closed() {
      if (done_) return;
      done_ = true;
      impl_.sockets.erase(id_);
      impl_.guarded([&] { impl_.service.on_disconnect(id_, now_ms()); });
    }

    Impl& impl_;
    websocket::stream<beast::tcp_stream> ws_;
    ConnId id_;
    beast::flat_buffer buf_;
    std::deque<std::string> out_;
    bool done_ = false;
  };

  // ------------------------------------------------------------------ http
  class HttpSession : public std::enable_shared_from_this<HttpSession> {
   public:
    HttpSession(Impl& impl, tcp::socket&& socket) : impl_(impl), stream_(std::move(socket)) {}
    void start() { read(); }

   private:
    void read() {
      req_ = {};
      stream_.expires_after(std::chrono::seconds(30));
      parser_.emplace();
      parser_->body_limit(64 * 1024);
      http::async_read(stream_, buf_, *parser_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return;
        self->req_ = self->parser_->release();
        self->handle();
      });
    }

    void handle() {
      if (websocket::is_upgrade(req_)) {
        if (req_.target() != "/ws") return reply(http::status::not_found, R"({"error":"no such socket"})", "application/json");
        stream_.expires_never();
        auto ws = std::make_shared<WsSession>(impl_, stream_.release_socket(), impl_.next_conn++);
        ws->start(std::move(req_));
        return;
      }
      const std::string target(req_.target());
      const std::string path = target.substr(0, target.find('?'));
      if (path == "/health") {
        if (req_.method() != http::verb::get) return not_allowed();
        return reply(http::status::ok, impl_.service.health().dump(), "application/json");
      }
      if (path.rfind("/scenarios/", 0) == 0) {
        if (req_.method() != http::verb::get) return not_allowed();
        const auto sc = impl_.service.scenario_json(path.substr(11));
        if (!sc) return reply(http::status::not_found, R"({"error":"unknown scenario"})", "application/json");
        return reply(http::status::ok, sc->dump(), "application/json");
      }
      if (path == "/ratings") {
        if (req_.method() != http::verb::post) return not_allowed();
        std::pair<int, nlohmann::json> r{500, {}};
        impl_.guarded([&] { r = impl_.service.post_rating(req_.body()); });
        return reply(static_cast<http::status>(r.first), r.second.dump(), "application/json");
      }
      if (req_.method() != http::verb::get && req_.method() != http::verb::head) return not_allowed();
      const auto file = resolve_static(impl_.opts.static_dir, path);
      if (!file) return reply(http::status::not_found, "not found\n", "text/plain; charset=utf-8");
      std::ifstream in(*file, std::ios::binary);
      std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      reply(http::status::ok, std::move(body), mime_type(*file));
    }

    void not_allowed() { reply(http::status::method_not_allowed, R"({"error":"method not allowed"})", "application/json"); }

    void reply(http::status status, std::string body, const std::string& type) {
      auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
      res->set(http::field::server, "mutual");
      res->set(http::field::content_type, type);
      res->keep_alive(req_.keep_alive());
      if (req_.method() != http::verb::head) res->body() = std::move(body);
      res->prepare_payload();
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
        if (ec) return;
        if (res->need_eof()) {
          beast::error_code ignored;
          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
          return;
        }
        self->read();
      });
    }

    Impl& impl_;
    beast::tcp_stream stream_;
    beast::flat_buffer buf_;
    std::optional<http::request_parser<http::string_body>> parser_;
    http::request<http::string_body> req_;
  };

  // Service errors must not take the server down.
  template <class F>
  void guarded(F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      std::cerr << "service error: " << e.what() << "\n";
    }
  }

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec == asio::error::operation_aborted) return;
      } else {
        std::make_shared<HttpSession>(*this, std::move(socket))->start();
      }
      accept();
    });
  }

  void schedule_tick() {
    timer.expires_after(std::chrono::milliseconds(opts.tick_ms));
    timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      guarded([&] { service.tick(now_ms()); });
      schedule_tick();
    });
  }
};

Server::Server(ChatService& service, ServerOptions options) : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& im = *impl_;
  beast::error_code ec;
  const auto addr = asio::ip::make_address(im.opts.host, ec);
  if (ec) throw UsageError("bad host '" + im.opts.host + "'");
  const tcp::endpoint ep{addr, im.opts.port};
  im.acceptor.open(ep.protocol());
  im.acceptor.set_option(asio::socket_base::reuse_address(true));
  im.acceptor.bind(ep, ec);
  if (ec) throw DataError("cannot bind " + im.opts.host + ":" + std::to_string(im.opts.port) + ": " + ec.message());
  im.acceptor.listen();
  im.service.set_sink([&im](ConnId c, const std::string& text) {
    auto it = im.sockets.find(c);
    if (it == im.sockets.end()) return;
    if (auto ws = it->second.lock()) ws->send(text);
  });
}

Server::~Server() { impl_->service.set_sink(nullptr); }

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  impl_->accept();
  impl_->schedule_tick();
  std::optional<asio::signal_set> signals;
  if (impl_->opts.handle_signals) {
    signals.emplace(impl_->ioc, SIGINT, SIGTERM);
    signals->async_wait([this](beast::error_code ec, int) {
      if (!ec) stop();
    });
  }
  impl_->ioc.run();
}

void Server::stop() {
  asio::post(impl_->ioc, [im = impl_.get()] {
    beast::error_code ec;
    im->acceptor.close(ec);
    im->timer.cancel();
    im->ioc.stop();
  });
}

}  // namespace mutual
