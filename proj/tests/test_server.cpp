#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "dyno_fixtures.hpp"
#include "mutual/server.hpp"

using namespace mutual;
using mutual::testing::default_schema_ref;
using nlohmann::json;
namespace fs = std::filesystem;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

struct Response {
  int status = 0;
  std::string body;
  std::string type;
};

Response request(unsigned short port, http::verb verb, const std::string& target, const std::string& body = "") {
  asio::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "localhost");
  req.body() = body;
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body(), std::string(res[http::field::content_type])};
}

struct Client {
  asio::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  explicit Client(unsigned short port) {
    ws.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    ws.handshake("localhost", "/ws");
  }
  void send(json j) {
    j["v"] = 1;
    ws.write(asio::buffer(j.dump()));
  }
  json recv() {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
  // Skips messages of other types.
  json recv_type(const std::string& type) {
    for (int i = 0; i < 50; ++i) {
      json j = recv();
      if (j["type"] == type) return j;
    }
    return {};
  }
};

struct Live {
  fs::path dir = fs::temp_directory_path() / ("mutual_server_" + std::to_string(::getpid()));
  TemplateTable templates = TemplateTable::bundled();
  SurfaceFormStore forms;
  std::unique_ptr<ChatService> svc;
  std::unique_ptr<Server> server;
  std::thread thread;

  Live() {
    fs::remove_all(dir);
    fs::create_directories(dir / "static" / "js");
    std::ofstream(dir / "static" / "index.html") << "<html>chat</html>";
    std::ofstream(dir / "static" / "js" / "app.js") << "console.log(1);";
    std::ofstream(dir / "secret.txt") << "hidden";
    ServiceConfig cfg;
    cfg.mix = {{"human", 1.0}};
    cfg.storage = dir / "data";
    AgentResources res;
    res.templates = &templates;
    res.forms = &forms;
    svc = std::make_unique<ChatService>(default_schema_ref(), res, cfg, 5);
    ServerOptions o;
    o.port = 0;
    o.static_dir = dir / "static";
    o.tick_ms = 20;
    server = std::make_unique<Server>(*svc, o);
    thread = std::thread([this] { server->run(); });
  }
  ~Live() {
    server->stop();
    thread.join();
    server.reset();
    fs::remove_all(dir);
  }
};

}  // namespace

TEST(StaticFiles, ResolveStaysInsideRoot) {
  const fs::path root = fs::temp_directory_path() / ("mutual_static_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root / "www" / "a");
  std::ofstream(root / "www" / "index.html") << "x";
  std::ofstream(root / "www" / "a" / "b.css") << "x";
  std::ofstream(root / "outside.txt") << "x";
  fs::create_symlink(root / "outside.txt", root / "www" / "link.txt");
  const fs::path www = root / "www";
  EXPECT_TRUE(resolve_static(www, "/").has_value());
  EXPECT_TRUE(resolve_static(www, "/a/b.css?x=1").has_value());
  EXPECT_FALSE(resolve_static(www, "/../outside.txt").has_value());
  EXPECT_FALSE(resolve_static(www, "/a/../../outside.txt").has_value());
  EXPECT_FALSE(resolve_static(www, "/%2e%2e/outside.txt").has_value());
  EXPECT_FALSE(resolve_static(www, "/link.txt").has_value());
  EXPECT_FALSE(resolve_static(www, "/a").has_value());
  EXPECT_FALSE(resolve_static(www, "relative").has_value());
  EXPECT_FALSE(resolve_static("", "/").has_value());
  EXPECT_EQ(mime_type("x.js"), "text/javascript; charset=utf-8");
  EXPECT_EQ(mime_type("x.bin"), "application/octet-stream");
  fs::remove_all(root);
}

TEST(Server, HttpRoutes) {
  Live live;
  const auto port = live.server->port();
  const auto health = request(port, http::verb::get, "/health");
  EXPECT_EQ(health.status, 200);
  EXPECT_EQ(json::parse(health.body)["status"], "ok");
  EXPECT_EQ(request(port, http::verb::post, "/health").status, 405);
  EXPECT_EQ(request(port, http::verb::get, "/scenarios/nope").status, 404);
  const auto index = request(port, http::verb::get, "/");
  EXPECT_EQ(index.status, 200);
  EXPECT_EQ(index.body, "<html>chat</html>");
  EXPECT_EQ(index.type, "text/html; charset=utf-8");
  EXPECT_EQ(request(port, http::verb::get, "/js/app.js").status, 200);
  EXPECT_EQ(request(port, http::verb::get, "/../secret.txt").status, 404);
  EXPECT_EQ(request(port, http::verb::post, "/ratings", "{").status, 400);
  EXPECT_EQ(request(port, http::verb::post, "/ratings",
                    R"({"session_id":"d5-0","fluency":3,"correctness":3,"cooperation":3,"human_likeness":3})")
                .status,
            404);
  EXPECT_EQ(request(port, http::verb::get, "/ratings").status, 405);
}

TEST(Server, WebSocketDialogueEndToEnd) {
  Live live;
  const auto port = live.server->port();
  Client c1(port), c2(port);
  c1.send({{"type", "join"}, {"token", "alice"}});
  EXPECT_EQ(c1.recv()["type"], "waiting");
  c2.send({{"type", "join"}, {"token", "bob"}});
  const json p1 = c1.recv_type("paired"), p2 = c2.recv_type("paired");
  ASSERT_EQ(p1["session_id"], p2["session_id"]);
  const auto sc = request(port, http::verb::get, "/scenarios/" + p1["scenario_view"]["id"].get<std::string>());
  EXPECT_EQ(sc.status, 200);

  c1.send({{"type", "utterance"}, {"text", "anyone like hiking?"}});
  const json ev = c2.recv_type("partner_event");
  EXPECT_EQ(ev["event"]["text"], "anyone like hiking?");

  c2.send({{"type", "bogus"}});
  EXPECT_EQ(c2.recv()["type"], "error");

  // Select the shared row on both sides.
  int r1 = -1, r2 = -1;
  for (std::size_t i = 0; i < p1["kb"].size() && r1 < 0; ++i)
    for (std::size_t j = 0; j < p2["kb"].size(); ++j)
      if (p1["kb"][i] == p2["kb"][j]) {
        r1 = static_cast<int>(i);
        r2 = static_cast<int>(j);
        break;
      }
  ASSERT_GE(r1, 0);
  c1.send({{"type", "select"}, {"item_index", r1}});
  EXPECT_EQ(c1.recv_type("select")["item_index"], r1);
  c2.send({{"type", "select"}, {"item_index", r2}});
  EXPECT_EQ(c1.recv_type("end")["outcome"], "success");
  EXPECT_EQ(c2.recv_type("end")["outcome"], "success");

  c1.send({{"type", "rate"}, {"fluency", 5}, {"correctness", 5}, {"cooperation", 4}, {"human_likeness", 4}});
  EXPECT_EQ(c1.recv()["type"], "rated");
  const auto posted = request(port, http::verb::post, "/ratings",
                              json{{"session_id", p1["session_id"]}, {"fluency", 2}, {"correctness", 2},
                                   {"cooperation", 2}, {"human_likeness", 2}}
                                  .dump());
  EXPECT_EQ(posted.status, 201);
  EXPECT_EQ(live.svc->store().ratings().size(), 2u);
  EXPECT_EQ(live.svc->store().transcript_ids().size(), 1u);
}

TEST(Server, SocketCloseStartsGrace) {
  Live live;
  const auto port = live.server->port();
  {
    Client c1(port);
    c1.send({{"type", "join"}, {"token", "carol"}});
    EXPECT_EQ(c1.recv()["type"], "waiting");
    c1.ws.close(websocket::close_code::normal);
  }
  // The waiter leaves the queue once the close is processed.
  for (int i = 0; i < 100; ++i) {
    if (json::parse(request(port, http::verb::get, "/health").body)["waiting"] == 0) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  EXPECT_EQ(json::parse(request(port, http::verb::get, "/health").body)["waiting"], 0);
}
