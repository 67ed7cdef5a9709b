#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "mutual/service.hpp"

namespace mutual {

struct ServerOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::filesystem::path static_dir;  // empty: no static files
  int tick_ms = 100;
  bool handle_signals = false;  // stop on SIGINT/SIGTERM
};

// HTTP + WebSocket front end of a ChatService on one io_context thread.
//   GET /health, GET /scenarios/<id>, POST /ratings, GET /ws (upgrade),
//   anything else under GET is served from static_dir.
class Server {
 public:
  Server(ChatService& service, ServerOptions options);
  ~Server();

  // Bound port, valid after construction.
  unsigned short port() const;
  // Blocks until stop() is called.
  void run();
  // Safe from any thread.
  void stop();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

// Content type by file extension.
std::string mime_type(const std::filesystem::path& p);
// Maps a request target to a file below root, or nothing when the target
// escapes root or names no regular file.
std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, const std::string& target);

}  // namespace mutual
