#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mutual/agents.hpp"
#include "mutual/session.hpp"

namespace mutual {

// Wire protocol version carried as "v" in every message.
constexpr int kWireVersion = 1;

struct Rating {
  std::string session_id;
  std::optional<Side> rater;
  int fluency = 0, correctness = 0, cooperation = 0, human_likeness = 0;
  std::string comment;
};
// Throws DataError unless the four scores are integers in 1..5.
Rating rating_from_json(const nlohmann::json& j);
nlohmann::json rating_to_json(const Rating& r);

// Append-only record store. Records are written to a temporary file and
// renamed into place; the index is appended after the rename, and a torn
// trailing index line is ignored on load.
class Store {
 public:
  explicit Store(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  // Returns the record id (the transcript's scenario-independent session id).
  std::string save_transcript(const std::string& id, const Transcript& t, const Schema& schema);
  void save_rating(const Rating& r);
  bool has_transcript(const std::string& id) const;
  // Ids of complete transcript records, in write order.
  std::vector<std::string> transcript_ids() const;
  std::vector<Rating> ratings() const;
  std::filesystem::path transcript_path(const std::string& id) const;

 private:
  void append_index(const nlohmann::json& line);
  std::filesystem::path dir_;
  int rating_seq_ = 0;
};

struct ServiceConfig {
  // Opponent mix: "human" plus any agent kind.
  std::map<std::string, double> mix{{"human", 1.0}, {"rule", 1.0}};
  std::filesystem::path storage = "chat_data";
  std::uint64_t scenario_seed = 1;
  Limits limits;
  Pacing pacing;
  double time_scale = 1.0;  // multiplies bot typing delays and gaps
  std::int64_t disconnect_grace_ms = 30'000;
  std::int64_t bot_idle_ms = 15'000;  // a bot speaks up after this much silence
};

using ConnId = std::uint64_t;

// Transport-independent chat service: lobby, pairing, live sessions, bots
// and persistence. All calls must be serialized by the caller; time comes
// from the caller so tests can drive a fake clock.
class ChatService {
 public:
  using Sink = std::function<void(ConnId, const std::string&)>;

  ChatService(const Schema& schema, AgentResources bots, ServiceConfig config, std::uint64_t seed);
  ~ChatService();

  void set_sink(Sink sink) { sink_ = std::move(sink); }
  void on_message(ConnId conn, const std::string& text, std::int64_t now_ms);
  void on_disconnect(ConnId conn, std::int64_t now_ms);
  // Runs due bot actions, deadlines and disconnect expiries.
  void tick(std::int64_t now_ms);

  nlohmann::json health() const;
  std::optional<nlohmann::json> scenario_json(const std::string& id) const;
  // Body of POST /ratings; returns an HTTP status and a JSON reply.
  std::pair<int, nlohmann::json> post_rating(const std::string& body);

  std::size_t waiting() const { return queue_.size(); }
  std::size_t active_sessions() const { return sessions_.size(); }
  const Store& store() const { return store_; }

 private:
  struct Pending {
    std::int64_t at = 0;
    enum Kind { typing, utterance, select } kind = typing;
    std::string text;
    int item = -1;
  };
  struct Live {
    std::string id;
    std::unique_ptr<Scenario> scenario;
    std::unique_ptr<LiveSession> session;
    std::array<std::optional<ConnId>, 2> conns;
    std::array<std::string, 2> tokens;
    std::array<std::optional<std::int64_t>, 2> gone_since;
    std::unique_ptr<Agent> bot;
    std::optional<Side> bot_side;
    std::deque<Pending> bot_queue;
    bool bot_wants_turn = false;
    std::int64_t last_activity = 0;
  };
  struct Conn {
    std::string token;
    std::string session;  // empty while waiting or idle
    std::optional<Side> side;
    std::string last_session;  // for ratings after the end
  };

  void send(ConnId c, nlohmann::json j);
  void error(ConnId c, const std::string& msg);
  void handle_join(ConnId c, const nlohmann::json& j, std::int64_t now);
  void start_session(std::vector<std::pair<ConnId, std::string>> humans, const std::string& bot_kind,
                     std::int64_t now);
  void send_paired(Live& s, Side side, std::int64_t now);
  void handle_in_session(Live& s, Side side, const nlohmann::json& j, std::int64_t now);
  void broadcast(Live& s, const Event& ev);
  void bot_activate(Live& s, std::int64_t now);
  void run_bot(Live& s, std::int64_t now);
  void finish_if_done(Live& s);
  std::string draw_opponent();

  const Schema* schema_;
  Lexicon lexicon_;
  AgentResources bots_;
  ServiceConfig config_;
  Rng rng_;
  Store store_;
  Sink sink_;
  std::uint64_t next_scenario_ = 0;
  std::uint64_t next_session_ = 0;
  std::unordered_map<ConnId, Conn> conns_;
  std::deque<ConnId> queue_;
  std::map<std::string, std::unique_ptr<Live>> sessions_;
  std::map<std::string, nlohmann::json> scenarios_;  // every scenario handed out
};

}  // namespace mutual
