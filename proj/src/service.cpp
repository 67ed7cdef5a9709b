#include "mutual/service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mutual/error.hpp"

namespace mutual {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- ratings

Rating rating_from_json(const json& j) {
  if (!j.is_object()) throw DataError("rating must be an object");
  Rating r;
  if (j.contains("session_id")) {
    if (!j["session_id"].is_string()) throw DataError("session_id must be a string");
    r.session_id = j["session_id"].get<std::string>();
  }
  auto score = [&](const char* key) {
    if (!j.contains(key)) throw DataError(std::string("missing score '") + key + "'");
    const auto& v = j[key];
    if (!v.is_number_integer()) throw DataError(std::string("score '") + key + "' must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < 1 || x > 5) throw DataError(std::string("score '") + key + "' must be in 1..5");
    return static_cast<int>(x);
  };
  r.fluency = score("fluency");
  r.correctness = score("correctness");
  r.cooperation = score("cooperation");
  r.human_likeness = score("human_likeness");
  if (j.contains("comment")) {
    if (!j["comment"].is_string()) throw DataError("comment must be a string");
    r.comment = j["comment"].get<std::string>();
  }
  if (j.contains("rater") && j["rater"].is_string()) {
    const auto s = j["rater"].get<std::string>();
    if (s == "A") r.rater = Side::A;
    else if (s == "B") r.rater = Side::B;
    else throw DataError("rater must be A or B");
  }
  return r;
}

json rating_to_json(const Rating& r) {
  json j{{"session_id", r.session_id},   {"fluency", r.fluency},
         {"correctness", r.correctness}, {"cooperation", r.cooperation},
         {"human_likeness", r.human_likeness}, {"comment", r.comment}};
  if (r.rater) j["rater"] = to_string(*r.rater);
  return j;
}

// ---------------------------------------------------------------- store

namespace {

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

bool safe_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'; });
}

}  // namespace

Store::Store(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_ / "transcripts", ec);
  fs::create_directories(dir_ / "ratings", ec);
  if (!fs::is_directory(dir_ / "transcripts") || !fs::is_directory(dir_ / "ratings"))
    throw DataError("storage unavailable: " + dir_.string());
  // Leftovers of interrupted writes.
  for (const char* sub : {"transcripts", "ratings"})
    for (const auto& e : fs::directory_iterator(dir_ / sub))
      if (e.path().extension() == ".tmp") fs::remove(e.path(), ec);
  // Drop a torn trailing index line so appends start on a fresh line.
  const fs::path index = dir_ / "index.jsonl";
  if (fs::exists(index)) {
    std::ifstream in(index, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!all.empty() && all.back() != '\n') fs::resize_file(index, all.rfind('\n') == std::string::npos ? 0 : all.rfind('\n') + 1);
  }
  rating_seq_ = static_cast<int>(ratings().size());
}

fs::path Store::transcript_path(const std::string& id) const { return dir_ / "transcripts" / (id + ".jsonl"); }

void Store::append_index(const json& line) {
  std::ofstream out(dir_ / "index.jsonl", std::ios::app | std::ios::binary);
  if (!out) throw DataError("storage unavailable: " + dir_.string());
  out << line.dump() << '\n';
  out.flush();
  if (!out) throw DataError("index write failed in " + dir_.string());
}

std::string Store::save_transcript(const std::string& id, const Transcript& t, const Schema& schema) {
  if (!safe_id(id)) throw UsageError("bad record id '" + id + "'");
  if (has_transcript(id)) throw UsageError("transcript " + id + " already stored");
  write_atomically(transcript_path(id), transcript_to_jsonl(t, schema));
  append_index({{"kind", "transcript"}, {"id", id}, {"outcome", to_string(t.outcome)}});
  return id;
}

void Store::save_rating(const Rating& r) {
  if (!safe_id(r.session_id)) throw DataError("bad session id");
  const std::string file = r.session_id + "-" + std::to_string(rating_seq_++) + ".json";
  write_atomically(dir_ / "ratings" / file, rating_to_json(r).dump());
  append_index({{"kind", "rating"}, {"session_id", r.session_id}, {"file", file}});
}

namespace {

std::vector<json> index_lines(const fs::path& dir) {
  std::vector<json> out;
  std::ifstream in(dir / "index.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    auto j = json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_object()) out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

std::vector<std::string> Store::transcript_ids() const {
  std::vector<std::string> ids;
  for (const auto& j : index_lines(dir_))
    if (j.value("kind", "") == "transcript" && fs::exists(transcript_path(j.value("id", ""))))
      ids.push_back(j["id"].get<std::string>());
  return ids;
}

bool Store::has_transcript(const std::string& id) const {
  if (!safe_id(id)) return false;
  const auto ids = transcript_ids();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::vector<Rating> Store::ratings() const {
  std::vector<Rating> out;
  for (const auto& j : index_lines(dir_)) {
    if (j.value("kind", "") != "rating") continue;
    std::ifstream in(dir_ / "ratings" / j.value("file", ""));
    auto r = json::parse(in, nullptr, false);
    if (!r.is_discarded()) out.push_back(rating_from_json(r));
  }
  return out;
}

// ---------------------------------------------------------------- service

ChatService::ChatService(const Schema& schema, AgentResources bots, ServiceConfig config, std::uint64_t seed)
    : schema_(&schema),
      lexicon_(schema),
      bots_(bots),
      config_(std::move(config)),
      rng_(seed),
      store_(config_.storage) {
  bots_.lexicon = &lexicon_;
  double total = 0.0;
  for (const auto& [kind, w] : config_.mix) {
    if (w < 0.0) throw UsageError("negative weight for '" + kind + "'");
    total += w;
    if (kind != "human" && w > 0.0) {
      // Fails early when a model or resource is missing.
      const Scenario probe = generate_indexed_scenario(schema, config_.scenario_seed, 0);
      make_agent(kind, probe, Side::A, bots_, Rng(0));
    }
  }
  if (!(total > 0.0)) throw UsageError("opponent mix has no positive weight");
}

ChatService::~ChatService() = default;

void ChatService::send(ConnId c, json j) {
  j["v"] = kWireVersion;
  if (sink_) sink_(c, j.dump());
}

void ChatService::error(ConnId c, const std::string& msg) { send(c, {{"type", "error"}, {"message", msg}}); }

std::string ChatService::draw_opponent() {
  std::vector<std::string> kinds;
  std::vector<double> w;
  for (const auto& [k, x] : config_.mix) {
    kinds.push_back(k);
    w.push_back(x);
  }
  return kinds[rng_.categorical(w)];
}

void ChatService::on_message(ConnId c, const std::string& text, std::int64_t now) {
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return error(c, "malformed message");
  if (j.value("v", 0) != kWireVersion) return error(c, "unsupported protocol version");
  if (!j.contains("type") || !j["type"].is_string()) return error(c, "missing type");
  const auto type = j["type"].get<std::string>();
  if (type == "join") return handle_join(c, j, now);

  auto it = conns_.find(c);
  if (it == conns_.end()) return error(c, "join first");
  Conn& conn = it->second;
  if (type == "rate") {
    if (conn.last_session.empty()) return error(c, "no finished dialogue to rate");
    json body = j;
    body["session_id"] = conn.last_session;
    body.erase("rater");
    if (conn.side) body["rater"] = to_string(*conn.side);
    const auto [status, reply] = post_rating(body.dump());
    if (status != 201) return error(c, reply.value("error", "rating rejected"));
    return send(c, {{"type", "rated"}, {"session_id", conn.last_session}});
  }
  auto s = sessions_.find(conn.session);
  if (s == sessions_.end() || !conn.side) return error(c, "not in a dialogue");
  handle_in_session(*s->second, *conn.side, j, now);
  if (sessions_.count(conn.session)) finish_if_done(*sessions_.at(conn.session));
}

void ChatService::handle_join(ConnId c, const json& j, std::int64_t now) {
  if (conns_.count(c)) return error(c, "duplicate join");
  if (!j.contains("token") || !j["token"].is_string() || j["token"].get<std::string>().empty())
    return error(c, "join needs an anonymous token");
  const auto token = j["token"].get<std::string>();
  for (ConnId q : queue_)
    if (conns_.at(q).token == token) return error(c, "duplicate join");
  // Reconnection to a running dialogue.
  for (auto& [id, s] : sessions_)
    for (Side side : {Side::A, Side::B}) {
      const auto i = static_cast<std::size_t>(index_of(side));
      if (s->tokens[i] != token) continue;
      if (s->conns[i]) return error(c, "duplicate join");
      s->conns[i] = c;
      s->gone_since[i].reset();
      conns_[c] = Conn{token, id, side, ""};
      send_paired(*s, side, now);
      return;
    }
  conns_[c] = Conn{token, "", std::nullopt, ""};
  const bool humans_allowed = config_.mix.count("human") && config_.mix.at("human") > 0.0;
  if (humans_allowed && !queue_.empty()) {
    const auto k = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(queue_.size()) - 1));
    const ConnId partner = queue_[k];
    queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(k));
    start_session({{partner, conns_.at(partner).token}, {c, token}}, "", now);
    return;
  }
  const std::string opponent = draw_opponent();
  if (opponent == "human") {
    queue_.push_back(c);
    send(c, {{"type", "waiting"}});
    return;
  }
  start_session({{c, token}}, opponent, now);
}

void ChatService::start_session(std::vector<std::pair<ConnId, std::string>> humans, const std::string& bot_kind,
                                std::int64_t now) {
  auto s = std::make_unique<Live>();
  s->id = "d" + std::to_string(config_.scenario_seed) + "-" + std::to_string(next_session_++);
  s->scenario = std::make_unique<Scenario>(generate_indexed_scenario(*schema_, config_.scenario_seed, next_scenario_++));
  scenarios_[s->scenario->id] = scenario_to_json(*s->scenario, *schema_);
  // Random KB side for each participant.
  std::array<Side, 2> sides{Side::A, Side::B};
  if (rng_.bernoulli(0.5)) std::swap(sides[0], sides[1]);
  std::array<std::string, 2> kinds;
  for (std::size_t h = 0; h < humans.size(); ++h) {
    const auto i = static_cast<std::size_t>(index_of(sides[h]));
    s->conns[i] = humans[h].first;
    s->tokens[i] = humans[h].second;
    kinds[i] = "human";
    auto& conn = conns_.at(humans[h].first);
    conn.session = s->id;
    conn.side = sides[h];
  }
  if (!bot_kind.empty()) {
    s->bot_side = sides[1];
    kinds[static_cast<std::size_t>(index_of(sides[1]))] = bot_kind;
    s->bot = make_agent(bot_kind, *s->scenario, sides[1], bots_, Rng::derive(rng_.uniform_int(0, 1 << 30), next_session_));
    s->bot_wants_turn = sides[1] == Side::A;  // A opens, as in simulated play
  }
  s->session = std::make_unique<LiveSession>(*s->scenario, lexicon_, kinds, now, config_.limits);
  s->last_activity = now;
  Live& ref = *s;
  sessions_[ref.id] = std::move(s);
  for (std::size_t h = 0; h < humans.size(); ++h) send_paired(ref, sides[h], now);
  if (ref.bot) run_bot(ref, now);
}

void ChatService::send_paired(Live& s, Side side, std::int64_t now) {
  const auto i = static_cast<std::size_t>(index_of(side));
  const Scenario& sc = *s.scenario;
  json attrs = json::array();
  for (const auto& a : sc.attrs) attrs.push_back(schema_->attributes()[static_cast<std::size_t>(a.attribute)].name);
  json kb = json::array();
  for (const auto& item : sc.kbs[i].items) {
    json row = json::object();
    for (std::size_t col = 0; col < item.size(); ++col) row[attrs[col].get<std::string>()] = schema_->entity(item[col]).canonical;
    kb.push_back(std::move(row));
  }
  const auto elapsed = now - s.session->start_ms();
  send(*s.conns[i], {{"type", "paired"},
                     {"session_id", s.id},
                     {"side", to_string(side)},
                     {"scenario_view", {{"id", sc.id}, {"attributes", attrs}, {"n_items", sc.n_items}}},
                     {"kb", kb},
                     {"deadline_ms", std::max<std::int64_t>(0, config_.limits.wall_ms - elapsed)},
                     {"throttle_ms", config_.limits.throttle_ms}});
}

void ChatService::broadcast(Live& s, const Event& ev) {
  s.last_activity = s.session->start_ms() + ev.time_ms;
  for (Side side : {Side::A, Side::B}) {
    if (side == ev.agent) continue;
    const auto i = static_cast<std::size_t>(index_of(side));
    if (!s.conns[i]) continue;
    json e{{"kind", to_string(ev.kind)}, {"t", ev.time_ms}};
    if (ev.kind == EventKind::utterance) e["text"] = ev.text;
    send(*s.conns[i], {{"type", "partner_event"}, {"event", e}});
  }
  if (s.bot) s.bot->observe(*s.bot_side == ev.agent ? ev : redact_for_partner(ev));
}

void ChatService::handle_in_session(Live& s, Side side, const json& j, std::int64_t now) {
  const auto i = static_cast<std::size_t>(index_of(side));
  const ConnId c = *s.conns[i];
  if (s.session->finished()) return error(c, "dialogue already finished");
  const auto type = j["type"].get<std::string>();
  if (type == "utterance") {
    if (!j.contains("text") || !j["text"].is_string()) return error(c, "utterance needs text");
    const auto text = j["text"].get<std::string>();
    if (text.empty() || text.size() > 1000) return error(c, "utterance text must be 1..1000 characters");
    broadcast(s, s.session->utterance(side, text, now));
  } else if (type == "typing") {
    broadcast(s, s.session->typing(side, now));
    return;  // typing alone does not wake the bot
  } else if (type == "select") {
    if (!j.contains("item_index") || !j["item_index"].is_number_integer()) return error(c, "select needs item_index");
    const auto item = j["item_index"].get<std::int64_t>();
    if (item < 0 || item >= static_cast<std::int64_t>(s.scenario->kbs[i].items.size()))
      return error(c, "item_index outside your list");
    const auto r = s.session->select(side, static_cast<int>(item), now);
    if (!r.accepted) return send(c, {{"type", "select_rejected"}, {"retry_after_ms", r.retry_after_ms}});
    send(c, {{"type", "select"}, {"item_index", item}});
    broadcast(s, s.session->transcript().events.back());
  } else {
    return error(c, "unknown message type '" + type + "'");
  }
  if (s.bot && !s.session->finished()) {
    s.bot_wants_turn = true;
    run_bot(s, now);
  }
}

void ChatService::run_bot(Live& s, std::int64_t now) {
  // Drain due actions, then let the bot act again if it owes a reply.
  for (;;) {
    while (!s.bot_queue.empty() && s.bot_queue.front().at <= now && !s.session->finished()) {
      const Pending p = s.bot_queue.front();
      s.bot_queue.pop_front();
      const Side b = *s.bot_side;
      switch (p.kind) {
        case Pending::typing: broadcast(s, s.session->typing(b, p.at)); break;
        case Pending::utterance: broadcast(s, s.session->utterance(b, p.text, p.at)); break;
        case Pending::select:
          if (s.session->select(b, p.item, p.at).accepted) broadcast(s, s.session->transcript().events.back());
          break;
      }
    }
    if (s.session->finished() || !s.bot_queue.empty() || !s.bot_wants_turn) return;
    bot_activate(s, now);
  }
}

void ChatService::bot_activate(Live& s, std::int64_t now) {
  s.bot_wants_turn = false;
  const Side b = *s.bot_side;
  const AgentTurn out = s.bot->act(now - s.session->start_ms(), s.session->can_select(b, now));
  const KB& kb = s.scenario->kbs[static_cast<std::size_t>(index_of(b))];
  auto scaled = [&](std::int64_t t) { return now + std::llround(static_cast<double>(t - now) * config_.time_scale); };
  std::int64_t last = now;
  for (const auto& send : pace_outgoing(out.utterances, now, lexicon_, kb, rng_, config_.pacing)) {
    s.bot_queue.push_back({scaled(send.typing_ms), Pending::typing, "", -1});
    s.bot_queue.push_back({scaled(send.send_ms), Pending::utterance, send.text, -1});
    last = scaled(send.send_ms);
  }
  if (out.select) s.bot_queue.push_back({last, Pending::select, "", *out.select});
}

void ChatService::tick(std::int64_t now) {
  std::vector<std::string> ids;
  for (const auto& [id, _] : sessions_) ids.push_back(id);
  for (const auto& id : ids) {
    Live& s = *sessions_.at(id);
    if (s.bot && !s.session->finished()) {
      if (s.bot_queue.empty() && now - s.last_activity >= config_.bot_idle_ms) s.bot_wants_turn = true;
      run_bot(s, now);
    }
    s.session->check_timeout(now);
    for (Side side : {Side::A, Side::B}) {
      const auto& gone = s.gone_since[static_cast<std::size_t>(index_of(side))];
      if (gone && now - *gone >= config_.disconnect_grace_ms) s.session->abandon(side, now);
    }
    finish_if_done(s);
  }
}

void ChatService::finish_if_done(Live& s) {
  if (!s.session->finished()) return;
  const Transcript& t = s.session->transcript();
  for (Side side : {Side::A, Side::B}) {
    const auto& c = s.conns[static_cast<std::size_t>(index_of(side))];
    if (!c) continue;
    send(*c, {{"type", "end"}, {"session_id", s.id}, {"outcome", to_string(t.outcome)}});
    auto& conn = conns_.at(*c);
    conn.session.clear();
    conn.last_session = s.id;
  }
  store_.save_transcript(s.id, t, *schema_);
  sessions_.erase(s.id);
}

void ChatService::on_disconnect(ConnId c, std::int64_t now) {
  auto it = conns_.find(c);
  if (it == conns_.end()) return;
  queue_.erase(std::remove(queue_.begin(), queue_.end(), c), queue_.end());
  auto s = sessions_.find(it->second.session);
  if (s != sessions_.end() && it->second.side) {
    const auto i = static_cast<std::size_t>(index_of(*it->second.side));
    s->second->conns[i].reset();
    s->second->gone_since[i] = now;
  }
  conns_.erase(it);
}

json ChatService::health() const {
  return {{"status", "ok"}, {"v", kWireVersion}, {"waiting", queue_.size()}, {"sessions", sessions_.size()}};
}

std::optional<json> ChatService::scenario_json(const std::string& id) const {
  auto it = scenarios_.find(id);
  if (it == scenarios_.end()) return std::nullopt;
  return std::optional<json>(std::in_place, it->second);
}

std::pair<int, json> ChatService::post_rating(const std::string& body) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return {400, {{"error", "body is not JSON"}}};
  try {
    Rating r = rating_from_json(j);
    if (r.session_id.empty()) return {400, {{"error", "missing session_id"}}};
    if (!store_.has_transcript(r.session_id)) return {404, {{"error", "unknown or unfinished session"}}};
    store_.save_rating(r);
    return {201, {{"status", "stored"}, {"session_id", r.session_id}}};
  } catch (const DataError& e) {
    return {400, {{"error", e.what()}}};
  }
}

}  // namespace mutual
