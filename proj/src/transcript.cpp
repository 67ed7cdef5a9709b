#include "mutual/transcript.hpp"

#include <fstream>
#include <sstream>

#include "mutual/error.hpp"

namespace mutual {

const char* to_string(Side s) { return s == Side::A ? "A" : "B"; }

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::utterance: return "utterance";
    case EventKind::select: return "select";
    case EventKind::typing: return "typing";
  }
  return "?";
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::failure: return "failure";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

namespace {

Side side_from(const std::string& s) {
  if (s == "A") return Side::A;
  if (s == "B") return Side::B;
  throw DataError("bad agent '" + s + "'");
}

EventKind kind_from(const std::string& s) {
  for (auto k : {EventKind::utterance, EventKind::select, EventKind::typing})
    if (s == to_string(k)) return k;
  throw DataError("bad event kind '" + s + "'");
}

Outcome outcome_from(const std::string& s) {
  for (auto o : {Outcome::success, Outcome::failure, Outcome::timeout})
    if (s == to_string(o)) return o;
  throw DataError("bad outcome '" + s + "'");
}

nlohmann::json event_to_json(const Event& ev) {
  nlohmann::json j{{"type", "event"},
                   {"t", ev.time_ms},
                   {"agent", to_string(ev.agent)},
                   {"kind", to_string(ev.kind)},
                   {"turn", ev.turn}};
  if (ev.kind == EventKind::utterance) {
    j["text"] = ev.text;
    auto links = nlohmann::json::array();
    for (const auto& l : ev.links)
      links.push_back({{"start", l.start}, {"end", l.end}, {"span", l.span}, {"entity", l.entity_id}});
    j["links"] = links;
    auto acts = nlohmann::json::array();
    for (auto a : ev.acts.list()) acts.push_back(to_string(a));
    j["acts"] = acts;
  }
  if (ev.kind == EventKind::select) j["item"] = ev.item.value_or(-1);
  return j;
}

Event event_from_json(const nlohmann::json& j) {
  Event ev;
  ev.time_ms = j.at("t").get<std::int64_t>();
  ev.agent = side_from(j.at("agent").get<std::string>());
  ev.kind = kind_from(j.at("kind").get<std::string>());
  ev.turn = j.value("turn", 0);
  if (ev.kind == EventKind::utterance) {
    ev.text = j.at("text").get<std::string>();
    for (const auto& l : j.value("links", nlohmann::json::array()))
      ev.links.push_back({l.at("start").get<std::size_t>(), l.at("end").get<std::size_t>(),
                          l.at("span").get<std::string>(), l.at("entity").get<std::string>()});
    for (const auto& a : j.value("acts", nlohmann::json::array())) {
      auto act = speech_act_from_string(a.get<std::string>());
      if (!act) throw DataError("bad speech act " + a.dump());
      ev.acts.insert(*act);
    }
  }
  if (ev.kind == EventKind::select) {
    int item = j.at("item").get<int>();
    if (item < 0) throw DataError("select event without item");
    ev.item = item;
  }
  return ev;
}

nlohmann::json opt_int(const std::optional<int>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<int> int_opt(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<int>();
}

}  // namespace

std::size_t Transcript::count(EventKind k) const {
  std::size_t n = 0;
  for (const auto& ev : events) n += ev.kind == k;
  return n;
}

Event make_utterance_event(std::int64_t time_ms, Side agent, int turn, const std::string& text,
                           const Lexicon& lexicon, const KB& speaker_kb) {
  Event ev;
  ev.time_ms = time_ms;
  ev.agent = agent;
  ev.kind = EventKind::utterance;
  ev.turn = turn;
  ev.text = text;
  const auto tokens = tokenize(text);
  const auto linked = link_entities(tokens, lexicon, speaker_kb);
  for (const auto& lt : linked)
    if (lt.entity) ev.links.push_back({lt.begin, lt.end, lt.span, lexicon.schema().entity(*lt.entity).id});
  ev.acts = classify_utterance(tokens, linked);
  return ev;
}

std::vector<nlohmann::json> transcript_to_lines(const Transcript& t, const Schema& schema) {
  std::vector<nlohmann::json> lines;
  nlohmann::json h{{"type", "header"},
                   {"version", 1},
                   {"scenario_id", t.scenario_id},
                   {"outcome", to_string(t.outcome)},
                   {"cause", t.cause},
                   {"agents", {t.agent_kinds[0], t.agent_kinds[1]}},
                   {"final_selection", {opt_int(t.final_selection[0]), opt_int(t.final_selection[1])}},
                   {"turns", t.turns},
                   {"n_events", t.events.size()}};
  h["scenario"] = t.scenario ? scenario_to_json(*t.scenario, schema) : nlohmann::json(nullptr);
  lines.push_back(std::move(h));
  for (const auto& ev : t.events) lines.push_back(event_to_json(ev));
  return lines;
}

std::string transcript_to_jsonl(const Transcript& t, const Schema& schema) {
  std::string out;
  for (const auto& line : transcript_to_lines(t, schema)) {
    out += line.dump();
    out += '\n';
  }
  return out;
}

void write_transcripts(const std::vector<Transcript>& ts, const Schema& schema, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : ts) out << transcript_to_jsonl(t, schema);
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Transcript> parse_transcripts(const std::string& text, const Schema& schema) {
  std::vector<Transcript> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        if (expected != 0) throw DataError("transcript truncated before new header");
        Transcript t;
        t.scenario_id = j.at("scenario_id").get<std::string>();
        t.outcome = outcome_from(j.at("outcome").get<std::string>());
        t.cause = j.value("cause", "");
        const auto& agents = j.at("agents");
        t.agent_kinds = {agents.at(0).get<std::string>(), agents.at(1).get<std::string>()};
        const auto& fs = j.at("final_selection");
        t.final_selection = {int_opt(fs.at(0)), int_opt(fs.at(1))};
        t.turns = j.value("turns", 0);
        if (j.contains("scenario") && !j["scenario"].is_null())
          t.scenario = scenario_from_json(j["scenario"], schema);
        expected = j.at("n_events").get<std::size_t>();
        out.push_back(std::move(t));
      } else if (type == "event") {
        if (out.empty() || expected == 0) throw DataError("event without header");
        out.back().events.push_back(event_from_json(j));
        --expected;
      } else {
        throw DataError("unknown line type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("transcript line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("transcript line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (expected != 0) throw DataError("transcript file truncated");
  return out;
}

std::vector<Transcript> read_transcripts(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_transcripts(ss.str(), schema);
}

}  // namespace mutual
