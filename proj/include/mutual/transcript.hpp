#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mutual/lexicon.hpp"
#include "mutual/scenario.hpp"
#include "mutual/schema.hpp"

namespace mutual {

enum class Side : std::uint8_t { A = 0, B = 1 };
inline int index_of(Side s) { return static_cast<int>(s); }
inline Side other(Side s) { return s == Side::A ? Side::B : Side::A; }
const char* to_string(Side s);

enum class EventKind : std::uint8_t { utterance, select, typing };
const char* to_string(EventKind k);

enum class Outcome : std::uint8_t { success, failure, timeout };
const char* to_string(Outcome o);

// Entity mention inside an utterance, by token range.
struct EntityLink {
  std::size_t start = 0, end = 0;
  std::string span;
  std::string entity_id;
  bool operator==(const EntityLink&) const = default;
};

struct Event {
  std::int64_t time_ms = 0;
  Side agent = Side::A;
  EventKind kind = EventKind::utterance;
  int turn = 0;                 // index of the burst this event belongs to
  std::string text;             // utterance only
  std::optional<int> item;      // select only: row in the selecting agent's KB
  std::vector<EntityLink> links;
  ActSet acts;
  bool operator==(const Event&) const = default;
};

struct Transcript {
  std::string scenario_id;
  std::optional<Scenario> scenario;
  std::vector<Event> events;
  Outcome outcome = Outcome::failure;
  std::string cause;  // why a failed dialogue ended
  std::array<std::string, 2> agent_kinds;
  std::array<std::optional<int>, 2> final_selection;
  int turns = 0;

  std::size_t count(EventKind k) const;
};

// Links and classifies one utterance against the speaker's KB.
Event make_utterance_event(std::int64_t time_ms, Side agent, int turn, const std::string& text,
                           const Lexicon& lexicon, const KB& speaker_kb);

// Line-oriented serialization: one header object followed by one object per
// event. A corpus file is a concatenation of such blocks.
std::vector<nlohmann::json> transcript_to_lines(const Transcript& t, const Schema& schema);
std::string transcript_to_jsonl(const Transcript& t, const Schema& schema);
void write_transcripts(const std::vector<Transcript>& ts, const Schema& schema, const std::filesystem::path& path);
std::vector<Transcript> parse_transcripts(const std::string& text, const Schema& schema);
std::vector<Transcript> read_transcripts(const std::filesystem::path& path, const Schema& schema);

}  // namespace mutual
