#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mutual/agent.hpp"
#include "mutual/lexicon.hpp"
#include "mutual/transcript.hpp"

namespace mutual {

struct Limits {
  std::int64_t wall_ms = 300'000;
  std::int64_t throttle_ms = 10'000;
  int turn_cap = 46;
};

// Typing speed and delays of the bots' outgoing messages.
struct Pacing {
  double chars_per_sec = 7.0;
  double typing_jitter_s = 1.5;  // U(0, jitter) added to each typing delay
  double gap_min_s = 1.0, gap_max_s = 2.0;
  int max_per_burst = 2;
};

struct ScheduledSend {
  std::int64_t typing_ms = 0;  // typing starts
  std::int64_t send_ms = 0;
  std::string text;
};

// Applies the one-or-two rule to a bot's candidates: the first utterance is
// always sent; a second follows only if the first mentions no entity.
std::vector<ScheduledSend> pace_outgoing(const std::vector<std::string>& candidates, std::int64_t start_ms,
                                         const Lexicon& lexicon, const KB& speaker_kb, Rng& rng,
                                         const Pacing& pacing = {});

struct SelectResult {
  bool accepted = false;
  std::int64_t retry_after_ms = 0;
};

// Selection state of a dialogue: per-agent throttle and latest choice.
class SelectionTracker {
 public:
  explicit SelectionTracker(std::int64_t throttle_ms = 10'000) : throttle_ms_(throttle_ms) {}
  // Throws UsageError when `item` is not a row of the agent's KB.
  SelectResult select(Side agent, int item, std::int64_t now_ms, std::size_t kb_size);
  bool can_select(Side agent, std::int64_t now_ms) const;
  const std::array<std::optional<int>, 2>& current() const { return current_; }
  bool succeeded(const Scenario& scenario) const;

 private:
  std::int64_t throttle_ms_;
  std::array<std::optional<std::int64_t>, 2> last_;
  std::array<std::optional<int>, 2> current_;
};

bool is_shared_item(const Scenario& scenario, Side agent, int row);

// The event a partner is allowed to see.
Event redact_for_partner(const Event& ev);

// Bot-vs-bot dialogue on a simulated clock: agents are activated
// alternately (A first), each activation is one turn (burst).
Transcript run_dialogue(Agent& a, Agent& b, const Scenario& scenario, const Lexicon& lexicon, Rng& rng,
                        const Limits& limits = {}, const Pacing& pacing = {});

struct ValidatorOptions {
  std::array<bool, 2> paced{true, true};  // which agents are bots held to the pacing rules
  Limits limits;
  Pacing pacing;
};

// Post-hoc check of event order, pacing, throttle and outcome.
std::vector<std::string> validate_transcript(const Transcript& t, const Scenario& scenario, const Lexicon& lexicon,
                                             const ValidatorOptions& options = {});

// A live dialogue whose events arrive from outside (real clock): the
// session core behind the chat service.
class LiveSession {
 public:
  LiveSession(const Scenario& scenario, const Lexicon& lexicon, std::array<std::string, 2> agent_kinds,
              std::int64_t start_ms, Limits limits = {});

  const Scenario& scenario() const { return scenario_; }
  const Transcript& transcript() const { return transcript_; }
  bool finished() const { return finished_; }
  std::int64_t start_ms() const { return start_ms_; }
  int turn_of(Side s) const;

  const Event& utterance(Side agent, const std::string& text, std::int64_t now_ms);
  const Event& typing(Side agent, std::int64_t now_ms);
  // Logs accepted selections; may finish the dialogue with success.
  SelectResult select(Side agent, int item, std::int64_t now_ms);
  bool can_select(Side agent, std::int64_t now_ms) const { return selections_.can_select(agent, now_ms); }
  // Ends with timeout once the wall limit has passed; returns finished().
  bool check_timeout(std::int64_t now_ms);
  void abandon(Side who, std::int64_t now_ms);

 private:
  Event& log(Event ev);
  void finish(Outcome o, std::string cause);

  Scenario scenario_;
  const Lexicon* lexicon_;
  Limits limits_;
  std::int64_t start_ms_;
  Transcript transcript_;
  SelectionTracker selections_;
  std::optional<Side> last_speaker_;
  int turn_ = -1;
  bool finished_ = false;
};

}  // namespace mutual
