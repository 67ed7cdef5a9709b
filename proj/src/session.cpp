#include "mutual/session.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mutual/error.hpp"

namespace mutual {

namespace {

std::int64_t to_ms(double seconds) { return static_cast<std::int64_t>(std::llround(seconds * 1000.0)); }

const KB& kb_of(const Scenario& sc, Side s) { return sc.kbs[static_cast<std::size_t>(index_of(s))]; }

bool mentions_entity(const std::string& text, const Lexicon& lexicon, const KB& kb) {
  const auto toks = tokenize(text);
  for (const auto& lt : link_entities(toks, lexicon, kb))
    if (lt.entity) return true;
  return false;
}

}  // namespace

std::vector<ScheduledSend> pace_outgoing(const std::vector<std::string>& candidates, std::int64_t start_ms,
                                         const Lexicon& lexicon, const KB& speaker_kb, Rng& rng,
                                         const Pacing& pacing) {
  std::vector<ScheduledSend> out;
  std::int64_t t = start_ms;
  for (const auto& text : candidates) {
    if (static_cast<int>(out.size()) >= pacing.max_per_burst) break;
    if (!out.empty()) {
      if (mentions_entity(out.front().text, lexicon, speaker_kb)) break;
      t += to_ms(rng.uniform(pacing.gap_min_s, pacing.gap_max_s));
    }
    ScheduledSend s;
    s.typing_ms = t;
    const double typing = static_cast<double>(text.size()) / pacing.chars_per_sec + rng.uniform(0.0, pacing.typing_jitter_s);
    t += to_ms(typing);
    s.send_ms = t;
    s.text = text;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------- selection

SelectResult SelectionTracker::select(Side agent, int item, std::int64_t now_ms, std::size_t kb_size) {
  if (item < 0 || static_cast<std::size_t>(item) >= kb_size)
    throw UsageError("selected item " + std::to_string(item) + " is not in the agent's KB");
  const auto i = static_cast<std::size_t>(index_of(agent));
  if (last_[i] && now_ms - *last_[i] < throttle_ms_) return {false, *last_[i] + throttle_ms_ - now_ms};
  last_[i] = now_ms;
  current_[i] = item;
  return {true, 0};
}

bool SelectionTracker::can_select(Side agent, std::int64_t now_ms) const {
  const auto& last = last_[static_cast<std::size_t>(index_of(agent))];
  return !last || now_ms - *last >= throttle_ms_;
}

bool is_shared_item(const Scenario& scenario, Side agent, int row) {
  const auto& kb = kb_of(scenario, agent);
  if (row < 0 || static_cast<std::size_t>(row) >= kb.items.size()) return false;
  return kb.items[static_cast<std::size_t>(row)] == shared_item(scenario);
}

bool SelectionTracker::succeeded(const Scenario& scenario) const {
  return current_[0] && current_[1] && is_shared_item(scenario, Side::A, *current_[0]) &&
         is_shared_item(scenario, Side::B, *current_[1]);
}

Event redact_for_partner(const Event& ev) {
  Event r = ev;
  r.item.reset();
  return r;
}

// ---------------------------------------------------------------- simulated dialogue

Transcript run_dialogue(Agent& a, Agent& b, const Scenario& scenario, const Lexicon& lexicon, Rng& rng,
                        const Limits& limits, const Pacing& pacing) {
  Transcript t;
  t.scenario_id = scenario.id;
  t.scenario = scenario;
  t.agent_kinds = {a.kind(), b.kind()};
  std::array<Agent*, 2> agents{&a, &b};
  SelectionTracker selections(limits.throttle_ms);
  std::int64_t now = 0;

  auto emit = [&](const Event& ev) {
    t.events.push_back(ev);
    for (Side s : {Side::A, Side::B})
      agents[static_cast<std::size_t>(index_of(s))]->observe(s == ev.agent ? ev : redact_for_partner(ev));
  };

  t.outcome = Outcome::failure;
  for (int turn = 0;; ++turn) {
    if (turn >= limits.turn_cap) {
      t.cause = "turn_cap";
      break;
    }
    const Side s = turn % 2 == 0 ? Side::A : Side::B;
    Agent& agent = *agents[static_cast<std::size_t>(index_of(s))];
    const KB& kb = kb_of(scenario, s);
    t.turns = turn + 1;
    try {
      const AgentTurn out = agent.act(now, selections.can_select(s, now));
      for (const auto& send : pace_outgoing(out.utterances, now, lexicon, kb, rng, pacing)) {
        Event typing;
        typing.time_ms = send.typing_ms;
        typing.agent = s;
        typing.kind = EventKind::typing;
        typing.turn = turn;
        emit(typing);
        emit(make_utterance_event(send.send_ms, s, turn, send.text, lexicon, kb));
        now = send.send_ms;
      }
      if (out.select && selections.select(s, *out.select, now, kb.items.size()).accepted) {
        Event sel;
        sel.time_ms = now;
        sel.agent = s;
        sel.kind = EventKind::select;
        sel.turn = turn;
        sel.item = out.select;
        emit(sel);
        if (selections.succeeded(scenario)) {
          t.outcome = Outcome::success;
          break;
        }
      }
    } catch (const std::exception& e) {
      t.cause = std::string("agent_error(") + to_string(s) + "): " + e.what();
      break;
    }
  }
  t.final_selection = selections.current();
  return t;
}

// ---------------------------------------------------------------- validator

std::vector<std::string> validate_transcript(const Transcript& t, const Scenario& scenario, const Lexicon& lexicon,
                                             const ValidatorOptions& options) {
  std::vector<std::string> bad;
  auto fail = [&](std::size_t i, const std::string& msg) {
    bad.push_back("event " + std::to_string(i) + ": " + msg);
  };
  const auto& P = options.pacing;
  const auto& ev = t.events;

  for (std::size_t i = 1; i < ev.size(); ++i)
    if (ev[i].time_ms < ev[i - 1].time_ms) fail(i, "timestamp decreases");

  // Pacing, per agent burst.
  struct Burst {
    std::vector<std::size_t> idx;
  };
  std::map<std::pair<int, int>, Burst> bursts;
  for (std::size_t i = 0; i < ev.size(); ++i) bursts[{index_of(ev[i].agent), ev[i].turn}].idx.push_back(i);
  for (const auto& [key, burst] : bursts) {
    if (!options.paced[static_cast<std::size_t>(key.first)]) continue;
    const KB& kb = scenario.kbs[static_cast<std::size_t>(key.first)];
    std::vector<std::size_t> utts;
    for (std::size_t i : burst.idx)
      if (ev[i].kind == EventKind::utterance) utts.push_back(i);
    if (static_cast<int>(utts.size()) > P.max_per_burst) fail(utts.back(), "more utterances than allowed in one burst");
    if (utts.size() > 1 && mentions_entity(ev[utts[0]].text, lexicon, kb))
      fail(utts[1], "second utterance after an entity-bearing one");
    std::optional<std::int64_t> prev_send;
    for (std::size_t i : utts) {
      const auto pos = std::find(burst.idx.begin(), burst.idx.end(), i);
      if (pos == burst.idx.begin() || ev[*(pos - 1)].kind != EventKind::typing) {
        fail(i, "utterance without a preceding typing event");
        continue;
      }
      const std::int64_t typing = ev[*(pos - 1)].time_ms;
      const double lo = static_cast<double>(ev[i].text.size()) / P.chars_per_sec * 1000.0;
      const double hi = lo + P.typing_jitter_s * 1000.0;
      const auto d = static_cast<double>(ev[i].time_ms - typing);
      if (d < lo - 1.0 || d > hi + 1.0) fail(i, "typing delay " + std::to_string(d) + " ms out of range");
      if (prev_send) {
        const auto gap = static_cast<double>(typing - *prev_send);
        if (gap < P.gap_min_s * 1000.0 - 1.0 || gap > P.gap_max_s * 1000.0 + 1.0)
          fail(i, "inter-utterance gap " + std::to_string(gap) + " ms out of range");
      }
      prev_send = ev[i].time_ms;
    }
  }

  // Selections.
  std::array<std::optional<std::int64_t>, 2> last;
  std::array<std::optional<int>, 2> current;
  bool done = false;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (done) {
      fail(i, "event after the dialogue succeeded");
      break;
    }
    if (ev[i].kind != EventKind::select) continue;
    const auto s = static_cast<std::size_t>(index_of(ev[i].agent));
    if (!ev[i].item || *ev[i].item < 0 || static_cast<std::size_t>(*ev[i].item) >= scenario.kbs[s].items.size()) {
      fail(i, "selection outside the agent's KB");
      continue;
    }
    if (last[s] && ev[i].time_ms - *last[s] < options.limits.throttle_ms) fail(i, "selection throttle violated");
    last[s] = ev[i].time_ms;
    current[s] = ev[i].item;
    done = current[0] && current[1] && is_shared_item(scenario, Side::A, *current[0]) &&
           is_shared_item(scenario, Side::B, *current[1]);
  }
  if (done != (t.outcome == Outcome::success)) bad.push_back("outcome does not match the final selections");
  if (current != t.final_selection) bad.push_back("final_selection does not match the select events");
  return bad;
}

// ---------------------------------------------------------------- live session

LiveSession::LiveSession(const Scenario& scenario, const Lexicon& lexicon, std::array<std::string, 2> agent_kinds,
                         std::int64_t start_ms, Limits limits)
    : scenario_(scenario), lexicon_(&lexicon), limits_(limits), start_ms_(start_ms), selections_(limits.throttle_ms) {
  transcript_.scenario_id = scenario_.id;
  transcript_.scenario = scenario_;
  transcript_.agent_kinds = std::move(agent_kinds);
}

int LiveSession::turn_of(Side s) const { return last_speaker_ == s ? turn_ : turn_ + 1; }

Event& LiveSession::log(Event ev) {
  if (finished_) throw UsageError("dialogue already finished");
  ev.time_ms = std::max(ev.time_ms - start_ms_, transcript_.events.empty() ? 0 : transcript_.events.back().time_ms);
  if (last_speaker_ != ev.agent) {
    ++turn_;
    last_speaker_ = ev.agent;
  }
  ev.turn = turn_;
  transcript_.turns = turn_ + 1;
  transcript_.events.push_back(std::move(ev));
  return transcript_.events.back();
}

const Event& LiveSession::utterance(Side agent, const std::string& text, std::int64_t now_ms) {
  return log(make_utterance_event(now_ms, agent, 0, text, *lexicon_, kb_of(scenario_, agent)));
}

const Event& LiveSession::typing(Side agent, std::int64_t now_ms) {
  Event ev;
  ev.time_ms = now_ms;
  ev.agent = agent;
  ev.kind = EventKind::typing;
  return log(ev);
}

SelectResult LiveSession::select(Side agent, int item, std::int64_t now_ms) {
  if (finished_) throw UsageError("dialogue already finished");
  const auto r = selections_.select(agent, item, now_ms, kb_of(scenario_, agent).items.size());
  if (!r.accepted) return r;
  Event ev;
  ev.time_ms = now_ms;
  ev.agent = agent;
  ev.kind = EventKind::select;
  ev.item = item;
  log(ev);
  transcript_.final_selection = selections_.current();
  if (selections_.succeeded(scenario_)) finish(Outcome::success, "");
  return r;
}

bool LiveSession::check_timeout(std::int64_t now_ms) {
  if (!finished_ && now_ms - start_ms_ >= limits_.wall_ms) finish(Outcome::timeout, "wall_limit");
  return finished_;
}

void LiveSession::abandon(Side who, std::int64_t) {
  if (!finished_) finish(Outcome::failure, std::string("abandoned_by_") + to_string(who));
}

void LiveSession::finish(Outcome o, std::string cause) {
  finished_ = true;
  transcript_.outcome = o;
  transcript_.cause = std::move(cause);
  transcript_.final_selection = selections_.current();
}

}  // namespace mutual
