#include <gtest/gtest.h>

#include "mutual/error.hpp"
#include "mutual/transcript.hpp"

using namespace mutual;

namespace {

Transcript sample(const Schema& schema, const Lexicon& lex) {
  Transcript t;
  t.scenario = generate_indexed_scenario(schema, 3, 1);
  t.scenario_id = t.scenario->id;
  t.agent_kinds = {"rule", "human"};
  t.events.push_back({0, Side::A, EventKind::typing, 0, "", std::nullopt, {}, {}});
  t.events.push_back(make_utterance_event(1500, Side::A, 0, "hi , anyone went to columbia ?", lex, t.scenario->kbs[0]));
  t.events.push_back(make_utterance_event(4200, Side::B, 1, "no , google", lex, t.scenario->kbs[1]));
  t.events.push_back({9000, Side::B, EventKind::select, 1, "", 2, {}, {}});
  t.outcome = Outcome::failure;
  t.cause = "turn cap";
  t.final_selection = {std::nullopt, 2};
  t.turns = 2;
  return t;
}

}  // namespace

TEST(Transcript, UtteranceEventCarriesLinksAndActs) {
  Schema schema = default_schema();
  Lexicon lex(schema);
  KB kb;
  Event ev = make_utterance_event(10, Side::B, 3, "anyone went to columbia ?", lex, kb);
  ASSERT_EQ(ev.links.size(), 1u);
  EXPECT_EQ(ev.links[0].entity_id, "columbia-university");
  EXPECT_EQ(ev.links[0].span, "columbia");
  EXPECT_EQ(ev.links[0].start, 3u);
  EXPECT_TRUE(ev.acts.contains(SpeechAct::ask));
  EXPECT_EQ(ev.turn, 3);
}

TEST(Transcript, JsonlRoundTrip) {
  Schema schema = default_schema();
  Lexicon lex(schema);
  Transcript t = sample(schema, lex);
  const std::string text = transcript_to_jsonl(t, schema) + transcript_to_jsonl(t, schema);
  auto back = parse_transcripts(text, schema);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].events, t.events);
  EXPECT_EQ(back[0].final_selection, t.final_selection);
  EXPECT_EQ(back[0].agent_kinds, t.agent_kinds);
  EXPECT_EQ(back[0].cause, "turn cap");
  ASSERT_TRUE(back[0].scenario);
  EXPECT_EQ(back[0].scenario->kbs[1], t.scenario->kbs[1]);
  EXPECT_EQ(transcript_to_jsonl(back[1], schema), transcript_to_jsonl(t, schema));
}

TEST(Transcript, TruncatedFileIsDataError) {
  Schema schema = default_schema();
  Lexicon lex(schema);
  std::string text = transcript_to_jsonl(sample(schema, lex), schema);
  text.resize(text.rfind('\n', text.size() - 2) + 1);
  EXPECT_THROW(parse_transcripts(text, schema), DataError);
  EXPECT_THROW(parse_transcripts("{\"type\":\"event\"}\n", schema), DataError);
  EXPECT_THROW(parse_transcripts("not json\n", schema), DataError);
}
