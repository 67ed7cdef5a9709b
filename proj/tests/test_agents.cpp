#include <gtest/gtest.h>

#include "dyno_fixtures.hpp"
#include "mutual/agents.hpp"
#include "mutual/error.hpp"
#include "mutual/session.hpp"

using namespace mutual;
using mutual::testing::default_lexicon;
using mutual::testing::default_schema_ref;

namespace {

struct World {
  TemplateTable templates = TemplateTable::bundled();
  SurfaceFormStore forms;
  std::vector<Scenario> scenarios = generate_scenarios(default_schema_ref(), 8, 17);
  std::vector<Transcript> corpus;
  std::unique_ptr<DynoNet> dyno, stano;

  World() {
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      RuleBot a(scenarios[i], Side::A, default_lexicon(), templates, forms, Rng::derive(1, 2 * i));
      RuleBot b(scenarios[i], Side::B, default_lexicon(), templates, forms, Rng::derive(1, 2 * i + 1));
      Rng rng = Rng::derive(2, i);
      corpus.push_back(run_dialogue(a, b, scenarios[i], default_lexicon(), rng));
    }
    const Vocab vocab = build_vocab(corpus, default_lexicon());
    DynoConfig c = mutual::testing::tiny_config();
    Rng init(3);
    dyno = std::make_unique<DynoNet>(default_schema_ref(), c, vocab);
    dyno->init_params(init);
    c.dynamic = false;
    stano = std::make_unique<DynoNet>(default_schema_ref(), c, vocab);
    stano->init_params(init);
  }

  AgentResources resources(const Transcript* replay = nullptr) const {
    AgentResources r;
    r.lexicon = &default_lexicon();
    r.templates = &templates;
    r.forms = &forms;
    r.dynonet = dyno.get();
    r.stanonet = stano.get();
    r.replay = replay;
    return r;
  }
};

const World& world() {
  static const World w;
  return w;
}

Transcript play(const std::string& ka, const std::string& kb, std::size_t i, const AgentResources& res,
                std::uint64_t seed = 5) {
  const Scenario& sc = world().scenarios[i];
  auto a = make_agent(ka, sc, Side::A, res, Rng::derive(seed, 2 * i));
  auto b = make_agent(kb, sc, Side::B, res, Rng::derive(seed, 2 * i + 1));
  Rng rng = Rng::derive(seed + 1, i);
  return run_dialogue(*a, *b, sc, default_lexicon(), rng);
}

}  // namespace

TEST(NeuralAgent, PlaysValidDialoguesAgainstRule) {
  for (const char* kind : {"dynonet", "stanonet"}) {
    for (std::size_t i = 0; i < 3; ++i) {
      const Transcript t = play(kind, "rule", i, world().resources());
      EXPECT_EQ(t.agent_kinds[0], kind);
      EXPECT_TRUE(t.cause.find("agent_error") == std::string::npos) << t.cause;
      EXPECT_TRUE(validate_transcript(t, world().scenarios[i], default_lexicon()).empty());
      EXPECT_GT(t.count(EventKind::utterance), 0u);
    }
  }
}

TEST(NeuralAgent, Deterministic) {
  const auto res = world().resources();
  EXPECT_EQ(transcript_to_jsonl(play("dynonet", "dynonet", 1, res), default_schema_ref()),
            transcript_to_jsonl(play("dynonet", "dynonet", 1, res), default_schema_ref()));
}

TEST(NeuralAgent, SelectionsStayInOwnKb) {
  const auto res = world().resources();
  for (std::size_t i = 0; i < world().scenarios.size(); ++i) {
    const Transcript t = play("dynonet", "rule", i, res, 40);
    for (const Event& ev : t.events)
      if (ev.kind == EventKind::select) {
        ASSERT_TRUE(ev.item);
        EXPECT_LT(static_cast<std::size_t>(*ev.item),
                  world().scenarios[i].kbs[static_cast<std::size_t>(index_of(ev.agent))].items.size());
      }
  }
}

TEST(NeuralAgent, RealizesEntitiesAsText) {
  const Scenario& sc = world().scenarios[0];
  NeuralAgent agent(*world().dyno, sc, Side::A, default_lexicon(), world().forms, Rng(1));
  const EntityIndex google = default_schema_ref().require_entity("google");
  const auto& vocab = world().dyno->vocab();
  std::vector<Token> toks{{Token::word, vocab.id("i")}, {Token::entity, google}};
  EXPECT_EQ(agent.realize(toks), "i google");
}

TEST(ReplayAgent, ReproducesRecordedDialogue) {
  for (std::size_t i = 0; i < 4; ++i) {
    const Transcript& rec = world().corpus[i];
    const auto res = world().resources(&rec);
    auto a = make_agent("replay", world().scenarios[i], Side::A, res, Rng(0));
    auto b = make_agent("replay", world().scenarios[i], Side::B, res, Rng(0));
    Rng rng = Rng::derive(2, i);  // the session stream of the recording
    Transcript t = run_dialogue(*a, *b, world().scenarios[i], default_lexicon(), rng);
    EXPECT_EQ(t.events, rec.events);
    EXPECT_EQ(t.outcome, rec.outcome);
    EXPECT_EQ(t.agent_kinds[0], "replay");
  }
}

TEST(ReplayAgent, EmptyWhenExhausted) {
  Transcript rec;
  ReplayAgent r(rec, Side::A);
  EXPECT_TRUE(r.exhausted());
  const AgentTurn t = r.act(0, true);
  EXPECT_TRUE(t.utterances.empty());
  EXPECT_FALSE(t.select);
}

TEST(AgentFactory, Errors) {
  const Scenario& sc = world().scenarios[0];
  AgentResources res = world().resources();
  EXPECT_THROW(make_agent("oracle", sc, Side::A, res, Rng(0)), UsageError);
  EXPECT_THROW(make_agent("replay", sc, Side::A, res, Rng(0)), UsageError);
  res.dynonet = nullptr;
  EXPECT_THROW(make_agent("dynonet", sc, Side::A, res, Rng(0)), UsageError);
  EXPECT_EQ(make_agent("rule", sc, Side::A, res, Rng(0))->kind(), "rule");
  EXPECT_EQ(make_agent("stanonet", sc, Side::B, res, Rng(0))->kind(), "stanonet");
}
