#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>

#include "dyno_fixtures.hpp"
#include "gradcheck.hpp"
#include "mutual/dynonet.hpp"
#include "mutual/error.hpp"

using namespace mutual;
using namespace mutual::testing;

namespace {

const Schema& schema() { return default_schema_ref(); }
const Lexicon& lexicon() { return default_lexicon(); }

}  // namespace

TEST(MessagePassing, MatchesReferenceEvaluatorBitwise) {
  for (int K : {0, 1, 2}) {
    auto cfg = tiny_config();
    cfg.K = K;
    const DynoNet m = make_model(cfg, 11 + static_cast<std::uint64_t>(K));
    Rng rng(100 + static_cast<std::uint64_t>(K));
    for (int trial = 0; trial < 40; ++trial) {
      const int n = rng.uniform_int(1, 6);
      const auto adj = random_adjacency(rng, n, num_edge_labels(schema()));
      std::vector<std::vector<double>> V0(static_cast<std::size_t>(n));
      for (auto& r : V0)
        for (int j = 0; j < m.depth0_dim(); ++j) r.push_back(rng.uniform(-1, 1));
      Tape tape(&m.params());
      Var V = run_mp(tape, m, V0, adj);
      ASSERT_EQ(tape.cols(V), m.node_dim());
      for (int v = 0; v < n; ++v) {
        std::vector<double> expect;
        for (int k = 0; k <= K; ++k) {
          auto part = reference_embedding(m, V0, adj, v, k);
          expect.insert(expect.end(), part.begin(), part.end());
        }
        const auto got = row_of(tape, V, v);
        ASSERT_EQ(got.size(), expect.size());
        for (std::size_t j = 0; j < got.size(); ++j)
          ASSERT_EQ(std::bit_cast<std::uint64_t>(got[j]), std::bit_cast<std::uint64_t>(expect[j]))
              << "K=" << K << " trial " << trial << " node " << v << " dim " << j;
      }
    }
  }
}

TEST(MessagePassing, IsolatedNodeIsZeroAtDepthOne) {
  const DynoNet m = make_model();
  Adjacency adj;
  adj.offsets = {0, 1, 1};  // 0 -> 1, node 1 isolated
  adj.targets = {1};
  adj.labels = {0};
  std::vector<std::vector<double>> V0(2, std::vector<double>(static_cast<std::size_t>(m.depth0_dim()), 0.3));
  Tape tape(&m.params());
  const auto row = row_of(tape, run_mp(tape, m, V0, adj), 1);
  for (int j = m.depth0_dim(); j < m.node_dim(); ++j) EXPECT_EQ(row[static_cast<std::size_t>(j)], 0.0);
}

TEST(MessagePassing, PathGraphDepthTwoSeesTwoHops) {
  const DynoNet m = make_model();
  Adjacency adj;  // A - B - C
  adj.offsets = {0, 1, 3, 4};
  adj.targets = {1, 0, 2, 1};
  adj.labels = {0, 1, 0, 1};
  std::vector<std::vector<double>> V0(3, std::vector<double>(static_cast<std::size_t>(m.depth0_dim()), 0.1));
  Tape tape(&m.params());
  const auto before = row_of(tape, run_mp(tape, m, V0, adj), 0);
  V0[2][0] = 0.9;
  const auto after = row_of(tape, run_mp(tape, m, V0, adj), 0);
  const auto H = static_cast<std::ptrdiff_t>(m.config().hidden);
  const auto d0 = static_cast<std::ptrdiff_t>(m.depth0_dim());
  // Depth 1 of A only sees B; depth 2 reaches C.
  EXPECT_TRUE(std::equal(before.begin() + d0, before.begin() + d0 + H, after.begin() + d0));
  EXPECT_FALSE(std::equal(before.begin() + d0 + H, before.end(), after.begin() + d0 + H));
}

TEST(MessagePassing, DuplicateNeighborIsIdempotent) {
  const DynoNet m = make_model();
  Rng rng(3);
  std::vector<std::vector<double>> V0(3);
  for (auto& r : V0)
    for (int j = 0; j < m.depth0_dim(); ++j) r.push_back(rng.uniform(-1, 1));
  Adjacency once;
  once.offsets = {0, 2, 2, 2};
  once.targets = {1, 2};
  once.labels = {0, 3};
  Adjacency twice = once;
  twice.offsets = {0, 3, 3, 3};
  twice.targets = {1, 2, 1};
  twice.labels = {0, 3, 0};
  Tape tape(&m.params());
  EXPECT_EQ(row_of(tape, run_mp(tape, m, V0, once), 0), row_of(tape, run_mp(tape, m, V0, twice), 0));
}

TEST(DialogueState, DepthZeroIsFeaturesAndMentions) {
  auto cfg = tiny_config();
  cfg.K = 0;
  const DynoNet m = make_model(cfg);
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  st.observe(toks(m, sc, Side::A, "anyone went to columbia ?"), false);
  const auto feats = st.graph().feature_matrix();
  const int f = m.feature_dim();
  for (int v = 0; v < static_cast<int>(st.graph().num_nodes()); ++v) {
    auto row = row_of(tape, st.embeddings(), v);
    std::vector<double> expect(feats.begin() + v * f, feats.begin() + (v + 1) * f);
    auto mv = tape.value(st.mention(v));
    expect.insert(expect.end(), mv.begin(), mv.end());
    EXPECT_EQ(row, expect) << "node " << v;
  }
}

TEST(DialogueState, MentionGateHalfWithZeroWeights) {
  const DynoNet base = make_model();
  DynoNet m = base;
  std::fill(m.params()[m.ids().W_inc].data.begin(), m.params()[m.ids().W_inc].data.end(), 0.0);
  std::fill(m.params()[m.ids().b_inc].data.begin(), m.params()[m.ids().b_inc].data.end(), 0.0);
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  const int col = st.graph().entity_node(schema().require_entity("columbia-university"));
  const int apple = st.graph().entity_node(schema().require_entity("apple"));
  const auto apple_before = tape.value(st.mention(apple));

  st.observe(toks(m, sc, Side::A, "anyone went to columbia ?"), false);
  const auto u = tape.value(st.encoder_h());
  const auto M1 = tape.value(st.mention(col));
  const std::size_t H = u.size();
  for (std::size_t j = 0; j < H; ++j) {
    EXPECT_EQ(M1[j], 0.0) << "partner utterance fills only the second half";
    EXPECT_EQ(M1[H + j], 0.5 * u[j]);
  }
  EXPECT_EQ(tape.value(st.mention(apple)), apple_before);

  st.observe(toks(m, sc, Side::A, "columbia"), true);
  const auto u2 = tape.value(st.encoder_h());
  const auto M2 = tape.value(st.mention(col));
  for (std::size_t j = 0; j < H; ++j) {
    EXPECT_EQ(M2[j], 0.5 * 0.0 + 0.5 * u2[j]);
    EXPECT_EQ(M2[H + j], 0.5 * M1[H + j] + 0.5 * 0.0);
  }
}

TEST(DialogueState, EncoderStateCarriesAcrossTurns) {
  const DynoNet m = make_model();
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  EXPECT_EQ(tape.value(st.encoder_h()), std::vector<double>(4, 0.0));
  st.observe(toks(m, sc, Side::A, "hi"), true);
  const auto h1 = tape.value(st.encoder_h());

  // The same first step, computed by hand from a zero state.
  Tape t2(&m.params());
  DialogueState fresh(m, t2, sc, Side::A);
  std::vector<double> x(static_cast<std::size_t>(m.config().emb + m.node_dim()), 0.0);
  const auto& E = m.params()[m.ids().E_word].data;
  const int hi = m.vocab().id("hi");
  for (int j = 0; j < m.config().emb; ++j) x[static_cast<std::size_t>(j)] = E[static_cast<std::size_t>(hi * m.config().emb + j)];
  auto s = lstm_step(t2, m.ids().enc, t2.vector(x), {t2.zeros(1, 4), t2.zeros(1, 4)});
  EXPECT_EQ(t2.value(s.h), h1);

  st.observe({}, false);
  EXPECT_EQ(tape.value(st.encoder_h()), h1) << "empty utterance keeps the carried state";
}

TEST(DialogueState, StanoNetEmbeddingsAreConstant) {
  auto cfg = tiny_config();
  cfg.dynamic = false;
  const DynoNet m = make_model(cfg);
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  const auto V0 = tape.value(st.embeddings());
  const auto n0 = st.graph().num_nodes();
  for (const char* u : {"anyone went to columbia ?", "no , harvard", "my friend works at google", "yes"}) {
    st.observe(toks(m, sc, Side::A, u), u[0] == 'n');
    const auto Vt = tape.value(st.embeddings());
    ASSERT_EQ(Vt.size(), V0.size());
    for (std::size_t i = 0; i < Vt.size(); ++i)
      ASSERT_EQ(std::bit_cast<std::uint64_t>(Vt[i]), std::bit_cast<std::uint64_t>(V0[i]));
    EXPECT_EQ(st.graph().num_nodes(), n0);
  }
  // Harvard is not in G_0, yet the model can still read it.
  auto d = st.next_distribution(toks(m, sc, Side::A, "harvard"));
  EXPECT_EQ(d.size(), static_cast<std::size_t>(m.vocab().size()) + n0);
}

TEST(DialogueState, EntityIdentityPermutationInvariance) {
  const Scenario s1 = two_item_scenario("columbia-university", "stanford-university");
  const Scenario s2 = two_item_scenario("stanford-university", "columbia-university");
  const std::vector<std::string> d1{"anyone went to columbia ?", "no", "i have stanford", "yes google"};
  const std::vector<std::string> d2{"anyone went to stanford ?", "no", "i have columbia", "yes google"};

  const DynoNet on = make_model();
  const auto a = outputs_for(on, s1, d1), b = outputs_for(on, s2, d2);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    ASSERT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i])) << i;

  auto cfg = tiny_config();
  cfg.abstraction = false;
  const DynoNet off = make_model(cfg);
  EXPECT_NE(outputs_for(off, s1, d1), outputs_for(off, s2, d2));
}

TEST(DialogueState, AbstractionInputIgnoresIdentity) {
  // Two schools in identical graph positions give identical encoder states.
  const DynoNet m = make_model();
  const Scenario s1 = two_item_scenario("columbia-university", "stanford-university");
  const Scenario s2 = two_item_scenario("harvard-university", "stanford-university");
  Tape t1(&m.params()), t2(&m.params());
  DialogueState a(m, t1, s1, Side::A), b(m, t2, s2, Side::A);
  a.observe(toks(m, s1, Side::A, "columbia"), true);
  b.observe(toks(m, s2, Side::A, "harvard"), true);
  EXPECT_EQ(t1.value(a.encoder_h()), t2.value(b.encoder_h()));
}

TEST(Decoder, DistributionNormalizedAndCoversNodes) {
  const DynoNet m = make_model();
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  for (const char* u : {"", "hi", "anyone went to columbia ?"}) {
    auto d = st.next_distribution(toks(m, sc, Side::A, u));
    ASSERT_EQ(d.size(), static_cast<std::size_t>(m.vocab().size()) + st.graph().num_nodes());
    EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-9);
    for (std::size_t v = 0; v < st.graph().num_nodes(); ++v) EXPECT_GT(d[static_cast<std::size_t>(st.node_output(static_cast<int>(v)))], 0.0);
  }
}

TEST(Decoder, NewNodeIsCopyableImmediately) {
  const DynoNet m = make_model();
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  const auto harvard = schema().require_entity("harvard-university");
  ASSERT_EQ(st.graph().entity_node(harvard), -1);
  st.observe(toks(m, sc, Side::A, "anyone went to harvard ?"), false);
  const int v = st.graph().entity_node(harvard);
  ASSERT_GE(v, 0);
  auto d = st.next_distribution({});
  EXPECT_GT(d.at(static_cast<std::size_t>(st.node_output(v))), 0.0);
}

TEST(Decoder, HalvingSelectionHandExample) {
  std::vector<double> p{0.5, 0.5};
  halve_selection(p, 0);
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);
}

TEST(Decoder, SamplingDeterministicAndZeroTemperatureIsArgmax) {
  const DynoNet m = make_model();
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  st.observe(toks(m, sc, Side::A, "hi"), false);
  const auto mark = tape.mark();
  Rng r1(5), r2(5);
  const auto a = st.sample(r1, true), b = st.sample(r2, true);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(tape.mark(), mark) << "sampling leaves the tape untouched";
  Rng r3(1), r4(2);
  EXPECT_EQ(st.sample(r3, true, 0.0).tokens, st.sample(r4, true, 1e-6).tokens);
}

TEST(Decoder, SelectionSamplesEndOnAnItem) {
  auto cfg = tiny_config();
  const DynoNet base = make_model(cfg);
  DynoNet m = base;
  // Make <select> dominate the first position.
  m.params()[m.ids().b_vocab].data[Vocab::kSelect] = 50.0;
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  Rng rng(9);
  auto s = st.sample(rng, true);
  ASSERT_TRUE(s.select_row.has_value());
  EXPECT_LT(*s.select_row, 2);
  EXPECT_EQ(s.tokens.size(), 2u);
  auto t = st.sample(rng, false);
  EXPECT_FALSE(t.select_row.has_value());
  EXPECT_LE(t.tokens.size(), static_cast<std::size_t>(cfg.max_len));
}

TEST(Training, EndToEndGradientCheck) {
  for (bool vector_gate : {false, true}) {
    for (bool abstraction : {true, false}) {
      auto cfg = tiny_config();
      cfg.vector_gate = vector_gate;
      cfg.abstraction = abstraction;
      cfg.hidden = 3;
      cfg.emb = 2;
      DynoNet m = make_model(cfg, 21);
      const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
      auto loss_fn = [&](Tape& tape) {
        DialogueState st(m, tape, sc, Side::A);
        int n = 0;
        auto u1 = toks(m, sc, Side::A, "anyone went to columbia ?");
        auto u2 = toks(m, sc, Side::A, "yes google");
        std::vector<Var> parts{st.decode_loss(u1, n)};
        st.observe(u1, true);
        st.observe(u2, false);
        std::vector<Token> sel{{Token::word, Vocab::kSelect}, {Token::item, 0}};
        parts.push_back(st.decode_loss(sel, n));
        return tape.sum(tape.concat(parts));
      };
      const auto r = grad_check(m.params(), loss_fn);
      EXPECT_LT(r.max_rel_err, 1e-3) << "vector_gate=" << vector_gate << " abstraction=" << abstraction
                                     << " worst " << r.worst;
      EXPECT_GT(r.checked, 100u);
    }
  }
}

TEST(Training, CheckpointRoundTrip) {
  const DynoNet m = make_model();
  const auto path = std::filesystem::temp_directory_path() / "mutual_test_ckpt.json";
  m.save(path);
  const DynoNet back = DynoNet::load(schema(), path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.vocab().words(), m.vocab().words());
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  Tape t1(&m.params()), t2(&back.params());
  DialogueState a(m, t1, sc, Side::B), b(back, t2, sc, Side::B);
  EXPECT_EQ(a.next_distribution({}), b.next_distribution({}));

  auto j = m.checkpoint();
  j["tensors"][0]["shape"] = {1, 1};
  EXPECT_THROW(DynoNet::from_checkpoint(schema(), j), DataError);
  EXPECT_THROW(DynoNet::from_checkpoint(schema(), nlohmann::json{{"format", "x"}}), DataError);
}

TEST(Training, ConfigParsing) {
  auto c = config_from_json({{"hidden", 8}, {"K", 1}, {"dynamic", false}});
  EXPECT_EQ(c.hidden, 8);
  EXPECT_EQ(c.K, 1);
  EXPECT_FALSE(c.dynamic);
  EXPECT_EQ(c.emb, 100);
  EXPECT_THROW(config_from_json({{"hiden", 8}}), DataError);
  EXPECT_THROW(config_from_json({{"K", -1}}), DataError);
  EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
}

namespace {

Transcript handmade_dialogue(const Scenario& sc, const std::vector<std::pair<Side, std::string>>& lines, int pick) {
  Transcript t;
  t.scenario_id = sc.id;
  t.scenario = sc;
  std::int64_t time = 0;
  int turn = 0;
  for (const auto& [side, text] : lines)
    t.events.push_back(make_utterance_event(time += 1000, side, turn++, text, lexicon(),
                                            sc.kbs[static_cast<std::size_t>(index_of(side))]));
  for (Side s : {Side::A, Side::B}) {
    Event ev;
    ev.time_ms = time += 1000;
    ev.agent = s;
    ev.kind = EventKind::select;
    ev.turn = turn++;
    ev.item = pick;
    t.events.push_back(ev);
  }
  t.outcome = Outcome::success;
  return t;
}

}  // namespace

TEST(Training, LossDecreasesOnTinyCorpus) {
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  std::vector<Transcript> corpus;
  for (int i = 0; i < 4; ++i)
    corpus.push_back(handmade_dialogue(sc, {{Side::A, "hi anyone went to columbia ?"}, {Side::B, "yes i have columbia"}}, 0));
  const Vocab vocab = build_vocab(corpus, lexicon());
  EXPECT_GE(vocab.id("anyone"), 4);
  EXPECT_EQ(vocab.id("columbia"), Vocab::kUnk) << "entities never enter the vocabulary";

  auto cfg = tiny_config();
  cfg.max_epochs = 6;
  cfg.batch = 2;
  DynoNet m(schema(), cfg, vocab);
  Rng rng(1);
  m.init_params(rng);
  std::vector<const Transcript*> ptrs;
  for (const auto& t : corpus) ptrs.push_back(&t);
  const auto ex = make_examples(ptrs);
  TrainOptions opts;
  opts.use_early_stopping = false;
  const auto r = train(m, ex, ex, lexicon(), opts);
  ASSERT_EQ(r.curve.size(), 6u);
  EXPECT_LT(r.curve.back().dev_loss, r.curve.front().dev_loss);
  EXPECT_THROW(train(m, {}, ex, lexicon(), opts), DataError);

  opts.stop_when = [](const EpochStats& e) { return e.epoch == 2; };
  EXPECT_EQ(train(m, ex, ex, lexicon(), opts).curve.size(), 2u);
}

TEST(Training, SplitIsEightOneOne) {
  const Scenario sc = two_item_scenario("columbia-university", "stanford-university");
  std::vector<Transcript> corpus(100, handmade_dialogue(sc, {{Side::A, "hi"}}, 0));
  corpus[3].outcome = Outcome::failure;
  const auto s = split_corpus(corpus, 4);
  EXPECT_EQ(s.train.size() + s.dev.size() + s.test.size(), 99u);
  EXPECT_EQ(s.train.size(), 79u);
  EXPECT_EQ(s.dev.size(), 9u);
  for (const auto* t : s.train) EXPECT_EQ(t->outcome, Outcome::success);
}
