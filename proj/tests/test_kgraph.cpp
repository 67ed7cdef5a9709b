#include <gtest/gtest.h>

#include <set>

#include "mutual/kgraph.hpp"

using namespace mutual;

namespace {

const Schema& schema() {
  static const Schema s = default_schema();
  return s;
}

EntityIndex E(const char* id) { return schema().require_entity(id); }

std::vector<ScenarioAttribute> attrs(std::initializer_list<const char*> names) {
  std::vector<ScenarioAttribute> out;
  for (const char* n : names) out.push_back({schema().require_attribute(n), 1.0});
  return out;
}

int bucket_of(const std::vector<double>& f) {
  for (int b = 0; b < kNumDegreeBuckets; ++b)
    if (f[static_cast<std::size_t>(b)] == 1.0) return b;
  return -1;
}

}  // namespace

TEST(KGraph, LabelVocabulary) {
  EXPECT_EQ(num_edge_labels(schema()), 16);
  EXPECT_EQ(edge_label_name(schema(), 2), "has_school");
  EXPECT_EQ(edge_label_name(schema(), 3), "has_school_inv");
  EXPECT_EQ(edge_label_name(schema(), 14), "instance_of");
  EXPECT_EQ(edge_label_name(schema(), 15), "has_value");
}

TEST(KGraph, DistinctValuesGiveEightNodes) {
  KB kb{{{E("columbia-university"), E("google")}, {E("stanford-university"), E("apple")}}};
  auto g = DialogueGraph::from_kb(schema(), attrs({"school", "company"}), kb);
  EXPECT_EQ(g.num_nodes(), 8u);
  // Each triple contributes a forward and a reverse edge; each entity two attribute edges.
  EXPECT_EQ(g.edges().size(), 4u * 2 + 4u * 2);
}

TEST(KGraph, TripleAndAttributeEdgesPresent) {
  KB kb{{{E("columbia-university"), E("google")}, {E("columbia-university"), E("apple")}}};
  auto g = DialogueGraph::from_kb(schema(), attrs({"school", "company"}), kb);
  std::set<std::tuple<int, int, std::string>> edges;
  for (const auto& e : g.edges()) edges.insert({e.src, e.dst, edge_label_name(schema(), e.label)});
  const int columbia = g.entity_node(E("columbia-university"));
  const int school = g.attribute_node(schema().require_attribute("school"));
  EXPECT_TRUE(edges.count({0, columbia, "has_school"}));
  EXPECT_TRUE(edges.count({columbia, 0, "has_school_inv"}));
  EXPECT_TRUE(edges.count({columbia, 1, "has_school_inv"}));
  EXPECT_TRUE(edges.count({columbia, school, "instance_of"}));
  EXPECT_TRUE(edges.count({school, columbia, "has_value"}));
  // Shared value: two edges toward items plus one to its attribute.
  int to_items = 0;
  for (int ei : g.out_edges(columbia)) to_items += g.node(g.edges()[static_cast<std::size_t>(ei)].dst).kind == NodeKind::item;
  EXPECT_EQ(to_items, 2);
  EXPECT_EQ(g.num_nodes(), 2u + 2u + 3u);
}

TEST(KGraph, PartnerMentionAddsIsolatedEntity) {
  KB kb{{{E("stanford-university"), E("google")}}};
  auto g = DialogueGraph::from_kb(schema(), attrs({"school", "company"}), kb);
  const auto before = g.num_nodes();
  std::vector<EntityIndex> m{E("columbia-university")};
  g.apply_utterance(m);
  ASSERT_EQ(g.num_nodes(), before + 1);
  const int v = g.entity_node(E("columbia-university"));
  EXPECT_FALSE(g.node(v).in_kb);
  EXPECT_EQ(g.degree(v), 1);
  auto f = g.node_features(v);
  EXPECT_EQ(bucket_of(f), 1);
  EXPECT_EQ(f.back(), 1.0);
  for (int ei : g.out_edges(v)) EXPECT_EQ(g.node(g.edges()[static_cast<std::size_t>(ei)].dst).kind, NodeKind::attribute);
}

TEST(KGraph, MentionOfUnusedAttributeAddsAttributeNode) {
  KB kb{{{E("stanford-university"), E("google")}}};
  auto g = DialogueGraph::from_kb(schema(), attrs({"school", "company"}), kb);
  std::vector<EntityIndex> m{E("hiking")};
  g.apply_utterance(m);
  EXPECT_GE(g.attribute_node(schema().require_attribute("hobby")), 0);
}

TEST(KGraph, RelevantEntitiesFallback) {
  KB kb{{{E("stanford-university"), E("google")}}};
  auto g = DialogueGraph::from_kb(schema(), attrs({"school", "company"}), kb);
  EXPECT_TRUE(g.apply_utterance({}).empty());  // first utterance, no entities
  std::vector<EntityIndex> google{E("google")};
  auto e1 = g.apply_utterance(google);
  ASSERT_EQ(e1.size(), 1u);
  EXPECT_EQ(e1[0], g.entity_node(E("google")));
  auto e2 = g.apply_utterance({});  // "no"
  EXPECT_EQ(e2, e1);
  EXPECT_FALSE(g.mentioned(e1[0]));  // mention flag is per utterance
  EXPECT_TRUE(g.apply_utterance({}).empty());  // two back: no fallback
  EXPECT_EQ(g.turn(), 4);
}

TEST(KGraph, FeatureBlocks) {
  // Attribute with five distinct values lands in the >=5 bucket.
  KB kb;
  for (const char* s : {"columbia-university", "stanford-university", "harvard-university", "yale-university",
                        "brown-university"})
    kb.items.push_back({E(s)});
  auto g = DialogueGraph::from_kb(schema(), attrs({"school"}), kb);
  const int school = g.attribute_node(schema().require_attribute("school"));
  EXPECT_EQ(g.degree(school), 5);
  EXPECT_EQ(bucket_of(g.node_features(school)), 5);

  KB three{{{E("columbia-university"), E("google"), E("hiking")}}};
  auto g3 = DialogueGraph::from_kb(schema(), attrs({"school", "company", "hobby"}), three);
  auto f = g3.node_features(0);
  EXPECT_EQ(bucket_of(f), 3);
  EXPECT_EQ(f[kNumDegreeBuckets], 1.0);  // kind = item
  EXPECT_THROW(g3.node_features(99), std::logic_error);
}

TEST(KGraph, FeatureWidthConstantAndOneHot) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    Scenario s = generate_scenario(schema(), rng);
    auto g = DialogueGraph::from_kb(schema(), s.attrs, s.kbs[0]);
    for (int t = 0; t < 5; ++t) {
      auto before = g.nodes().size();
      auto before_edges = g.edges();
      std::vector<EntityIndex> m{static_cast<EntityIndex>(rng.uniform_int(0, static_cast<int>(schema().num_entities()) - 1))};
      g.apply_utterance(m);
      EXPECT_GE(g.nodes().size(), before);
      // Monotone growth: earlier edges are a prefix of the current list.
      ASSERT_GE(g.edges().size(), before_edges.size());
      EXPECT_TRUE(std::equal(before_edges.begin(), before_edges.end(), g.edges().begin()));
      for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        auto f = g.node_features(static_cast<int>(v));
        ASSERT_EQ(f.size(), static_cast<std::size_t>(feature_dim(schema())));
        double deg = 0, kind = 0;
        for (int b = 0; b < kNumDegreeBuckets; ++b) deg += f[static_cast<std::size_t>(b)];
        for (std::size_t k = kNumDegreeBuckets; k + 1 < f.size(); ++k) kind += f[k];
        EXPECT_EQ(deg, 1.0);
        EXPECT_EQ(kind, 1.0);
      }
    }
  }
}

TEST(KGraph, DotDump) {
  KB kb{{{E("columbia-university")}}};
  auto g = DialogueGraph::from_kb(schema(), attrs({"school"}), kb);
  auto dot = g.to_dot();
  EXPECT_NE(dot.find("digraph"), std::string::npos);
  EXPECT_NE(dot.find("has_school"), std::string::npos);
}
