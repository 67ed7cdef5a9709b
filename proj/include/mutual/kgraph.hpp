#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mutual/scenario.hpp"
#include "mutual/schema.hpp"

namespace mutual {

enum class NodeKind : std::uint8_t { item, attribute, entity };

struct Node {
  NodeKind kind = NodeKind::item;
  int ref = 0;  // item row, schema attribute index, or EntityIndex
  bool in_kb = true;
};

struct Edge {
  int src = 0, dst = 0;
  int label = 0;
  bool operator==(const Edge&) const = default;
};

constexpr int kNumDegreeBuckets = 6;

// Edge label vocabulary for a schema with A attributes: has_<a> = 2a,
// has_<a>_inv = 2a+1, instance_of = 2A, has_value = 2A+1.
int num_edge_labels(const Schema& schema);
std::string edge_label_name(const Schema& schema, int label);

// Width of F_t(v): degree buckets, node kind (item, attribute, one slot per
// schema attribute for entities), mention bit.
int feature_dim(const Schema& schema);

// G_t for one agent. Node order is structural (items, then scenario
// attributes, then entities by first appearance in the KB, row-major, then
// nodes added during the dialogue) so that identical KB layouts produce
// identical graphs regardless of which concrete entities fill them.
class DialogueGraph {
 public:
  static DialogueGraph from_kb(const Schema& schema, std::span<const ScenarioAttribute> attrs, const KB& kb);

  const Schema& schema() const { return *schema_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Node& node(int v) const { return nodes_.at(static_cast<std::size_t>(v)); }
  // Outgoing edges of v, in insertion order.
  const std::vector<int>& out_edges(int v) const { return out_.at(static_cast<std::size_t>(v)); }
  int degree(int v) const { return static_cast<int>(out_edges(v).size()); }

  int num_items() const { return num_items_; }
  int item_node(int row) const { return row; }
  // -1 when absent.
  int entity_node(EntityIndex e) const;
  int attribute_node(int schema_attribute) const;

  int turn() const { return turn_; }
  bool mentioned(int v) const { return mentioned_.at(static_cast<std::size_t>(v)); }
  const std::vector<int>& relevant() const { return relevant_; }

  // Adds out-of-KB entities, advances t, recomputes E_t and the mention
  // flags. Returns E_t as node ids in first-mention order.
  const std::vector<int>& apply_utterance(std::span<const EntityIndex> mentioned);

  // F_t(v) as a dense 0/1 vector of length feature_dim(schema).
  std::vector<double> node_features(int v) const;
  // Row-major num_nodes x feature_dim matrix.
  std::vector<double> feature_matrix() const;

  std::string to_dot() const;

 private:
  int add_node(Node n);
  void add_edge(int src, int dst, int label);
  int ensure_attribute(int schema_attribute);

  const Schema* schema_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> out_;
  std::vector<bool> mentioned_;
  std::unordered_map<EntityIndex, int> entity_nodes_;
  std::unordered_map<int, int> attribute_nodes_;
  int num_items_ = 0;
  int turn_ = 0;
  std::vector<int> last_mentions_;
  std::vector<int> relevant_;
};

}  // namespace mutual
