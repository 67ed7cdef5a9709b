#include "mutual/kgraph.hpp"

#include <algorithm>
#include <sstream>

#include "mutual/error.hpp"

namespace mutual {

int num_edge_labels(const Schema& schema) { return 2 * static_cast<int>(schema.num_attributes()) + 2; }

std::string edge_label_name(const Schema& schema, int label) {
  const int a = static_cast<int>(schema.num_attributes());
  if (label < 0 || label >= 2 * a + 2) throw UsageError("edge label out of range");
  if (label == 2 * a) return "instance_of";
  if (label == 2 * a + 1) return "has_value";
  const std::string& name = schema.attributes()[static_cast<std::size_t>(label / 2)].name;
  return label % 2 == 0 ? "has_" + name : "has_" + name + "_inv";
}

int feature_dim(const Schema& schema) { return kNumDegreeBuckets + 2 + static_cast<int>(schema.num_attributes()) + 1; }

int DialogueGraph::add_node(Node n) {
  nodes_.push_back(n);
  out_.emplace_back();
  mentioned_.push_back(false);
  return static_cast<int>(nodes_.size()) - 1;
}

void DialogueGraph::add_edge(int src, int dst, int label) {
  out_[static_cast<std::size_t>(src)].push_back(static_cast<int>(edges_.size()));
  edges_.push_back({src, dst, label});
}

int DialogueGraph::ensure_attribute(int a) {
  auto it = attribute_nodes_.find(a);
  if (it != attribute_nodes_.end()) return it->second;
  const int v = add_node({NodeKind::attribute, a, true});
  attribute_nodes_.emplace(a, v);
  return v;
}

DialogueGraph DialogueGraph::from_kb(const Schema& schema, std::span<const ScenarioAttribute> attrs, const KB& kb) {
  DialogueGraph g;
  g.schema_ = &schema;
  const int n_attr_labels = 2 * static_cast<int>(schema.num_attributes());
  g.num_items_ = static_cast<int>(kb.items.size());
  for (int i = 0; i < g.num_items_; ++i) g.add_node({NodeKind::item, i, true});
  for (const auto& sa : attrs) g.ensure_attribute(sa.attribute);
  for (const auto& item : kb.items) {
    if (item.size() != attrs.size()) throw UsageError("from_kb: item width does not match attributes");
    for (EntityIndex e : item) {
      if (g.entity_nodes_.count(e)) continue;
      const int v = g.add_node({NodeKind::entity, e, true});
      g.entity_nodes_.emplace(e, v);
    }
  }
  for (int i = 0; i < g.num_items_; ++i) {
    const auto& item = kb.items[static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < item.size(); ++c) {
      const int a = attrs[c].attribute;
      const int ev = g.entity_nodes_.at(item[c]);
      g.add_edge(i, ev, 2 * a);
      g.add_edge(ev, i, 2 * a + 1);
    }
  }
  // Entity <-> attribute edges, in entity node order.
  for (std::size_t v = 0; v < g.nodes_.size(); ++v) {
    if (g.nodes_[v].kind != NodeKind::entity) continue;
    const int av = g.attribute_nodes_.at(schema.attribute_of(g.nodes_[v].ref));
    g.add_edge(static_cast<int>(v), av, n_attr_labels);
    g.add_edge(av, static_cast<int>(v), n_attr_labels + 1);
  }
  return g;
}

int DialogueGraph::entity_node(EntityIndex e) const {
  auto it = entity_nodes_.find(e);
  return it == entity_nodes_.end() ? -1 : it->second;
}

int DialogueGraph::attribute_node(int a) const {
  auto it = attribute_nodes_.find(a);
  return it == attribute_nodes_.end() ? -1 : it->second;
}

const std::vector<int>& DialogueGraph::apply_utterance(std::span<const EntityIndex> mentioned) {
  const int n_attr_labels = 2 * static_cast<int>(schema_->num_attributes());
  std::vector<int> now;
  for (EntityIndex e : mentioned) {
    int v = entity_node(e);
    if (v < 0) {
      const int av = ensure_attribute(schema_->attribute_of(e));
      v = add_node({NodeKind::entity, e, false});
      entity_nodes_.emplace(e, v);
      add_edge(v, av, n_attr_labels);
      add_edge(av, v, n_attr_labels + 1);
    }
    if (std::find(now.begin(), now.end(), v) == now.end()) now.push_back(v);
  }
  ++turn_;
  std::fill(mentioned_.begin(), mentioned_.end(), false);
  for (int v : now) mentioned_[static_cast<std::size_t>(v)] = true;
  relevant_ = now.empty() ? last_mentions_ : now;
  last_mentions_ = std::move(now);
  return relevant_;
}

std::vector<double> DialogueGraph::node_features(int v) const {
  if (v < 0 || static_cast<std::size_t>(v) >= nodes_.size()) throw UsageError("node_features: unknown node");
  std::vector<double> f(static_cast<std::size_t>(feature_dim(*schema_)), 0.0);
  f[static_cast<std::size_t>(std::min(degree(v), kNumDegreeBuckets - 1))] = 1.0;
  const Node& n = nodes_[static_cast<std::size_t>(v)];
  std::size_t kind = kNumDegreeBuckets;
  if (n.kind == NodeKind::attribute) kind += 1;
  if (n.kind == NodeKind::entity) kind += 2 + static_cast<std::size_t>(schema_->attribute_of(n.ref));
  f[kind] = 1.0;
  if (mentioned_[static_cast<std::size_t>(v)]) f.back() = 1.0;
  return f;
}

std::vector<double> DialogueGraph::feature_matrix() const {
  std::vector<double> out;
  out.reserve(nodes_.size() * static_cast<std::size_t>(feature_dim(*schema_)));
  for (std::size_t v = 0; v < nodes_.size(); ++v) {
    auto f = node_features(static_cast<int>(v));
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

std::string DialogueGraph::to_dot() const {
  std::ostringstream os;
  os << "digraph G {\n";
  for (std::size_t v = 0; v < nodes_.size(); ++v) {
    const Node& n = nodes_[v];
    std::string label;
    switch (n.kind) {
      case NodeKind::item: label = "item-" + std::to_string(n.ref); break;
      case NodeKind::attribute: label = schema_->attributes()[static_cast<std::size_t>(n.ref)].name; break;
      case NodeKind::entity: label = schema_->entity(n.ref).id; break;
    }
    os << "  n" << v << " [label=\"" << label << "\"" << (n.in_kb ? "" : " style=dashed")
       << (mentioned_[v] ? " color=red" : "") << "];\n";
  }
  for (const auto& e : edges_)
    os << "  n" << e.src << " -> n" << e.dst << " [label=\"" << edge_label_name(*schema_, e.label) << "\"];\n";
  os << "}\n";
  return os.str();
}

}  // namespace mutual
