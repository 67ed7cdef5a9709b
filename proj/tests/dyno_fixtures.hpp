#pragma once

// Small hand-built scenarios and dialogues shared by model tests.

#include <cmath>
#include <string>
#include <vector>

#include "mutual/dynonet.hpp"

namespace mutual::testing {

inline const Schema& default_schema_ref() {
  static const Schema s = default_schema();
  return s;
}

inline const Lexicon& default_lexicon() {
  static const Lexicon lex(default_schema_ref());
  return lex;
}

inline Scenario two_item_scenario(const char* school_a0, const char* school_a1) {
  const Schema& s = default_schema_ref();
  auto E = [&](const char* id) { return s.require_entity(id); };
  Scenario sc;
  sc.id = "S_test";
  sc.n_items = 2;
  sc.attrs = {{s.require_attribute("school"), 1.0}, {s.require_attribute("company"), 1.0}};
  sc.kbs[0].items = {{E(school_a0), E("google")}, {E(school_a1), E("apple")}};
  sc.kbs[1].items = {{E("yale-university"), E("google")}, {E(school_a0), E("google")}};
  return sc;
}

inline Vocab small_vocab() {
  Vocab v;
  for (const char* w : {"hi", "anyone", "went", "to", "?", "my", "friend", "works", "at", "yes", "no", "i", "have"})
    v.add(w);
  return v;
}

inline DynoConfig tiny_config() {
  DynoConfig c;
  c.hidden = 4;
  c.emb = 3;
  c.rel_dim = 2;
  c.K = 2;
  return c;
}

inline DynoNet make_model(DynoConfig cfg = tiny_config(), std::uint64_t seed = 7) {
  DynoNet m(default_schema_ref(), cfg, small_vocab());
  Rng rng(seed);
  m.init_params(rng);
  return m;
}

inline std::vector<Token> toks(const DynoNet& m, const Scenario& sc, Side own, const std::string& text) {
  return utterance_tokens(text, default_lexicon(), sc.kbs[static_cast<std::size_t>(index_of(own))], m.vocab());
}

// Independent recursive evaluator: V^k(v) = max over out-edges (v -> u, l)
// of tanh(W_node^k V^{k-1}(u) + W_rel^k R(l)), zero when v has no edges.
inline std::vector<double> reference_embedding(const DynoNet& m, const std::vector<std::vector<double>>& V0,
                                        const Adjacency& adj, int v, int k) {
  if (k == 0) return V0[static_cast<std::size_t>(v)];
  const auto& ids = m.ids();
  const Param& Wn = m.params()[ids.W_node[static_cast<std::size_t>(k - 1)]];
  const Param& Wr = m.params()[ids.W_rel[static_cast<std::size_t>(k - 1)]];
  const Param& R = m.params()[ids.R];
  std::vector<double> out(static_cast<std::size_t>(Wn.rows), 0.0);
  bool first = true;
  for (int e = adj.offsets[static_cast<std::size_t>(v)]; e < adj.offsets[static_cast<std::size_t>(v) + 1]; ++e) {
    const auto x = reference_embedding(m, V0, adj, adj.targets[static_cast<std::size_t>(e)], k - 1);
    const int l = adj.labels[static_cast<std::size_t>(e)];
    for (int o = 0; o < Wn.rows; ++o) {
      double a = 0.0;
      for (int j = 0; j < Wn.cols; ++j) a += Wn.data[static_cast<std::size_t>(o * Wn.cols + j)] * x[static_cast<std::size_t>(j)];
      double b = 0.0;
      for (int j = 0; j < Wr.cols; ++j)
        b += Wr.data[static_cast<std::size_t>(o * Wr.cols + j)] * R.data[static_cast<std::size_t>(l * R.cols + j)];
      const double t = std::tanh(a + b);
      if (first || t > out[static_cast<std::size_t>(o)]) out[static_cast<std::size_t>(o)] = t;
    }
    first = false;
  }
  return out;
}

inline Adjacency random_adjacency(Rng& rng, int n, int n_labels) {
  Adjacency adj;
  for (int v = 0; v < n; ++v) {
    const int deg = rng.uniform_int(0, 3);
    for (int d = 0; d < deg; ++d) {
      adj.targets.push_back(rng.uniform_int(0, n - 1));
      adj.labels.push_back(rng.uniform_int(0, n_labels - 1));
    }
    adj.offsets.push_back(static_cast<int>(adj.targets.size()));
  }
  return adj;
}

inline Var run_mp(Tape& tape, const DynoNet& m, const std::vector<std::vector<double>>& V0, const Adjacency& adj) {
  std::vector<double> flat;
  for (const auto& r : V0) flat.insert(flat.end(), r.begin(), r.end());
  return message_passing(tape, m, tape.constant(flat, static_cast<int>(V0.size()), m.depth0_dim()), adj);
}

inline std::vector<double> row_of(const Tape& tape, Var V, int r) {
  auto d = tape.data(V);
  const auto c = static_cast<std::size_t>(tape.cols(V));
  return {d.begin() + static_cast<std::ptrdiff_t>(r * c), d.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

// Runs the same dialogue and collects every model output bit pattern.
inline std::vector<double> outputs_for(const DynoNet& m, const Scenario& sc, const std::vector<std::string>& utts) {
  Tape tape(&m.params());
  DialogueState st(m, tape, sc, Side::A);
  std::vector<double> all;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    auto t = toks(m, sc, Side::A, utts[i]);
    auto d = st.next_distribution({});
    all.insert(all.end(), d.begin(), d.end());
    int n = 0;
    all.push_back(tape.scalar(st.decode_loss(t, n)));
    st.observe(t, i % 2 == 0);
    auto V = tape.value(st.embeddings());
    all.insert(all.end(), V.begin(), V.end());
  }
  return all;
}


}  // namespace mutual::testing
