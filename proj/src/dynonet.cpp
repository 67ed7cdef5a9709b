#include "mutual/dynonet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "mutual/error.hpp"

namespace mutual {

// ---------------------------------------------------------------- config

nlohmann::json config_to_json(const DynoConfig& c) {
  return {{"hidden", c.hidden},       {"emb", c.emb},
          {"rel_dim", c.rel_dim},     {"K", c.K},
          {"abstraction", c.abstraction}, {"dynamic", c.dynamic},
          {"vector_gate", c.vector_gate}, {"temperature", c.temperature},
          {"halve_select", c.halve_select}, {"max_len", c.max_len},
          {"lr", c.lr},               {"adagrad_init", c.adagrad_init},
          {"batch", c.batch},         {"min_epochs", c.min_epochs},
          {"patience", c.patience},   {"max_epochs", c.max_epochs},
          {"seed", c.seed}};
}

DynoConfig config_from_json(const nlohmann::json& j, DynoConfig c) {
  if (!j.is_object()) throw DataError("model config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "hidden") c.hidden = v.get<int>();
      else if (key == "emb") c.emb = v.get<int>();
      else if (key == "rel_dim") c.rel_dim = v.get<int>();
      else if (key == "K") c.K = v.get<int>();
      else if (key == "abstraction") c.abstraction = v.get<bool>();
      else if (key == "dynamic") c.dynamic = v.get<bool>();
      else if (key == "vector_gate") c.vector_gate = v.get<bool>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "halve_select") c.halve_select = v.get<bool>();
      else if (key == "max_len") c.max_len = v.get<int>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "adagrad_init") c.adagrad_init = v.get<double>();
      else if (key == "batch") c.batch = v.get<int>();
      else if (key == "min_epochs") c.min_epochs = v.get<int>();
      else if (key == "patience") c.patience = v.get<int>();
      else if (key == "max_epochs") c.max_epochs = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw DataError("unknown model config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model config: ") + e.what());
  }
  if (c.hidden <= 0 || c.emb <= 0 || c.rel_dim <= 0) throw DataError("model dimensions must be positive");
  if (c.K < 0) throw DataError("K must be >= 0");
  if (c.temperature < 0.0) throw DataError("temperature must be >= 0");
  if (c.max_len <= 0 || c.batch <= 0) throw DataError("max_len and batch must be positive");
  return c;
}

// ---------------------------------------------------------------- vocab

Vocab::Vocab() {
  for (const char* w : {"<unk>", "<go>", "<eos>", "<select>"}) add(w);
}

int Vocab::add(const std::string& word) {
  auto [it, fresh] = index_.try_emplace(word, static_cast<int>(words_.size()));
  if (fresh) words_.push_back(word);
  return it->second;
}

int Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<Token> utterance_tokens(const std::string& text, const Lexicon& lexicon, const KB& own_kb,
                                    const Vocab& vocab) {
  auto toks = tokenize(text);
  std::vector<Token> out;
  for (const auto& lt : link_entities(toks, lexicon, own_kb)) {
    if (lt.entity) out.push_back({Token::entity, *lt.entity});
    else out.push_back({Token::word, vocab.id(lt.span)});
  }
  return out;
}

std::optional<std::vector<Token>> event_tokens(const Event& ev, Side own, const Lexicon& lexicon,
                                               const KB& own_kb, const Vocab& vocab) {
  switch (ev.kind) {
    case EventKind::typing:
      return std::nullopt;
    case EventKind::select: {
      std::vector<Token> t{{Token::word, Vocab::kSelect}};
      if (ev.agent == own && ev.item) t.push_back({Token::item, *ev.item});
      return t;
    }
    case EventKind::utterance:
      return utterance_tokens(ev.text, lexicon, own_kb, vocab);
  }
  return std::nullopt;
}

void halve_selection(std::vector<double>& probs, int select) {
  auto& p = probs.at(static_cast<std::size_t>(select));
  p *= 0.5;
  double total = 0.0;
  for (double x : probs) total += x;
  if (total > 0.0)
    for (double& x : probs) x /= total;
}

// ---------------------------------------------------------------- model

DynoNet::DynoNet(const Schema& schema, DynoConfig config, Vocab vocab)
    : schema_(&schema), config_(config), vocab_(std::move(vocab)) {
  const int H = config_.hidden, E = config_.emb;
  const int A = static_cast<int>(schema.num_attributes());
  feat_dim_ = mutual::feature_dim(schema);
  d0_ = feat_dim_ + 2 * H + (config_.abstraction ? 0 : E);
  node_dim_ = d0_ + config_.K * H;

  ids_.E_word = params_.add("E_word", vocab_.size(), E);
  ids_.E_type = params_.add("E_type", A + 1, E);
  if (!config_.abstraction) ids_.E_id = params_.add("E_id", static_cast<int>(schema.num_entities()), E);
  ids_.enc = add_lstm(params_, "enc", E + node_dim_, H);
  ids_.dec = add_lstm(params_, "dec", E + 2 * node_dim_, H);
  if (config_.vector_gate) {
    ids_.W_inc = params_.add("W_inc", 2 * H, 4 * H);
    ids_.b_inc = params_.add("b_inc", 1, 2 * H);
  } else {
    ids_.W_inc = params_.add("W_inc", 1, 4 * H);
    ids_.b_inc = params_.add("b_inc", 1, 1);
  }
  ids_.R = params_.add("R", num_edge_labels(schema), config_.rel_dim);
  int prev = d0_;
  for (int k = 1; k <= config_.K; ++k) {
    ids_.W_node.push_back(params_.add("W_node_" + std::to_string(k), H, prev));
    ids_.W_rel.push_back(params_.add("W_rel_" + std::to_string(k), H, config_.rel_dim));
    prev = H;
  }
  ids_.W_ah = params_.add("W_attn_h", H, H);
  ids_.W_av = params_.add("W_attn_v", H, node_dim_);
  ids_.w_attn = params_.add("w_attn", 1, H);
  ids_.W_vocab = params_.add("W_vocab", vocab_.size(), H);
  ids_.b_vocab = params_.add("b_vocab", 1, vocab_.size());
}

nlohmann::json DynoNet::checkpoint() const {
  auto attrs = nlohmann::json::array();
  for (const auto& a : schema_->attributes()) attrs.push_back(a.name);
  return {{"format", "dynonet-checkpoint"},
          {"version", 1},
          {"config", config_to_json(config_)},
          {"schema", {{"attributes", attrs}, {"entities", schema_->num_entities()}}},
          {"vocab", vocab_.words()},
          {"tensors", tensors_to_json(params_)}};
}

void DynoNet::save(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << checkpoint().dump();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

DynoNet DynoNet::from_checkpoint(const Schema& schema, const nlohmann::json& j) {
  try {
    if (j.at("format") != "dynonet-checkpoint") throw DataError("not a dynonet checkpoint");
    if (j.at("version") != 1) throw DataError("unsupported checkpoint version");
    const auto& s = j.at("schema");
    if (s.at("entities").get<std::size_t>() != schema.num_entities() ||
        s.at("attributes").size() != schema.num_attributes())
      throw DataError("checkpoint was trained on a different schema");
    for (std::size_t a = 0; a < schema.num_attributes(); ++a)
      if (s["attributes"][a] != schema.attributes()[a].name) throw DataError("checkpoint schema attribute mismatch");
    Vocab vocab;
    const auto& words = j.at("vocab");
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (vocab.add(words[i].get<std::string>()) != static_cast<int>(i))
        throw DataError("checkpoint vocabulary is malformed");
    }
    DynoNet model(schema, config_from_json(j.at("config")), std::move(vocab));
    tensors_from_json(j.at("tensors"), model.params_);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

DynoNet DynoNet::load(const Schema& schema, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return from_checkpoint(schema, j);
}

// ---------------------------------------------------------------- graph embeddings

Adjacency adjacency_of(const DialogueGraph& g) {
  Adjacency adj;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    for (int e : g.out_edges(static_cast<int>(v))) {
      const Edge& edge = g.edges()[static_cast<std::size_t>(e)];
      adj.targets.push_back(edge.dst);
      adj.labels.push_back(edge.label);
    }
    adj.offsets.push_back(static_cast<int>(adj.targets.size()));
  }
  return adj;
}

Var message_passing(Tape& tape, const DynoNet& model, Var V0, const Adjacency& adj) {
  const auto& ids = model.ids();
  std::vector<Var> levels{V0};
  Var prev = V0;
  for (int k = 0; k < model.config().K; ++k) {
    Var P = tape.matmul_nt(prev, tape.param(ids.W_node[static_cast<std::size_t>(k)]));
    Var Q = tape.matmul_nt(tape.param(ids.R), tape.param(ids.W_rel[static_cast<std::size_t>(k)]));
    prev = tape.gather_max_tanh(P, Q, adj.offsets, adj.targets, adj.labels);
    levels.push_back(prev);
  }
  return levels.size() == 1 ? V0 : tape.concat_cols(levels);
}

// ---------------------------------------------------------------- dialogue state

DialogueState::DialogueState(const DynoNet& model, Tape& tape, const Scenario& scenario, Side own)
    : model_(&model),
      tape_(&tape),
      scenario_(&scenario),
      own_(own),
      graph_(DialogueGraph::from_kb(model.schema(), scenario.attrs, scenario.kbs[static_cast<std::size_t>(index_of(own))])) {
  const int H = model.config().hidden;
  // Zero blocks are cached, so create them before any truncatable work.
  for (int n : {H, 2 * H, model.node_dim(), model.config().emb}) zeros(n);
  M_.assign(graph_.num_nodes(), zeros(2 * H));
  h_ = zeros(H);
  c_ = zeros(H);
  V_ = compute_V();
}

Var DialogueState::zeros(int n) {
  auto it = zero_cache_.find(n);
  if (it != zero_cache_.end()) return it->second;
  Var z = tape_->zeros(1, n);
  zero_cache_.emplace(n, z);
  return z;
}

Var DialogueState::compute_V() {
  Tape& tp = *tape_;
  const int n = static_cast<int>(graph_.num_nodes());
  auto feats = graph_.feature_matrix();
  std::vector<Var> parts{tp.constant(feats, n, model_->feature_dim()), tp.stack_rows(M_)};
  if (!model_->config().abstraction) {
    std::vector<Var> id_rows;
    Var E_id = tp.param(model_->ids().E_id);
    for (int v = 0; v < n; ++v) {
      const Node& nd = graph_.node(v);
      id_rows.push_back(nd.kind == NodeKind::entity ? tp.row(E_id, nd.ref) : zeros(model_->config().emb));
    }
    parts.push_back(tp.stack_rows(id_rows));
  }
  adj_ = adjacency_of(graph_);
  return message_passing(tp, *model_, tp.concat_cols(parts), adj_);
}

Var DialogueState::abstraction(const Token& tok, Var V) {
  Tape& tp = *tape_;
  const auto& ids = model_->ids();
  const int A = static_cast<int>(model_->schema().num_attributes());
  switch (tok.kind) {
    case Token::word: {
      std::array<Var, 2> parts{tp.row(tp.param(ids.E_word), tok.id), zeros(model_->node_dim())};
      return tp.concat(parts);
    }
    case Token::entity: {
      Var base = tp.row(tp.param(ids.E_type), model_->schema().attribute_of(tok.id));
      if (!model_->config().abstraction) base = tp.add(base, tp.row(tp.param(ids.E_id), tok.id));
      const int v = graph_.entity_node(tok.id);
      std::array<Var, 2> parts{base, v >= 0 ? tp.row(V, v) : zeros(model_->node_dim())};
      return tp.concat(parts);
    }
    case Token::item: {
      std::array<Var, 2> parts{tp.row(tp.param(ids.E_type), A), tp.row(V, graph_.item_node(tok.id))};
      return tp.concat(parts);
    }
  }
  throw UsageError("abstraction: bad token kind");
}

void DialogueState::ensure_attention() {
  if (U_ >= 0) return;
  U_ = tape_->matmul_nt(V_, tape_->param(model_->ids().W_av));
}

Var DialogueState::scores_for(Var h) {
  Tape& tp = *tape_;
  const auto& ids = model_->ids();
  ensure_attention();
  Var a = tp.matvec(tp.param(ids.W_ah), h);
  return tp.matvec(tp.tanh(tp.add_row(U_, a)), tp.param(ids.w_attn));
}

Var DialogueState::context(Var scores) { return tape_->matvec_t(V_, tape_->softmax(scores)); }

int DialogueState::output_of(const Token& tok) const {
  switch (tok.kind) {
    case Token::word:
      return tok.id;
    case Token::entity: {
      const int v = graph_.entity_node(tok.id);
      return v >= 0 ? node_output(v) : Vocab::kUnk;
    }
    case Token::item:
      return node_output(graph_.item_node(tok.id));
  }
  return Vocab::kUnk;
}

namespace {

bool is_selection(const std::vector<Token>& t) {
  return t.size() == 2 && t[0].kind == Token::word && t[0].id == Vocab::kSelect && t[1].kind == Token::item;
}

}  // namespace

Var DialogueState::decode_loss(const std::vector<Token>& target, int& n_tokens) {
  Tape& tp = *tape_;
  const auto& ids = model_->ids();
  std::vector<int> outputs;
  for (const auto& tok : target) outputs.push_back(output_of(tok));
  if (!is_selection(target)) outputs.push_back(Vocab::kEos);

  LstmState s{h_, c_};
  Var scores = scores_for(h_);
  Var ctx = context(scores);
  Token in{Token::word, Vocab::kGo};
  std::vector<Var> losses;
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    std::array<Var, 2> x{abstraction(in, V_), ctx};
    s = lstm_step(tp, model_->ids().dec, tp.concat(x), s);
    scores = scores_for(s.h);
    std::array<Var, 2> parts{tp.add(tp.matvec(tp.param(ids.W_vocab), s.h), tp.param(ids.b_vocab)), scores};
    losses.push_back(tp.cross_entropy(tp.concat(parts), outputs[j]));
    if (j + 1 < outputs.size()) {
      ctx = context(scores);
      in = target[j];
    }
  }
  n_tokens += static_cast<int>(outputs.size());
  return tp.sum(tp.concat(losses));
}

std::vector<double> DialogueState::next_distribution(const std::vector<Token>& prefix) {
  Tape& tp = *tape_;
  const auto& ids = model_->ids();
  const auto mark = tp.mark();
  const Var saved_U = U_;
  LstmState s{h_, c_};
  Var scores = scores_for(h_);
  Token in{Token::word, Vocab::kGo};
  Var logits = -1;
  for (std::size_t j = 0; j <= prefix.size(); ++j) {
    std::array<Var, 2> x{abstraction(in, V_), context(scores)};
    s = lstm_step(tp, ids.dec, tp.concat(x), s);
    scores = scores_for(s.h);
    std::array<Var, 2> parts{tp.add(tp.matvec(tp.param(ids.W_vocab), s.h), tp.param(ids.b_vocab)), scores};
    logits = tp.concat(parts);
    if (j < prefix.size()) in = prefix[j];
  }
  auto probs = tp.value(tp.softmax(logits));
  if (saved_U < 0) U_ = -1;
  tp.truncate(mark);
  return probs;
}

Sampled DialogueState::sample(Rng& rng, bool can_select, std::optional<double> temperature) {
  Tape& tp = *tape_;
  const auto& ids = model_->ids();
  const double tau = temperature.value_or(model_->config().temperature);
  const int nv = model_->vocab().size();
  const auto mark = tp.mark();
  const Var saved_U = U_;

  Sampled out;
  LstmState s{h_, c_};
  Var scores = scores_for(h_);
  Token in{Token::word, Vocab::kGo};
  for (int j = 0; j < model_->config().max_len; ++j) {
    std::array<Var, 2> x{abstraction(in, V_), context(scores)};
    s = lstm_step(tp, ids.dec, tp.concat(x), s);
    scores = scores_for(s.h);
    std::array<Var, 2> parts{tp.add(tp.matvec(tp.param(ids.W_vocab), s.h), tp.param(ids.b_vocab)), scores};
    auto z = tp.value(tp.concat(parts));

    // Which outputs may be emitted at this position.
    const bool after_select = j == 1 && !out.tokens.empty() && out.tokens[0].id == Vocab::kSelect &&
                              out.tokens[0].kind == Token::word;
    std::vector<bool> allowed(z.size(), false);
    for (int i = 0; i < nv; ++i) allowed[static_cast<std::size_t>(i)] = !after_select;
    allowed[Vocab::kUnk] = allowed[Vocab::kGo] = false;
    allowed[Vocab::kSelect] = !after_select && j == 0 && can_select;
    if (j == 0) allowed[Vocab::kEos] = false;
    for (std::size_t v = 0; v < graph_.num_nodes(); ++v) {
      const NodeKind k = graph_.node(static_cast<int>(v)).kind;
      allowed[static_cast<std::size_t>(nv) + v] = after_select ? k == NodeKind::item : k == NodeKind::entity;
    }

    std::size_t pick = 0;
    if (tau == 0.0) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < z.size(); ++i)
        if (allowed[i] && z[i] > best) best = z[i], pick = i;
    } else {
      double zmax = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < z.size(); ++i)
        if (allowed[i]) zmax = std::max(zmax, z[i] / tau);
      std::vector<double> p(z.size(), 0.0);
      double total = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i)
        if (allowed[i]) total += p[i] = std::exp(z[i] / tau - zmax);
      for (double& x : p) x /= total;
      if (model_->config().halve_select && allowed[Vocab::kSelect]) halve_selection(p, Vocab::kSelect);
      pick = rng.categorical(p);
    }

    const int o = static_cast<int>(pick);
    if (o == Vocab::kEos) break;
    Token tok;
    if (o < nv) {
      tok = {Token::word, o};
    } else {
      const Node& nd = graph_.node(o - nv);
      tok = nd.kind == NodeKind::item ? Token{Token::item, nd.ref} : Token{Token::entity, nd.ref};
    }
    out.tokens.push_back(tok);
    if (tok.kind == Token::item) {
      out.select_row = tok.id;
      break;
    }
    in = tok;
  }
  if (saved_U < 0) U_ = -1;
  tp.truncate(mark);
  return out;
}

void DialogueState::observe(const std::vector<Token>& tokens, bool self) {
  Tape& tp = *tape_;
  const auto& cfg = model_->config();
  const auto& ids = model_->ids();
  const int H = cfg.hidden;

  std::vector<int> mentioned_nodes;
  Var V_enc = V_;
  if (cfg.dynamic) {
    std::vector<EntityIndex> ents;
    bool needs_nodes = false;
    for (const auto& tok : tokens) {
      if (tok.kind == Token::entity) ents.push_back(tok.id);
      if (tok.kind != Token::word) needs_nodes = true;
    }
    mentioned_nodes = graph_.apply_utterance(ents);
    while (M_.size() < graph_.num_nodes()) M_.push_back(zeros(2 * H));
    // Encoding sees the graph with this utterance's nodes and the mention
    // vectors from before it.
    if (needs_nodes) V_enc = compute_V();
  }

  LstmState s{h_, c_};
  for (const auto& tok : tokens) s = lstm_step(tp, ids.enc, abstraction(tok, V_enc), s);
  h_ = s.h;
  c_ = s.c;

  if (cfg.dynamic) {
    std::array<Var, 2> halves = self ? std::array<Var, 2>{h_, zeros(H)} : std::array<Var, 2>{zeros(H), h_};
    Var tagged = tp.concat(halves);
    for (int v : mentioned_nodes) {
      Var m = M_[static_cast<std::size_t>(v)];
      std::array<Var, 2> in{m, tagged};
      Var z = tp.concat(in);
      Var lam = tp.sigmoid(tp.add(tp.matvec(tp.param(ids.W_inc), z), tp.param(ids.b_inc)));
      M_[static_cast<std::size_t>(v)] =
          cfg.vector_gate ? tp.add(tp.mul(lam, m), tp.mul(tp.one_minus(lam), tagged))
                          : tp.add(tp.mul_scalar(m, lam), tp.mul_scalar(tagged, tp.one_minus(lam)));
    }
    V_ = compute_V();
    U_ = -1;
  }
  ++t_;
}

}  // namespace mutual
