#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mutual/kgraph.hpp"
#include "mutual/lexicon.hpp"
#include "mutual/scenario.hpp"
#include "mutual/tensor.hpp"
#include "mutual/transcript.hpp"

namespace mutual {

struct DynoConfig {
  int hidden = 100;
  int emb = 100;
  int rel_dim = 16;
  int K = 2;
  bool abstraction = true;
  bool dynamic = true;       // false = StanoNet
  bool vector_gate = false;  // per-component mention gate instead of a scalar
  double temperature = 0.5;
  bool halve_select = true;
  int max_len = 20;
  // training
  double lr = 0.5;
  double adagrad_init = 0.1;
  int batch = 8;
  int min_epochs = 10;
  int patience = 5;
  int max_epochs = 30;
  std::uint64_t seed = 1;
};

nlohmann::json config_to_json(const DynoConfig& c);
// Missing keys keep their defaults; unknown keys are a DataError.
DynoConfig config_from_json(const nlohmann::json& j, DynoConfig base = {});

class Vocab {
 public:
  static constexpr int kUnk = 0, kGo = 1, kEos = 2, kSelect = 3;

  Vocab();
  int add(const std::string& word);
  int id(const std::string& word) const;  // kUnk when unknown
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct Token {
  enum Kind : std::uint8_t { word, entity, item } kind = word;
  int id = 0;  // word id, EntityIndex, or KB row
  bool operator==(const Token&) const = default;
};

// Tokens of an utterance from `own`'s perspective: linked spans become
// entity tokens, everything else vocabulary words.
std::vector<Token> utterance_tokens(const std::string& text, const Lexicon& lexicon, const KB& own_kb,
                                    const Vocab& vocab);
// Token sequence of any event from `own`'s perspective; typing events give
// nullopt. The partner's selection is visible only as the marker.
std::optional<std::vector<Token>> event_tokens(const Event& ev, Side own, const Lexicon& lexicon, const KB& own_kb,
                                               const Vocab& vocab);

// Renormalizes after halving the probability of index `select`.
void halve_selection(std::vector<double>& probs, int select);

class DynoNet {
 public:
  DynoNet(const Schema& schema, DynoConfig config, Vocab vocab);

  const Schema& schema() const { return *schema_; }
  const DynoConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  void init_params(Rng& rng) { params_.init_uniform(rng, -0.1, 0.1); }

  int feature_dim() const { return feat_dim_; }
  int node_dim() const { return node_dim_; }  // width of V_t(v)
  int depth0_dim() const { return d0_; }

  nlohmann::json checkpoint() const;
  void save(const std::filesystem::path& path) const;
  static DynoNet from_checkpoint(const Schema& schema, const nlohmann::json& j);
  static DynoNet load(const Schema& schema, const std::filesystem::path& path);

  struct Ids {
    ParamId E_word, E_type, E_id = -1;
    LstmParams enc, dec;
    ParamId W_inc, b_inc;
    ParamId R;
    std::vector<ParamId> W_node, W_rel;  // per depth 1..K
    ParamId W_ah, W_av, w_attn;
    ParamId W_vocab, b_vocab;
  };
  const Ids& ids() const { return ids_; }

 private:
  const Schema* schema_;
  DynoConfig config_;
  Vocab vocab_;
  ParameterStore params_;
  Ids ids_;
  int feat_dim_ = 0, d0_ = 0, node_dim_ = 0;
};

// Compressed adjacency of a graph's out-edges.
struct Adjacency {
  std::vector<int> offsets{0}, targets, labels;
};
Adjacency adjacency_of(const DialogueGraph& g);

// Depth-K embeddings [V^0, ..., V^K] from V^0 rows; message weights per
// depth from the model's parameters.
Var message_passing(Tape& tape, const DynoNet& model, Var V0, const Adjacency& adj);

struct Sampled {
  std::vector<Token> tokens;      // without <eos>
  std::optional<int> select_row;  // set when the reply is a selection
};

// One agent's view of a dialogue on a tape: graph, mention vectors,
// embeddings and the carried encoder state.
class DialogueState {
 public:
  DialogueState(const DynoNet& model, Tape& tape, const Scenario& scenario, Side own);

  const DialogueGraph& graph() const { return graph_; }
  Var embeddings() const { return V_; }
  Var mention(int node) const { return M_.at(static_cast<std::size_t>(node)); }
  Var encoder_h() const { return h_; }
  int utterances() const { return t_; }
  // Output index of a node in the joint distribution.
  int node_output(int node) const { return model_->vocab().size() + node; }

  // Teacher-forced negative log-likelihood of `target` as the next own
  // utterance (plus <eos>); adds the token count to `n_tokens`.
  Var decode_loss(const std::vector<Token>& target, int& n_tokens);
  // Distribution over vocab ∪ nodes for the token after `prefix`.
  std::vector<double> next_distribution(const std::vector<Token>& prefix);
  Sampled sample(Rng& rng, bool can_select, std::optional<double> temperature = std::nullopt);

  // Reads an utterance (own or partner) into the state.
  void observe(const std::vector<Token>& tokens, bool self);

 private:
  struct Step {
    LstmState s;
    Var scores, ctx;
  };
  Var zeros(int n);
  Var abstraction(const Token& tok, Var V);
  Var compute_V();
  void ensure_attention();
  Var scores_for(Var h);
  Var context(Var scores);
  int output_of(const Token& tok) const;

  const DynoNet* model_;
  Tape* tape_;
  const Scenario* scenario_;
  Side own_;
  DialogueGraph graph_;
  std::vector<Var> M_;
  Var V_;
  Var U_ = -1;  // V W_av^T, per turn
  Var h_, c_;
  Adjacency adj_;
  int t_ = 0;
  std::unordered_map<int, Var> zero_cache_;
};

// ---------------------------------------------------------------- training

struct Example {
  const Transcript* transcript;
  const Scenario* scenario;
  Side own;
};

Vocab build_vocab(const std::vector<Transcript>& corpus, const Lexicon& lexicon);

// Sum of token NLLs of `own`'s utterances in one dialogue, on `tape`.
Var example_loss(const DynoNet& model, Tape& tape, const Example& ex, const Lexicon& lexicon, int& n_tokens);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // per-token cross-entropy
  double dev_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  int best_epoch = 0;
  double best_dev = 0.0;
  double test_loss = 0.0;
  std::size_t n_train = 0, n_dev = 0, n_test = 0;
};

struct Split {
  std::vector<const Transcript*> train, dev, test;
};
// Successful dialogues only, shuffled with `seed` and cut 8:1:1.
Split split_corpus(const std::vector<Transcript>& corpus, std::uint64_t seed);

std::vector<Example> make_examples(const std::vector<const Transcript*>& dialogues);

// Per-token cross-entropy over examples (parallel over examples, ordered sum).
double evaluate_loss(const DynoNet& model, const std::vector<Example>& examples, const Lexicon& lexicon);

struct TrainOptions {
  std::function<void(const EpochStats&)> on_epoch;
  // Ends training after the epoch for which it returns true.
  std::function<bool(const EpochStats&)> stop_when;
  bool use_early_stopping = true;
};

// AdaGrad over minibatches; per-example gradients are reduced in example
// order so results do not depend on the thread count. Restores the best
// dev-loss parameters at the end.
TrainResult train(DynoNet& model, const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
                  const Lexicon& lexicon, const TrainOptions& options = {});

}  // namespace mutual
