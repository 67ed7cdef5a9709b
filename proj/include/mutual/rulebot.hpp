#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mutual/agent.hpp"
#include "mutual/lexicon.hpp"

namespace mutual {

struct Phrase {
  std::string noun, verb, verb_pl;
};

class TemplateTable {
 public:
  static TemplateTable from_json(const nlohmann::json& j);
  static TemplateTable load(const std::filesystem::path& path);
  static TemplateTable bundled();

  // Templates for one action kind: greet, inform, ask, answer_yes, answer_no.
  const std::vector<std::string>& of(const std::string& kind) const;
  const Phrase& phrase(const std::string& attribute) const;

 private:
  std::map<std::string, std::vector<std::string>> templates_;
  std::map<std::string, Phrase> phrases_;
  Phrase fallback_;
};

struct RuleConfig {
  double mention_delta = 1.0;
  double related_delta = 0.5;
  double select_prob = 0.3;
  double weight_floor = 0.05;
  double pair_prob = 1.0;  // entity set of two instead of one
  double ask_prob = 0.8;   // ask rather than inform
  bool prefer_undiscussed = true;
  // Sample an item by item weight, then entities from it. Otherwise sample
  // an entity by entity weight and optionally a row-mate.
  bool item_first = true;
  // Item weights move only for items holding every mentioned entity (+-
  // mention) or, for a positive mention, some of them (related * share).
  // Otherwise every item moves by the summed entity deltas of its cells.
  bool conjunctive_items = true;
  double negative_item_delta = 10.0;  // conjunctive mode only
  bool skip_reselect = true;          // never re-select the current selection
  // Initial entity weight = count / (n_items / |values of its attribute|),
  // i.e. how over-represented the value is against a uniform draw, instead
  // of the raw count. Prefers values of skewed attributes.
  bool skew_weighting = true;

  // Entity-level updates applied additively to items, entity-first sampling.
  static RuleConfig literal();
};

struct RuleAction {
  enum Kind { greet, inform, ask, answer, select } kind = greet;
  std::vector<EntityIndex> entities;
  int count = 0;  // inform / answer: own items holding every entity
  int item = -1;  // select
};

bool is_negative_mention(const std::string& text);
// The bot's own question pattern: a "?" anywhere or a leading question
// word. Narrower than the corpus speech-act classifier, which also fires on
// relative "who" inside answers.
bool is_question(const std::vector<std::string>& tokens);

// Rule agent: entity and item weights driven by the
// partner's mentions, templated output.
class RuleBot : public Agent {
 public:
  RuleBot(const Scenario& scenario, Side side, const Lexicon& lexicon, const TemplateTable& templates,
          const SurfaceFormStore& forms, Rng rng, RuleConfig config = {});
  // Holds a pointer to the scenario.
  RuleBot(Scenario&&, Side, const Lexicon&, const TemplateTable&, const SurfaceFormStore&, Rng, RuleConfig = {}) = delete;

  std::string kind() const override { return "rule"; }
  void observe(const Event& ev) override;
  AgentTurn act(std::int64_t now_ms, bool can_select) override;

  // Decision and rendering, exposed for tests.
  RuleAction decide(bool can_select);
  std::string render(const RuleAction& action);
  // Applies a partner utterance to the weights.
  void update_weights(const std::vector<EntityIndex>& mentioned, bool negative);

  const std::map<EntityIndex, double>& entity_weights() const { return entity_weights_; }
  const std::vector<double>& item_weights() const { return item_weights_; }
  const std::optional<std::vector<EntityIndex>>& pending_question() const { return pending_question_; }
  int count_items(const std::vector<EntityIndex>& entities) const;
  const std::set<EntityIndex>& discussed() const { return discussed_; }

 private:
  std::string phrase_for(const std::vector<EntityIndex>& entities, const std::string Phrase::*form);

  const Scenario* scenario_;
  Side side_;
  const KB* kb_;
  const Lexicon* lexicon_;
  const TemplateTable* templates_;
  const SurfaceFormStore* forms_;
  Rng rng_;
  RuleConfig config_;
  std::map<EntityIndex, double> entity_weights_;
  std::vector<double> item_weights_;
  std::optional<std::vector<EntityIndex>> pending_question_;
  std::set<EntityIndex> discussed_;  // mentioned by either side so far
  int current_selection_ = -1;
  bool greeted_ = false;
  bool spoke_ = false;
};

}  // namespace mutual
