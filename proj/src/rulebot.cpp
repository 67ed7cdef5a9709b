#include "mutual/rulebot.hpp"

#include <algorithm>
#include <fstream>

#include "mutual/error.hpp"

namespace mutual {

// ---------------------------------------------------------------- templates

TemplateTable TemplateTable::from_json(const nlohmann::json& j) {
  TemplateTable t;
  try {
    for (const char* kind : {"greet", "inform", "ask", "answer_yes", "answer_no"}) {
      auto list = j.at(kind).get<std::vector<std::string>>();
      if (list.empty()) throw DataError(std::string("template kind '") + kind + "' is empty");
      t.templates_[kind] = std::move(list);
    }
    auto read_phrase = [](const nlohmann::json& p) {
      return Phrase{p.at("noun").get<std::string>(), p.at("verb").get<std::string>(),
                    p.at("verb_pl").get<std::string>()};
    };
    for (const auto& [attr, p] : j.at("phrases").items()) t.phrases_[attr] = read_phrase(p);
    t.fallback_ = read_phrase(j.at("fallback_phrase"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed template table: ") + e.what());
  }
  return t;
}

TemplateTable TemplateTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

TemplateTable TemplateTable::bundled() { return load(bundled_data_dir() / "templates.json"); }

const std::vector<std::string>& TemplateTable::of(const std::string& kind) const {
  auto it = templates_.find(kind);
  if (it == templates_.end()) throw UsageError("no templates for '" + kind + "'");
  return it->second;
}

const Phrase& TemplateTable::phrase(const std::string& attribute) const {
  auto it = phrases_.find(attribute);
  return it == phrases_.end() ? fallback_ : it->second;
}

// ---------------------------------------------------------------- rule bot

bool is_negative_mention(const std::string& text) {
  if (text.find("n't") != std::string::npos) return true;
  for (const auto& t : tokenize(text))
    if (t == "no" || t == "none" || t == "nothing" || t == "zero") return true;
  return false;
}

bool is_question(const std::vector<std::string>& tokens) {
  static const std::set<std::string> openers{"do", "does", "what", "who", "which", "how", "any", "anyone"};
  if (std::find(tokens.begin(), tokens.end(), "?") != tokens.end()) return true;
  return !tokens.empty() && openers.count(tokens.front()) > 0;
}

RuleConfig RuleConfig::literal() {
  RuleConfig c;
  c.pair_prob = 0.5;
  c.ask_prob = 0.5;
  c.item_first = false;
  c.conjunctive_items = false;
  c.negative_item_delta = 1.0;
  c.skip_reselect = false;
  c.skew_weighting = false;
  return c;
}

RuleBot::RuleBot(const Scenario& scenario, Side side, const Lexicon& lexicon, const TemplateTable& templates,
                 const SurfaceFormStore& forms, Rng rng, RuleConfig config)
    : scenario_(&scenario),
      side_(side),
      kb_(&scenario.kbs[static_cast<std::size_t>(index_of(side))]),
      lexicon_(&lexicon),
      templates_(&templates),
      forms_(&forms),
      rng_(std::move(rng)),
      config_(config) {
  for (const auto& item : kb_->items)
    for (EntityIndex e : item) entity_weights_[e] += 1.0;
  if (config_.skew_weighting) {
    const Schema& schema = lexicon.schema();
    for (auto& [e, w] : entity_weights_)
      w *= static_cast<double>(schema.values_of(schema.attribute_of(e)).size()) / static_cast<double>(kb_->items.size());
  }
  item_weights_.assign(kb_->items.size(), 1.0);
}

int RuleBot::count_items(const std::vector<EntityIndex>& entities) const {
  int n = 0;
  for (const auto& item : kb_->items) {
    bool all = true;
    for (EntityIndex e : entities) all = all && std::find(item.begin(), item.end(), e) != item.end();
    n += all ? 1 : 0;
  }
  return n;
}

void RuleBot::update_weights(const std::vector<EntityIndex>& mentioned, bool negative) {
  const Schema& schema = lexicon_->schema();
  const double sign = negative ? -1.0 : 1.0;
  // One delta per entity: a mention beats a relation.
  std::map<EntityIndex, double> delta;
  std::vector<EntityIndex> known;
  for (EntityIndex m : mentioned)
    if (entity_weights_.count(m)) known.push_back(m);  // others say nothing about our items
  for (EntityIndex m : known)
    for (const auto& item : kb_->items) {
      const bool in_row = std::find(item.begin(), item.end(), m) != item.end();
      for (EntityIndex e : item)
        if (e != m && (in_row || schema.attribute_of(e) == schema.attribute_of(m))) delta[e] = sign * config_.related_delta;
    }
  for (EntityIndex m : known) delta[m] = sign * config_.mention_delta;
  for (const auto& [e, d] : delta) entity_weights_[e] += d;

  if (!config_.conjunctive_items) {
    for (std::size_t r = 0; r < kb_->items.size(); ++r)
      for (EntityIndex e : kb_->items[r]) {
        auto it = delta.find(e);
        if (it != delta.end()) item_weights_[r] += it->second;
      }
    return;
  }
  if (mentioned.empty()) return;
  for (std::size_t r = 0; r < kb_->items.size(); ++r) {
    const auto& item = kb_->items[r];
    std::size_t hit = 0;
    for (EntityIndex m : mentioned) hit += std::find(item.begin(), item.end(), m) != item.end() ? 1 : 0;
    if (hit == mentioned.size())
      item_weights_[r] += negative ? -config_.negative_item_delta : config_.mention_delta;
    else if (!negative)
      item_weights_[r] += config_.related_delta * static_cast<double>(hit) / static_cast<double>(mentioned.size());
  }
}

void RuleBot::observe(const Event& ev) {
  if (ev.agent == side_) {
    spoke_ = true;
    if (ev.kind == EventKind::select && ev.item) current_selection_ = *ev.item;
    return;
  }
  if (ev.kind != EventKind::utterance) return;
  const auto tokens = tokenize(ev.text);
  const auto links = link_entities(tokens, *lexicon_, *kb_);
  std::vector<EntityIndex> ents;
  for (const auto& lt : links)
    if (lt.entity && std::find(ents.begin(), ents.end(), *lt.entity) == ents.end()) ents.push_back(*lt.entity);
  update_weights(ents, is_negative_mention(ev.text));
  discussed_.insert(ents.begin(), ents.end());
  if (!ents.empty() && is_question(tokens)) pending_question_ = ents;
}

RuleAction RuleBot::decide(bool can_select) {
  RuleAction a;
  if (can_select) {
    const auto best = std::max_element(item_weights_.begin(), item_weights_.end());
    const bool repeat = config_.skip_reselect && current_selection_ == static_cast<int>(best - item_weights_.begin());
    if (best != item_weights_.end() && *best > 1.0 && !repeat && rng_.bernoulli(config_.select_prob)) {
      a.kind = RuleAction::select;
      a.item = static_cast<int>(best - item_weights_.begin());
      return a;
    }
  }
  if (pending_question_) {
    a.kind = RuleAction::answer;
    a.entities = *pending_question_;
    a.count = count_items(a.entities);
    pending_question_.reset();
    return a;
  }

  auto sampling_weight = [&](EntityIndex e) {
    return std::max(entity_weights_.at(e), config_.weight_floor);
  };
  if (config_.item_first) {
    std::vector<double> iw;
    for (double x : item_weights_) iw.push_back(std::max(x, config_.weight_floor));
    const auto& item = kb_->items[rng_.categorical(iw)];
    std::vector<EntityIndex> pool(item.begin(), item.end());
    const std::size_t k = rng_.bernoulli(config_.pair_prob) && pool.size() > 1 ? 2 : 1;
    while (a.entities.size() < k) {
      std::vector<double> pw;
      for (EntityIndex e : pool)
        pw.push_back(sampling_weight(e) * (config_.prefer_undiscussed && discussed_.count(e) ? 0.1 : 1.0));
      const auto j = rng_.categorical(pw);
      a.entities.push_back(pool[j]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
    a.kind = rng_.bernoulli(config_.ask_prob) ? RuleAction::ask : RuleAction::inform;
    a.count = count_items(a.entities);
    return a;
  }
  // Prefer entities nobody has talked about yet.
  std::vector<EntityIndex> ents;
  std::vector<double> w;
  for (int pass = 0; pass < 2 && ents.empty(); ++pass)
    for (const auto& [e, _] : entity_weights_) {
      if (pass == 0 && config_.prefer_undiscussed && discussed_.count(e)) continue;
      ents.push_back(e);
      w.push_back(sampling_weight(e));
    }
  const EntityIndex first = ents[rng_.categorical(w)];
  a.entities = {first};
  if (rng_.bernoulli(config_.pair_prob)) {
    // A second entity from the same items, so the set describes friends we have.
    std::set<EntityIndex> mates;
    for (const auto& item : kb_->items)
      if (std::find(item.begin(), item.end(), first) != item.end())
        for (EntityIndex e : item)
          if (e != first) mates.insert(e);
    if (!mates.empty()) {
      std::vector<EntityIndex> me(mates.begin(), mates.end());
      std::vector<double> mw;
      for (EntityIndex e : me) mw.push_back(sampling_weight(e));
      a.entities.push_back(me[rng_.categorical(mw)]);
    }
  }
  a.kind = rng_.bernoulli(config_.ask_prob) ? RuleAction::ask : RuleAction::inform;
  a.count = count_items(a.entities);
  return a;
}

std::string RuleBot::phrase_for(const std::vector<EntityIndex>& entities, const std::string Phrase::*form) {
  const Schema& schema = lexicon_->schema();
  std::string out;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const Entity& ent = schema.entity(entities[i]);
    std::string p = templates_->phrase(ent.type).*form;
    const auto at = p.find("{e}");
    if (at != std::string::npos) p.replace(at, 3, realize_entity(ent, *forms_, rng_));
    if (i > 0) out += " and ";
    out += p;
  }
  return out;
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (auto at = s.find(from); at != std::string::npos; at = s.find(from, at + to.size())) s.replace(at, from.size(), to);
}

}  // namespace

std::string RuleBot::render(const RuleAction& action) {
  std::string kind;
  switch (action.kind) {
    case RuleAction::greet: kind = "greet"; break;
    case RuleAction::inform: kind = "inform"; break;
    case RuleAction::ask: kind = "ask"; break;
    case RuleAction::answer: kind = action.count > 0 ? "answer_yes" : "answer_no"; break;
    case RuleAction::select: return {};
  }
  const auto& options = templates_->of(kind);
  std::string text = options[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(options.size()) - 1))];
  const bool one = action.count == 1;
  replace_all(text, "{n}", std::to_string(action.count));
  replace_all(text, "{friends}", one ? "friend" : "friends");
  if (text.find("{noun}") != std::string::npos) replace_all(text, "{noun}", phrase_for(action.entities, &Phrase::noun));
  if (text.find("{verb_pl}") != std::string::npos)
    replace_all(text, "{verb_pl}", phrase_for(action.entities, one ? &Phrase::verb : &Phrase::verb_pl));
  if (text.find("{verb}") != std::string::npos) replace_all(text, "{verb}", phrase_for(action.entities, &Phrase::verb));
  return text;
}

AgentTurn RuleBot::act(std::int64_t, bool can_select) {
  AgentTurn turn;
  if (!greeted_) {
    greeted_ = true;
    RuleAction hello;
    hello.kind = RuleAction::greet;
    turn.utterances.push_back(render(hello));
  }
  const RuleAction a = decide(can_select);
  discussed_.insert(a.entities.begin(), a.entities.end());
  if (a.kind == RuleAction::select) turn.select = a.item;
  else turn.utterances.push_back(render(a));
  return turn;
}

}  // namespace mutual
