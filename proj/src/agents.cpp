#include "mutual/agents.hpp"

#include <algorithm>
#include <exception>

#include "mutual/error.hpp"

namespace mutual {

NeuralAgent::NeuralAgent(const DynoNet& model, const Scenario& scenario, Side side, const Lexicon& lexicon,
                         const SurfaceFormStore& forms, Rng rng, std::optional<double> temperature)
    : model_(&model),
      scenario_(&scenario),
      side_(side),
      lexicon_(&lexicon),
      forms_(&forms),
      rng_(std::move(rng)),
      temperature_(temperature),
      tape_(&model.params()),
      state_(std::make_unique<DialogueState>(model, tape_, scenario, side)) {}

void NeuralAgent::observe(const Event& ev) {
  const KB& kb = scenario_->kbs[static_cast<std::size_t>(index_of(side_))];
  if (auto toks = event_tokens(ev, side_, *lexicon_, kb, model_->vocab())) state_->observe(*toks, ev.agent == side_);
}

std::string NeuralAgent::realize(const std::vector<Token>& tokens) {
  std::string out;
  for (const Token& t : tokens) {
    if (!out.empty()) out += ' ';
    switch (t.kind) {
      case Token::word: out += model_->vocab().word(t.id); break;
      case Token::entity: out += realize_entity(model_->schema().entity(t.id), *forms_, rng_); break;
      case Token::item: out += "item-" + std::to_string(t.id); break;
    }
  }
  return out;
}

AgentTurn NeuralAgent::act(std::int64_t, bool can_select) {
  const Sampled s = state_->sample(rng_, can_select, temperature_);
  AgentTurn turn;
  if (s.select_row) turn.select = s.select_row;
  else turn.utterances.push_back(realize(s.tokens));
  return turn;
}

ReplayAgent::ReplayAgent(const Transcript& recorded, Side side) {
  int turn = -1;
  for (const Event& ev : recorded.events) {
    if (ev.agent != side || ev.kind == EventKind::typing) continue;
    if (ev.turn != turn || bursts_.empty() || bursts_.back().select) {
      bursts_.emplace_back();
      turn = ev.turn;
    }
    if (ev.kind == EventKind::utterance) bursts_.back().utterances.push_back(ev.text);
    else bursts_.back().select = ev.item;
  }
}

AgentTurn ReplayAgent::act(std::int64_t, bool can_select) {
  if (exhausted()) return {};
  AgentTurn t = bursts_[next_++];
  if (!can_select) t.select.reset();
  return t;
}

std::unique_ptr<Agent> make_agent(const std::string& kind, const Scenario& scenario, Side side,
                                  const AgentResources& res, Rng rng) {
  auto need = [&](const void* p, const char* what) {
    if (!p) throw UsageError("agent '" + kind + "' needs " + what);
  };
  need(res.lexicon, "a lexicon");
  if (kind == "rule") {
    need(res.templates, "templates");
    need(res.forms, "surface forms");
    return std::make_unique<RuleBot>(scenario, side, *res.lexicon, *res.templates, *res.forms, std::move(rng), res.rule);
  }
  if (kind == "dynonet" || kind == "stanonet") {
    const DynoNet* m = kind == "dynonet" ? res.dynonet : res.stanonet;
    need(m, "a model checkpoint");
    need(res.forms, "surface forms");
    return std::make_unique<NeuralAgent>(*m, scenario, side, *res.lexicon, *res.forms, std::move(rng), res.temperature);
  }
  if (kind == "replay") {
    need(res.replay, "a recorded transcript");
    return std::make_unique<ReplayAgent>(*res.replay, side);
  }
  throw UsageError("unknown agent kind '" + kind + "' (rule, dynonet, stanonet, replay)");
}

std::vector<Transcript> selfplay(const std::vector<Scenario>& scenarios, const AgentResources& res,
                                 const SelfPlayOptions& options, const std::vector<Transcript>* replay) {
  const bool replays = options.a == "replay" || options.b == "replay";
  if (replays && (!replay || replay->size() < scenarios.size()))
    throw UsageError("replay needs one recorded transcript per scenario");
  std::vector<Transcript> out(scenarios.size());
  std::vector<std::exception_ptr> errors(scenarios.size());
  const long n = static_cast<long>(scenarios.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.jobs))
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      AgentResources r = res;
      if (replays) r.replay = &(*replay)[k];
      auto a = make_agent(options.a, scenarios[k], Side::A, r, Rng::derive(options.seed, 3 * k));
      auto b = make_agent(options.b, scenarios[k], Side::B, r, Rng::derive(options.seed, 3 * k + 1));
      Rng rng = Rng::derive(options.seed, 3 * k + 2);
      out[k] = run_dialogue(*a, *b, scenarios[k], *res.lexicon, rng, options.limits, options.pacing);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace mutual
