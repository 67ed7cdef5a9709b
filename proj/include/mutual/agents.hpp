#pragma once

#include <memory>
#include <optional>
#include <string>

#include "mutual/agent.hpp"
#include "mutual/dynonet.hpp"
#include "mutual/rulebot.hpp"
#include "mutual/session.hpp"

namespace mutual {

// DynoNet (or StanoNet, when the model is static) playing one side.
class NeuralAgent : public Agent {
 public:
  NeuralAgent(const DynoNet& model, const Scenario& scenario, Side side, const Lexicon& lexicon,
              const SurfaceFormStore& forms, Rng rng, std::optional<double> temperature = std::nullopt);
  NeuralAgent(const DynoNet&, Scenario&&, Side, const Lexicon&, const SurfaceFormStore&, Rng,
              std::optional<double> = std::nullopt) = delete;
  NeuralAgent(const NeuralAgent&) = delete;  // the state points at tape_
  NeuralAgent& operator=(const NeuralAgent&) = delete;

  std::string kind() const override { return model_->config().dynamic ? "dynonet" : "stanonet"; }
  void observe(const Event& ev) override;
  AgentTurn act(std::int64_t now_ms, bool can_select) override;

  // Surface text of sampled tokens: words verbatim, entities realized.
  std::string realize(const std::vector<Token>& tokens);

 private:
  const DynoNet* model_;
  const Scenario* scenario_;
  Side side_;
  const Lexicon* lexicon_;
  const SurfaceFormStore* forms_;
  Rng rng_;
  std::optional<double> temperature_;
  Tape tape_;
  std::unique_ptr<DialogueState> state_;
};

// Replays one side of a recorded dialogue, one burst per activation.
class ReplayAgent : public Agent {
 public:
  ReplayAgent(const Transcript& recorded, Side side);

  std::string kind() const override { return "replay"; }
  void observe(const Event&) override {}
  AgentTurn act(std::int64_t now_ms, bool can_select) override;
  bool exhausted() const { return next_ >= bursts_.size(); }

 private:
  std::vector<AgentTurn> bursts_;
  std::size_t next_ = 0;
};

// What the agent factory may draw on. Models may be null when unused.
struct AgentResources {
  const Lexicon* lexicon = nullptr;
  const TemplateTable* templates = nullptr;
  const SurfaceFormStore* forms = nullptr;
  const DynoNet* dynonet = nullptr;
  const DynoNet* stanonet = nullptr;
  RuleConfig rule;
  std::optional<double> temperature;
  const Transcript* replay = nullptr;  // for kind "replay"
};

// kind: rule | dynonet | stanonet | replay. Throws UsageError for an
// unknown kind or a missing resource.
std::unique_ptr<Agent> make_agent(const std::string& kind, const Scenario& scenario, Side side,
                                  const AgentResources& res, Rng rng);

}  // namespace mutual

namespace mutual {

struct SelfPlayOptions {
  std::string a = "rule", b = "rule";
  std::uint64_t seed = 1;
  int jobs = 1;
  Limits limits;
  Pacing pacing;
};

// One dialogue per scenario on the simulated clock. Dialogue i draws its
// agent and session streams from (seed, i) alone, so the result does not
// depend on `jobs`. With a "replay" side, replay[i] is replayed.
std::vector<Transcript> selfplay(const std::vector<Scenario>& scenarios, const AgentResources& res,
                                 const SelfPlayOptions& options, const std::vector<Transcript>* replay = nullptr);

}  // namespace mutual
