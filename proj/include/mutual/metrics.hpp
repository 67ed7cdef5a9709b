#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mutual/scenario.hpp"
#include "mutual/transcript.hpp"

namespace mutual {

struct CorpusStats {
  std::size_t dialogues = 0, successes = 0;
  std::size_t turns = 0, utterances = 0, selections = 0, tokens = 0;

  std::optional<double> loss;  // per-token cross-entropy, supplied by a model
  double L_u = 0.0;            // tokens per utterance
  double H = 0.0;              // unigram entropy, bits
  double C = 0.0;              // successes / dialogues
  double C_T = 0.0;            // successes / turns
  double C_S = 0.0;            // successes / select events
  double Sel = 0.0;            // select events / (utterances + select events)
  std::array<double, kNumSpeechActs> acts{};  // fraction of utterances carrying each act

  // Strategy, over each agent's first mentioned entity.
  double ent1 = 0.0;   // KB count of the entity / max entity count in that KB
  double attr1 = 0.0;  // distinct values of its attribute / max over attributes
  double ents_per_dialogue = 0.0;
  double attrs_per_dialogue = 0.0;
  std::array<std::int64_t, 3> first_attr_hist{};  // indexed by AlphaGroup
  std::int64_t first_mentions = 0;
  std::int64_t excluded = 0;  // agent-dialogues without any entity mention

  double mean_turns() const { return dialogues ? static_cast<double>(turns) / static_cast<double>(dialogues) : 0.0; }
  double mean_selections() const {
    return dialogues ? static_cast<double>(selections) / static_cast<double>(dialogues) : 0.0;
  }
};

// Every transcript must carry its scenario. Throws DataError on an empty
// corpus or a missing scenario.
CorpusStats corpus_stats(std::span<const Transcript> corpus, const Schema& schema);

nlohmann::json stats_to_json(const CorpusStats& s);
// Aligned text table, one row per named system.
std::string stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows);
// group,count lines for the first-mentioned attribute histogram.
std::string first_attr_histogram_csv(const CorpusStats& s);

}  // namespace mutual
