#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mutual/rng.hpp"
#include "mutual/scenario.hpp"
#include "mutual/schema.hpp"

namespace mutual {

// Lowercases, splits on whitespace and detaches the punctuation marks
// ? , . ! ' into their own tokens.
std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens, std::size_t begin, std::size_t end);

std::size_t levenshtein(std::string_view a, std::string_view b);
bool within_edit_distance_one(std::string_view a, std::string_view b);

bool is_stopword(std::string_view token);
bool is_punctuation(std::string_view token);

enum class VariationKind : std::uint8_t { canonical, acronym, prefix, morphological };
const char* to_string(VariationKind k);

struct LinkedToken {
  std::string span;                  // raw tokens joined by single spaces
  std::size_t begin = 0, end = 0;    // token range [begin, end)
  std::optional<EntityIndex> entity;
  double score = 0.0;
};

// Frozen ranker constants.
struct RankerWeights {
  double exact = 3.0;
  double variation = 2.0;
  double substring = 1.5;
  double edit = 1.0;
  double in_kb_bonus = 0.5;
  std::size_t min_edit_length = 5;
  std::size_t min_substring_length = 4;
};

// Variation strings for every schema entity plus the indexes used for
// substring and edit-distance matching at query time.
class Lexicon {
 public:
  explicit Lexicon(const Schema& schema, RankerWeights weights = {});

  const Schema& schema() const { return *schema_; }
  const RankerWeights& weights() const { return weights_; }

  // Generated variations of one entity (lowercased canonical first).
  std::vector<std::pair<std::string, VariationKind>> variations_of(EntityIndex e) const;
  const std::vector<EntityIndex>* candidates(const std::string& variation) const;
  std::size_t max_span_tokens() const { return max_span_tokens_; }

  // Candidate entities for one span, scored; empty when nothing matches.
  std::vector<std::pair<EntityIndex, double>> score_span(const std::string& span,
                                                         const std::unordered_set<EntityIndex>& kb) const;

 private:
  struct Variant {
    std::string text;
    EntityIndex entity;
    VariationKind kind;
  };

  void add_variation(EntityIndex e, std::string text, VariationKind kind);

  const Schema* schema_;
  RankerWeights weights_;
  std::vector<std::string> canonical_lower_;
  std::vector<Variant> variants_;
  std::unordered_map<std::string, std::vector<EntityIndex>> by_variation_;
  std::unordered_map<std::string, std::vector<std::size_t>> variant_index_;  // text -> variants_
  // Word-anchored substrings of canonical names.
  std::unordered_map<std::string, std::vector<EntityIndex>> by_substring_;
  // Single-deletion neighbourhoods of variation strings.
  std::unordered_map<std::string, std::vector<std::size_t>> by_deletion_;
  std::size_t max_span_tokens_ = 1;
};

std::unordered_set<EntityIndex> kb_entities(const KB& kb);

// Greedy longest-span linking, left to right. Every token is covered by
// exactly one LinkedToken; unlinked tokens pass through one by one.
std::vector<LinkedToken> link_entities(std::span<const std::string> tokens, const Lexicon& lexicon,
                                       const std::unordered_set<EntityIndex>& kb);
std::vector<LinkedToken> link_entities(std::span<const std::string> tokens, const Lexicon& lexicon,
                                       const KB& kb);

// Samples a surface string from the recorded forms, falling back to the
// lowercased canonical name.
std::string realize_entity(const Entity& entity, const SurfaceFormStore& store, Rng& rng);

enum class SpeechAct : std::uint8_t { inform, ask, answer, greeting, apology };
constexpr std::size_t kNumSpeechActs = 5;
const char* to_string(SpeechAct a);
std::optional<SpeechAct> speech_act_from_string(std::string_view s);

class ActSet {
 public:
  ActSet() = default;
  void insert(SpeechAct a) { bits_ |= bit(a); }
  bool contains(SpeechAct a) const { return (bits_ & bit(a)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  std::vector<SpeechAct> list() const;
  bool operator==(const ActSet&) const = default;

 private:
  static std::uint8_t bit(SpeechAct a) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(a)); }
  std::uint8_t bits_ = 0;
};

ActSet classify_utterance(std::span<const std::string> tokens, std::span<const LinkedToken> links);

}  // namespace mutual
