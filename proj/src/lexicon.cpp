#include "mutual/lexicon.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>

#include "mutual/error.hpp"

namespace mutual {

namespace {

// Function words and chat fillers that never start or end an entity span
// and are never emitted as variations.
const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a", "about", "after", "all", "also", "am", "an", "and", "any", "anyone", "anything", "are", "as", "at",
      "be", "been", "being", "both", "but", "by", "can", "could", "did", "do", "does", "don", "either", "else",
      "even", "every", "few", "for", "free", "friend", "friends", "from", "go", "goes", "going", "got", "had",
      "has", "have", "he", "hello", "her", "here", "hey", "hi", "him", "his", "hiya", "how", "i", "if", "in",
      "into", "is", "it", "its", "just", "know", "let", "lets", "like", "likes", "list", "many", "maybe", "me",
      "mine", "more", "most", "my", "named", "no", "none", "nope", "not", "nothing", "now", "of", "ok", "okay",
      "on", "one", "only", "or", "other", "our", "out", "over", "prefer", "prefers", "same", "she", "so",
      "some", "sorry", "still", "studied", "studying", "sure", "t", "than", "that", "the", "their", "them",
      "then", "there", "they", "think", "this", "to", "too", "two", "up", "very", "was", "we", "well", "went",
      "were", "what", "when", "where", "which", "who", "will", "with", "work", "works", "working", "would",
      "yeah", "yep", "yes", "you", "your", "zero", "s", "d", "m", "ll", "re", "ve"};
  return words;
}

// Words that do not identify an entity on their own and therefore do not
// contribute prefix variations.
const std::unordered_set<std::string>& generic_words() {
  static const std::unordered_set<std::string> words = {
      "university", "college", "institute", "school", "company", "inc", "science", "engineering", "of",
      "the", "and", "corporation", "group"};
  return words;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool is_number(std::string_view t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool linkable(std::string_view t) { return !is_stopword(t) && !is_punctuation(t) && !is_number(t); }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  static constexpr std::string_view kPunct = "?,.!'";
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (kPunct.find(c) != std::string_view::npos) {
      flush();
      tokens.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return tokens;
}

std::string join_tokens(std::span<const std::string> tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

bool within_edit_distance_one(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (a.size() - b.size() > 1) return false;
  std::size_t i = 0;
  while (i < b.size() && a[i] == b[i]) ++i;
  if (i == b.size()) return true;
  // Skip the mismatch in a; in b too when it is a substitution.
  std::size_t j = a.size() == b.size() ? i + 1 : i;
  for (++i; i < a.size(); ++i, ++j)
    if (a[i] != b[j]) return false;
  return true;
}

bool is_stopword(std::string_view token) { return stopwords().count(std::string(token)) > 0; }

bool is_punctuation(std::string_view token) {
  return token.size() == 1 && std::string_view("?,.!'").find(token[0]) != std::string_view::npos;
}

const char* to_string(VariationKind k) {
  switch (k) {
    case VariationKind::canonical: return "canonical";
    case VariationKind::acronym: return "acronym";
    case VariationKind::prefix: return "prefix";
    case VariationKind::morphological: return "morphological";
  }
  return "?";
}

Lexicon::Lexicon(const Schema& schema, RankerWeights weights) : schema_(&schema), weights_(weights) {
  const auto n = schema.num_entities();
  canonical_lower_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = static_cast<EntityIndex>(i);
    const Entity& ent = schema.entity(e);
    const std::string canon = lower(ent.canonical);
    canonical_lower_[i] = canon;
    // The canonical form is kept even if it happens to be a stopword.
    variants_.push_back({canon, e, VariationKind::canonical});
    by_variation_[canon].push_back(e);

    const auto words = split_words(canon);
    if (words.size() >= 2) {
      std::string acronym;
      for (const auto& w : words) acronym += w[0];
      add_variation(e, acronym, VariationKind::acronym);
    }
    for (const auto& w : words) {
      if (generic_words().count(w) || is_stopword(w)) continue;
      for (std::size_t len = 4; len <= w.size(); ++len) add_variation(e, w.substr(0, len), VariationKind::prefix);
    }
    // Plural / singular of the whole name.
    if (canon.back() != 's') {
      add_variation(e, canon + "s", VariationKind::morphological);
    } else if (canon.size() > 4) {
      add_variation(e, canon.substr(0, canon.size() - 1), VariationKind::morphological);
    }
    // Gerund hobbies: hiking -> hike, hikes; swimming -> swim, swims.
    if (ent.type == "hobby") {
      for (const auto& w : words) {
        if (w.size() < 6 || w.compare(w.size() - 3, 3, "ing") != 0) continue;
        std::string stem = w.substr(0, w.size() - 3);
        const std::size_t k = stem.size();
        if (k >= 2 && stem[k - 1] == stem[k - 2] && !is_vowel(stem[k - 1])) {
          stem.pop_back();
          add_variation(e, stem, VariationKind::morphological);
          add_variation(e, stem + "s", VariationKind::morphological);
        } else {
          add_variation(e, stem, VariationKind::morphological);
          add_variation(e, stem + "s", VariationKind::morphological);
          add_variation(e, stem + "e", VariationKind::morphological);
          add_variation(e, stem + "es", VariationKind::morphological);
        }
      }
    }

    // Word-anchored substrings of the canonical name. A substring that only
    // touches generic words ("univ", "company") identifies nothing.
    std::vector<bool> specific_char(canon.size(), false);
    for (std::size_t ws = 0; ws < canon.size();) {
      std::size_t we = std::min(canon.find(' ', ws), canon.size());
      const std::string word = canon.substr(ws, we - ws);
      const bool specific = !generic_words().count(word) && !is_stopword(word);
      for (std::size_t k = ws; k < we; ++k) specific_char[k] = specific;
      ws = we + 1;
    }
    for (std::size_t start = 0; start < canon.size(); ++start) {
      if ((start > 0 && canon[start - 1] != ' ') || canon[start] == ' ') continue;
      bool specific = false;
      for (std::size_t end = start + 1; end <= canon.size(); ++end) {
        specific = specific || specific_char[end - 1];
        if (end - start < weights_.min_substring_length || !specific) continue;
        auto& v = by_substring_[canon.substr(start, end - start)];
        if (v.empty() || v.back() != e) v.push_back(e);
      }
    }
  }

  for (std::size_t vi = 0; vi < variants_.size(); ++vi) {
    const auto& text = variants_[vi].text;
    max_span_tokens_ = std::max(max_span_tokens_, split_words(text).size());
    variant_index_[text].push_back(vi);
    if (text.size() + 1 < weights_.min_edit_length) continue;
    by_deletion_[text].push_back(vi);
    for (std::size_t d = 0; d < text.size(); ++d) {
      std::string del = text.substr(0, d) + text.substr(d + 1);
      auto& v = by_deletion_[del];
      if (v.empty() || v.back() != vi) v.push_back(vi);
    }
  }
  for (auto& [text, ents] : by_variation_) {
    std::sort(ents.begin(), ents.end());
    ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
  }
}

void Lexicon::add_variation(EntityIndex e, std::string text, VariationKind kind) {
  if (text.size() < 2 || is_stopword(text)) return;
  auto& ents = by_variation_[text];
  for (const auto& v : variants_)
    if (v.entity == e && v.text == text) return;
  variants_.push_back({text, e, kind});
  ents.push_back(e);
}

std::vector<std::pair<std::string, VariationKind>> Lexicon::variations_of(EntityIndex e) const {
  std::vector<std::pair<std::string, VariationKind>> out;
  for (const auto& v : variants_)
    if (v.entity == e) out.emplace_back(v.text, v.kind);
  return out;
}

const std::vector<EntityIndex>* Lexicon::candidates(const std::string& variation) const {
  auto it = by_variation_.find(variation);
  return it == by_variation_.end() ? nullptr : &it->second;
}

std::vector<std::pair<EntityIndex, double>> Lexicon::score_span(
    const std::string& span, const std::unordered_set<EntityIndex>& kb) const {
  std::map<EntityIndex, double> scores;
  auto bump = [&](EntityIndex e, double s) {
    auto [it, inserted] = scores.emplace(e, s);
    if (!inserted) it->second = std::max(it->second, s);
  };
  if (auto it = by_variation_.find(span); it != by_variation_.end()) {
    for (EntityIndex e : it->second)
      bump(e, canonical_lower_[static_cast<std::size_t>(e)] == span ? weights_.exact : weights_.variation);
  }
  if (span.size() >= weights_.min_substring_length) {
    if (auto it = by_substring_.find(span); it != by_substring_.end())
      for (EntityIndex e : it->second) bump(e, weights_.substring);
  }
  if (span.size() >= weights_.min_edit_length) {
    auto probe = [&](const std::string& key) {
      auto it = by_deletion_.find(key);
      if (it == by_deletion_.end()) return;
      for (std::size_t vi : it->second) {
        const auto& v = variants_[vi];
        if (v.text != span && within_edit_distance_one(span, v.text)) bump(v.entity, weights_.edit);
      }
    };
    probe(span);
    for (std::size_t d = 0; d < span.size(); ++d) probe(span.substr(0, d) + span.substr(d + 1));
  }
  std::vector<std::pair<EntityIndex, double>> out;
  for (auto [e, s] : scores) out.emplace_back(e, s + (kb.count(e) ? weights_.in_kb_bonus : 0.0));
  return out;
}

std::unordered_set<EntityIndex> kb_entities(const KB& kb) {
  std::unordered_set<EntityIndex> out;
  for (const auto& item : kb.items) out.insert(item.begin(), item.end());
  return out;
}

std::vector<LinkedToken> link_entities(std::span<const std::string> tokens, const Lexicon& lexicon,
                                       const std::unordered_set<EntityIndex>& kb) {
  std::vector<LinkedToken> out;
  const std::size_t n = tokens.size();
  std::size_t i = 0;
  while (i < n) {
    bool linked = false;
    if (linkable(tokens[i])) {
      const std::size_t max_len = std::min(lexicon.max_span_tokens(), n - i);
      for (std::size_t len = max_len; len >= 1 && !linked; --len) {
        if (!linkable(tokens[i + len - 1])) continue;
        std::string span = join_tokens(tokens, i, i + len);
        auto scored = lexicon.score_span(span, kb);
        if (scored.empty()) continue;
        // Highest score; ties go to the alphabetically first entity id.
        const auto& schema = lexicon.schema();
        auto best = std::max_element(scored.begin(), scored.end(), [&](const auto& x, const auto& y) {
          if (x.second != y.second) return x.second < y.second;
          return schema.entity(x.first).id > schema.entity(y.first).id;
        });
        out.push_back({std::move(span), i, i + len, best->first, best->second});
        i += len;
        linked = true;
      }
    }
    if (!linked) {
      out.push_back({tokens[i], i, i + 1, std::nullopt, 0.0});
      ++i;
    }
  }
  return out;
}

std::vector<LinkedToken> link_entities(std::span<const std::string> tokens, const Lexicon& lexicon,
                                       const KB& kb) {
  return link_entities(tokens, lexicon, kb_entities(kb));
}

std::string realize_entity(const Entity& entity, const SurfaceFormStore& store, Rng& rng) {
  const auto* forms = store.forms(entity.id);
  if (!forms) return lower(entity.canonical);
  std::vector<double> weights;
  std::vector<const std::string*> surfaces;
  for (const auto& [s, c] : *forms) {
    surfaces.push_back(&s);
    weights.push_back(static_cast<double>(c));
  }
  return *surfaces[rng.categorical(weights)];
}

const char* to_string(SpeechAct a) {
  switch (a) {
    case SpeechAct::inform: return "inform";
    case SpeechAct::ask: return "ask";
    case SpeechAct::answer: return "answer";
    case SpeechAct::greeting: return "greeting";
    case SpeechAct::apology: return "apology";
  }
  return "?";
}

std::optional<SpeechAct> speech_act_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kNumSpeechActs; ++i) {
    auto a = static_cast<SpeechAct>(i);
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

std::size_t ActSet::size() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kNumSpeechActs; ++i) n += (bits_ >> i) & 1u;
  return n;
}

std::vector<SpeechAct> ActSet::list() const {
  std::vector<SpeechAct> out;
  for (std::size_t i = 0; i < kNumSpeechActs; ++i)
    if ((bits_ >> i) & 1u) out.push_back(static_cast<SpeechAct>(i));
  return out;
}

ActSet classify_utterance(std::span<const std::string> tokens, std::span<const LinkedToken> links) {
  static const std::unordered_set<std::string> question = {"do",  "does", "what", "who",
                                                           "which", "how", "any",  "anyone"};
  static const std::unordered_set<std::string> answer = {"yes", "no", "nope", "yep", "yeah", "none"};
  static const std::unordered_set<std::string> greeting = {"hi", "hello", "hey", "hiya"};
  ActSet acts;
  for (const auto& t : tokens) {
    if (t == "?" || question.count(t)) acts.insert(SpeechAct::ask);
    if (answer.count(t)) acts.insert(SpeechAct::answer);
    if (greeting.count(t)) acts.insert(SpeechAct::greeting);
    if (t == "sorry") acts.insert(SpeechAct::apology);
  }
  if (!acts.contains(SpeechAct::ask)) {
    for (const auto& l : links)
      if (l.entity) {
        acts.insert(SpeechAct::inform);
        break;
      }
  }
  return acts;
}

}  // namespace mutual
