#include "mutual/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mutual/error.hpp"

namespace mutual {

namespace {

// Sums in sorted order so the result does not depend on corpus order.
double stable_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0);
}

double ratio(double a, std::size_t b) { return b ? a / static_cast<double>(b) : 0.0; }

struct KbProfile {
  std::map<EntityIndex, int> entity_count;
  std::map<int, int> distinct_values;  // schema attribute -> distinct values in the KB
  int max_entity = 0;
  int max_distinct = 0;
};

KbProfile profile(const Scenario& sc, const KB& kb) {
  KbProfile p;
  for (const auto& item : kb.items)
    for (EntityIndex e : item) p.max_entity = std::max(p.max_entity, ++p.entity_count[e]);
  for (std::size_t c = 0; c < sc.attrs.size(); ++c) {
    std::set<EntityIndex> vals;
    for (const auto& item : kb.items) vals.insert(item[c]);
    const int n = static_cast<int>(vals.size());
    p.distinct_values[sc.attrs[c].attribute] = n;
    p.max_distinct = std::max(p.max_distinct, n);
  }
  return p;
}

}  // namespace

CorpusStats corpus_stats(std::span<const Transcript> corpus, const Schema& schema) {
  if (corpus.empty()) throw DataError("metrics: empty corpus");
  CorpusStats s;
  std::map<std::string, std::int64_t> unigrams;
  std::array<std::size_t, kNumSpeechActs> act_counts{};
  std::vector<double> ent1, attr1;
  std::size_t distinct_ents = 0, distinct_attrs = 0;

  for (const Transcript& t : corpus) {
    if (!t.scenario) throw DataError("metrics: transcript " + t.scenario_id + " has no scenario");
    const Scenario& sc = *t.scenario;
    ++s.dialogues;
    s.successes += t.outcome == Outcome::success ? 1 : 0;
    s.turns += static_cast<std::size_t>(t.turns);

    std::set<EntityIndex> ents;
    std::set<int> attrs;
    std::array<std::optional<EntityIndex>, 2> first;
    for (const Event& ev : t.events) {
      if (ev.kind == EventKind::select) ++s.selections;
      if (ev.kind != EventKind::utterance) continue;
      ++s.utterances;
      for (const auto& tok : tokenize(ev.text)) {
        ++unigrams[tok];
        ++s.tokens;
      }
      for (std::size_t a = 0; a < kNumSpeechActs; ++a)
        act_counts[a] += ev.acts.contains(static_cast<SpeechAct>(a)) ? 1 : 0;
      for (const auto& link : ev.links) {
        const auto e = schema.find_entity(link.entity_id);
        if (!e) throw DataError("metrics: unknown entity '" + link.entity_id + "' in " + t.scenario_id);
        ents.insert(*e);
        attrs.insert(schema.attribute_of(*e));
        auto& f = first[static_cast<std::size_t>(index_of(ev.agent))];
        if (!f) f = *e;
      }
    }
    distinct_ents += ents.size();
    distinct_attrs += attrs.size();

    std::map<int, AlphaGroup> groups;  // alpha groups are defined for 3 or 4 attributes
    if (sc.attrs.size() == 3 || sc.attrs.size() == 4) groups = alpha_groups(sc, schema);
    for (std::size_t side = 0; side < 2; ++side) {
      if (!first[side]) {
        ++s.excluded;
        continue;
      }
      const KbProfile p = profile(sc, sc.kbs[side]);
      const EntityIndex e = *first[side];
      const int attr = schema.attribute_of(e);
      const auto count = p.entity_count.find(e);
      const auto distinct = p.distinct_values.find(attr);
      ent1.push_back(count == p.entity_count.end() ? 0.0 : double(count->second) / double(p.max_entity));
      attr1.push_back(distinct == p.distinct_values.end() ? 0.0 : double(distinct->second) / double(p.max_distinct));
      ++s.first_mentions;
      const auto g = groups.find(attr);
      if (g != groups.end()) ++s.first_attr_hist[static_cast<std::size_t>(g->second)];
    }
  }

  s.L_u = ratio(static_cast<double>(s.tokens), s.utterances);
  for (const auto& [_, n] : unigrams) {
    const double p = static_cast<double>(n) / static_cast<double>(s.tokens);
    s.H -= p * std::log2(p);
  }
  const auto succ = static_cast<double>(s.successes);
  s.C = ratio(succ, s.dialogues);
  s.C_T = ratio(succ, s.turns);
  s.C_S = ratio(succ, s.selections);
  s.Sel = ratio(static_cast<double>(s.selections), s.utterances + s.selections);
  for (std::size_t a = 0; a < kNumSpeechActs; ++a) s.acts[a] = ratio(static_cast<double>(act_counts[a]), s.utterances);
  s.ent1 = ratio(stable_sum(ent1), ent1.size());
  s.attr1 = ratio(stable_sum(attr1), attr1.size());
  s.ents_per_dialogue = ratio(static_cast<double>(distinct_ents), s.dialogues);
  s.attrs_per_dialogue = ratio(static_cast<double>(distinct_attrs), s.dialogues);
  return s;
}

nlohmann::json stats_to_json(const CorpusStats& s) {
  nlohmann::json acts;
  for (std::size_t a = 0; a < kNumSpeechActs; ++a) acts[to_string(static_cast<SpeechAct>(a))] = s.acts[a];
  nlohmann::json hist;
  for (AlphaGroup g : {AlphaGroup::least_uniform, AlphaGroup::medium, AlphaGroup::most_uniform})
    hist[to_string(g)] = s.first_attr_hist[static_cast<std::size_t>(g)];
  return {
      {"dialogues", s.dialogues},
      {"successes", s.successes},
      {"turns", s.turns},
      {"utterances", s.utterances},
      {"selections", s.selections},
      {"tokens", s.tokens},
      {"loss", s.loss ? nlohmann::json(*s.loss) : nlohmann::json(nullptr)},
      {"L_u", s.L_u},
      {"H", s.H},
      {"C", s.C},
      {"C_T", s.C_T},
      {"C_S", s.C_S},
      {"Sel", s.Sel},
      {"acts", acts},
      {"ent1", s.ent1},
      {"attr1", s.attr1},
      {"ents_per_dialogue", s.ents_per_dialogue},
      {"attrs_per_dialogue", s.attrs_per_dialogue},
      {"first_attr_histogram", hist},
      {"first_mentions", s.first_mentions},
      {"excluded_first_mentions", s.excluded},
  };
}

std::string stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows) {
  std::size_t width = 6;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  std::ostringstream out;
  char buf[64];
  auto cell = [&](const char* fmt, double v) {
    std::snprintf(buf, sizeof buf, fmt, v);
    out << ' ' << buf;
  };
  out << std::string(width - 6, ' ') << "System" << "      l    L_u      H     C   C_T   C_S   Sel   Inf   Ask   Ans Greet  Ent1 Attr1   Ent  Attr\n";
  for (const auto& [name, s] : rows) {
    out << std::string(width - name.size(), ' ') << name;
    if (s.loss) cell("%6.2f", *s.loss);
    else out << "      -";
    cell("%6.2f", s.L_u);
    cell("%6.2f", s.H);
    for (double v : {s.C, s.C_T, s.C_S, s.Sel}) cell("%5.2f", v);
    for (SpeechAct a : {SpeechAct::inform, SpeechAct::ask, SpeechAct::answer, SpeechAct::greeting})
      cell("%5.2f", s.acts[static_cast<std::size_t>(a)]);
    cell("%5.2f", s.ent1);
    cell("%5.2f", s.attr1);
    cell("%5.1f", s.ents_per_dialogue);
    cell("%5.1f", s.attrs_per_dialogue);
    out << '\n';
  }
  return out.str();
}

std::string first_attr_histogram_csv(const CorpusStats& s) {
  std::string out = "group,count\n";
  for (AlphaGroup g : {AlphaGroup::least_uniform, AlphaGroup::medium, AlphaGroup::most_uniform})
    out += std::string(to_string(g)) + "," + std::to_string(s.first_attr_hist[static_cast<std::size_t>(g)]) + "\n";
  return out;
}

}  // namespace mutual
