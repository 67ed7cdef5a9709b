#include "mutual/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

#include "mutual/error.hpp"

namespace mutual {

namespace {

struct ItemHash {
  std::size_t operator()(const Item& item) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (EntityIndex e : item) h = (h ^ static_cast<std::size_t>(e)) * 1099511628211ull;
    return h;
  }
};

// Number of distinct tuples that appear in both KBs, stopping early at 2.
int count_shared_capped(const KB& a, const KB& b) {
  std::unordered_set<Item, ItemHash> in_a(a.items.begin(), a.items.end());
  std::unordered_set<Item, ItemHash> seen;
  for (const auto& item : b.items) {
    if (in_a.count(item) && seen.insert(item).second && seen.size() >= 2) return 2;
  }
  return static_cast<int>(seen.size());
}

}  // namespace

int Scenario::column_of(int schema_attribute) const {
  for (std::size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].attribute == schema_attribute) return static_cast<int>(i);
  return -1;
}

const char* to_string(AlphaGroup g) {
  switch (g) {
    case AlphaGroup::least_uniform: return "least_uniform";
    case AlphaGroup::medium: return "medium";
    case AlphaGroup::most_uniform: return "most_uniform";
  }
  return "?";
}

std::vector<EntityIndex> polya_sample(std::span<const EntityIndex> values, double alpha, int n, Rng& rng) {
  if (values.empty()) throw UsageError("polya_sample: empty value set");
  if (n < 1) throw UsageError("polya_sample: n must be >= 1");
  if (!(alpha > 0.0)) throw UsageError("polya_sample: alpha must be positive");
  std::vector<double> weights(values.size(), alpha);
  std::vector<EntityIndex> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    std::size_t i = rng.categorical(weights);
    out.push_back(values[i]);
    weights[i] += 1.0;
  }
  return out;
}

std::vector<Item> shared_items(const Scenario& scenario) {
  std::set<Item> in_a(scenario.kbs[0].items.begin(), scenario.kbs[0].items.end());
  std::set<Item> shared;
  for (const auto& item : scenario.kbs[1].items)
    if (in_a.count(item)) shared.insert(item);
  return {shared.begin(), shared.end()};
}

const Item& shared_item(const Scenario& scenario) {
  auto shared = shared_items(scenario);
  if (shared.size() != 1)
    throw DataError("scenario " + scenario.id + " has " + std::to_string(shared.size()) + " shared items");
  for (const auto& item : scenario.kbs[0].items)
    if (item == shared.front()) return item;
  throw DataError("unreachable: shared item not found");
}

Scenario generate_scenario(const Schema& schema, Rng& rng, const GeneratorOptions& options) {
  const int n_attr = static_cast<int>(schema.num_attributes());
  for (int a = 0; a < n_attr; ++a)
    if (schema.values_of(a).size() < 2) throw UsageError("generate_scenario: attribute with < 2 values");

  Scenario s;
  // Step 1: item and attribute counts.
  s.n_items = rng.uniform_int(options.min_items, options.max_items);
  const int m = options.attr_counts[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(options.attr_counts.size()) - 1))];
  if (m > n_attr) throw UsageError("generate_scenario: schema has too few attributes");

  // Step 2: attributes without replacement, kept in schema order.
  std::vector<int> pool(static_cast<std::size_t>(n_attr));
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<int> chosen;
  for (int i = 0; i < m; ++i) {
    int j = rng.uniform_int(i, n_attr - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    chosen.push_back(pool[static_cast<std::size_t>(i)]);
  }
  std::sort(chosen.begin(), chosen.end());

  // Step 3: concentration per attribute.
  for (int a : chosen) {
    double alpha = options.alphas[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(options.alphas.size()) - 1))];
    s.attrs.push_back({a, alpha});
  }

  // Step 4, repeated until exactly one tuple is common to both KBs. Each
  // attribute's 2N values come from one urn, split between the two KBs.
  const auto n = static_cast<std::size_t>(s.n_items);
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    for (auto& kb : s.kbs) kb.items.assign(n, Item(static_cast<std::size_t>(m)));
    for (int c = 0; c < m; ++c) {
      const auto& values = schema.values_of(s.attrs[static_cast<std::size_t>(c)].attribute);
      auto draws = polya_sample(values, s.attrs[static_cast<std::size_t>(c)].alpha, 2 * s.n_items, rng);
      for (std::size_t i = 0; i < n; ++i) {
        s.kbs[0].items[i][static_cast<std::size_t>(c)] = draws[i];
        s.kbs[1].items[i][static_cast<std::size_t>(c)] = draws[n + i];
      }
    }
    if (count_shared_capped(s.kbs[0], s.kbs[1]) == 1) return s;
  }
  throw GenerationError("generate_scenario: no KB pair with exactly one shared item after " +
                        std::to_string(options.max_attempts) + " attempts");
}

Scenario generate_indexed_scenario(const Schema& schema, std::uint64_t seed, std::uint64_t index,
                                   const GeneratorOptions& options) {
  constexpr int kMaxRedraws = 64;
  for (int redraw = 0; redraw < kMaxRedraws; ++redraw) {
    Rng rng = Rng::derive(seed, index * kMaxRedraws + static_cast<std::uint64_t>(redraw));
    try {
      Scenario s = generate_scenario(schema, rng, options);
      s.id = "s" + std::to_string(seed) + "-" + std::to_string(index);
      return s;
    } catch (const GenerationError&) {
    }
  }
  throw GenerationError("scenario " + std::to_string(index) + ": rejection cap exceeded on every redraw");
}

std::vector<Scenario> generate_scenarios(const Schema& schema, std::size_t count, std::uint64_t seed,
                                         const GeneratorOptions& options) {
  std::vector<Scenario> out(count);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < count; ++i) out[i] = generate_indexed_scenario(schema, seed, i, options);
  return out;
}

std::map<int, AlphaGroup> alpha_groups(const Scenario& scenario, const Schema& schema) {
  const std::size_t m = scenario.attrs.size();
  if (m < 3 || m > 4) throw UsageError("alpha_groups: scenario must have 3 or 4 attributes");
  std::vector<ScenarioAttribute> ranked = scenario.attrs;
  std::stable_sort(ranked.begin(), ranked.end(), [&](const auto& x, const auto& y) {
    if (x.alpha != y.alpha) return x.alpha < y.alpha;
    return schema.attributes()[static_cast<std::size_t>(x.attribute)].name <
           schema.attributes()[static_cast<std::size_t>(y.attribute)].name;
  });
  std::map<int, AlphaGroup> groups;
  for (std::size_t r = 0; r < m; ++r) {
    AlphaGroup g = r == 0 ? AlphaGroup::least_uniform
                 : r == m - 1 ? AlphaGroup::most_uniform
                              : AlphaGroup::medium;
    groups[ranked[r].attribute] = g;
  }
  return groups;
}

void check_scenario(const Scenario& s, const Schema& schema) {
  auto fail = [&](const std::string& why) { throw DataError("scenario " + s.id + ": " + why); };
  if (s.attrs.empty()) fail("no attributes");
  std::set<int> seen;
  for (const auto& a : s.attrs) {
    if (a.attribute < 0 || a.attribute >= static_cast<int>(schema.num_attributes())) fail("bad attribute");
    if (!seen.insert(a.attribute).second) fail("duplicate attribute");
    if (!(a.alpha > 0.0)) fail("non-positive alpha");
  }
  for (const auto& kb : s.kbs) {
    if (static_cast<int>(kb.items.size()) != s.n_items) fail("KB size differs from n_items");
    for (const auto& item : kb.items) {
      if (item.size() != s.attrs.size()) fail("item arity mismatch");
      for (std::size_t c = 0; c < item.size(); ++c)
        if (item[c] < 0 || item[c] >= static_cast<EntityIndex>(schema.num_entities()) ||
            schema.attribute_of(item[c]) != s.attrs[c].attribute)
          fail("item value outside the attribute's value set");
    }
  }
  if (shared_items(s).size() != 1) fail("does not have exactly one shared item");
}

nlohmann::json scenario_to_json(const Scenario& s, const Schema& schema) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : s.attrs)
    attrs.push_back({{"name", schema.attributes()[static_cast<std::size_t>(a.attribute)].name},
                     {"alpha", a.alpha}});
  nlohmann::json kbs = nlohmann::json::array();
  for (const auto& kb : s.kbs) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : kb.items) {
      nlohmann::json ji = nlohmann::json::object();
      for (std::size_t c = 0; c < item.size(); ++c)
        ji[schema.attributes()[static_cast<std::size_t>(s.attrs[c].attribute)].name] = schema.entity(item[c]).id;
      items.push_back(std::move(ji));
    }
    kbs.push_back(std::move(items));
  }
  return {{"id", s.id}, {"attrs", std::move(attrs)}, {"kbs", std::move(kbs)}};
}

Scenario scenario_from_json(const nlohmann::json& j, const Schema& schema) {
  Scenario s;
  try {
    s.id = j.at("id").get<std::string>();
    for (const auto& ja : j.at("attrs"))
      s.attrs.push_back({schema.require_attribute(ja.at("name").get<std::string>()), ja.at("alpha").get<double>()});
    const auto& kbs = j.at("kbs");
    if (!kbs.is_array() || kbs.size() != 2) throw DataError("scenario " + s.id + ": expected two KBs");
    for (std::size_t k = 0; k < 2; ++k) {
      for (const auto& ji : kbs[k]) {
        Item item;
        for (const auto& a : s.attrs) {
          const auto& name = schema.attributes()[static_cast<std::size_t>(a.attribute)].name;
          item.push_back(schema.require_entity(ji.at(name).get<std::string>()));
        }
        s.kbs[k].items.push_back(std::move(item));
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("scenario: " + std::string(ex.what()));
  }
  s.n_items = static_cast<int>(s.kbs[0].items.size());
  check_scenario(s, schema);
  return s;
}

void write_scenarios(const std::vector<Scenario>& scenarios, const Schema& schema,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : scenarios) out << scenario_to_json(s, schema).dump() << "\n";
}

std::vector<Scenario> read_scenarios(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Scenario> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(scenario_from_json(nlohmann::json::parse(line), schema));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace mutual
