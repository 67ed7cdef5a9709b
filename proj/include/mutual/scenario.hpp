#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mutual/rng.hpp"
#include "mutual/schema.hpp"

namespace mutual {

struct ScenarioAttribute {
  int attribute = 0;  // index into Schema::attributes()
  double alpha = 1.0;
};

// One friend: the value of every scenario attribute, aligned with
// Scenario::attrs.
using Item = std::vector<EntityIndex>;

struct KB {
  std::vector<Item> items;
  bool operator==(const KB&) const = default;
};

struct Scenario {
  std::string id;
  int n_items = 0;
  std::vector<ScenarioAttribute> attrs;
  std::array<KB, 2> kbs;

  std::size_t num_attrs() const { return attrs.size(); }
  // Position of schema attribute `a` in attrs, or -1.
  int column_of(int schema_attribute) const;
};

enum class AlphaGroup { least_uniform, medium, most_uniform };
const char* to_string(AlphaGroup g);

struct GeneratorOptions {
  int min_items = 5;
  int max_items = 12;
  std::vector<int> attr_counts{3, 4};
  std::vector<double> alphas{0.3, 1.0, 3.0};
  int max_attempts = 10000;
};

class GenerationError : public std::runtime_error {
 public:
  explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

// Exchangeable draw of n values from a symmetric Dirichlet-multinomial,
// realized as a Polya urn: draw k picks value e with probability
// (alpha + count_so_far(e)) / (|values| * alpha + k - 1).
std::vector<EntityIndex> polya_sample(std::span<const EntityIndex> values, double alpha, int n, Rng& rng);

// Distinct attribute-value tuples present in both KBs.
std::vector<Item> shared_items(const Scenario& scenario);
// The unique shared item; throws DataError if there is not exactly one.
const Item& shared_item(const Scenario& scenario);

Scenario generate_scenario(const Schema& schema, Rng& rng, const GeneratorOptions& options = {});

// Scenario `index` of a batch seeded with `seed`. If the per-scenario draw
// hits the rejection cap, the whole draw is repeated from a fresh stream
// derived from the same (seed, index); the retry count is bounded.
Scenario generate_indexed_scenario(const Schema& schema, std::uint64_t seed, std::uint64_t index,
                                   const GeneratorOptions& options = {});
std::vector<Scenario> generate_scenarios(const Schema& schema, std::size_t count, std::uint64_t seed,
                                         const GeneratorOptions& options = {});

// Ranks alphas ascending (ties by attribute name) and bins them into
// distribution groups; keyed by schema attribute index.
std::map<int, AlphaGroup> alpha_groups(const Scenario& scenario, const Schema& schema);

// Throws DataError on any violated Scenario invariant.
void check_scenario(const Scenario& scenario, const Schema& schema);

nlohmann::json scenario_to_json(const Scenario& scenario, const Schema& schema);
Scenario scenario_from_json(const nlohmann::json& j, const Schema& schema);
void write_scenarios(const std::vector<Scenario>& scenarios, const Schema& schema,
                     const std::filesystem::path& path);
std::vector<Scenario> read_scenarios(const std::filesystem::path& path, const Schema& schema);

}  // namespace mutual
