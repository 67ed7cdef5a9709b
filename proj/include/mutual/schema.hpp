#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mutual/rng.hpp"

namespace mutual {

// Position of an entity in Schema::entities(); stable for a loaded schema.
using EntityIndex = int;

struct Entity {
  std::string id;
  std::string type;  // owning attribute name
  std::string canonical;
};

struct Attribute {
  std::string name;
  std::vector<Entity> values;
};

// Attribute set and entity catalog. Construction never throws so that
// malformed schemas can be inspected with validate_schema; load_schema is
// the checked entry point.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Attribute> attributes);

  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::size_t num_attributes() const { return attributes_.size(); }
  std::size_t num_entities() const { return entities_.size(); }

  const Entity& entity(EntityIndex e) const { return entities_.at(static_cast<std::size_t>(e)); }
  int attribute_of(EntityIndex e) const { return entity_attr_.at(static_cast<std::size_t>(e)); }
  // Entities of attribute `a`, as global indices.
  const std::vector<EntityIndex>& values_of(int a) const { return attr_values_.at(static_cast<std::size_t>(a)); }

  std::optional<EntityIndex> find_entity(std::string_view id) const;
  std::optional<int> find_attribute(std::string_view name) const;
  EntityIndex require_entity(std::string_view id) const;
  int require_attribute(std::string_view name) const;

 private:
  std::vector<Attribute> attributes_;
  std::vector<Entity> entities_;
  std::vector<int> entity_attr_;
  std::vector<std::vector<EntityIndex>> attr_values_;
  std::unordered_map<std::string, EntityIndex> entity_by_id_;
  std::unordered_map<std::string, int> attr_by_name_;
};

// Returns human-readable invariant violations; empty iff the schema is valid.
std::vector<std::string> validate_schema(const Schema& schema);

Schema schema_from_json(const nlohmann::json& j);
nlohmann::json schema_to_json(const Schema& schema);
Schema parse_schema(std::string_view text);
Schema load_schema(const std::filesystem::path& path);

// Directory holding the bundled catalogs (schema_default.json and friends).
std::filesystem::path bundled_data_dir();
Schema default_schema();

// Empirical surface-form counts per entity id, used for realization.
class SurfaceFormStore {
 public:
  using Counts = std::map<std::string, int>;

  void add(const std::string& entity_id, const std::string& surface, int count = 1);
  const Counts* forms(const std::string& entity_id) const;
  int count(const std::string& entity_id, const std::string& surface) const;
  const std::map<std::string, Counts>& all() const { return forms_; }
  bool empty() const { return forms_.empty(); }

  // Throws DataError if an entity id is unknown or a count is not positive.
  void check_against(const Schema& schema) const;

  bool operator==(const SurfaceFormStore&) const = default;

 private:
  std::map<std::string, Counts> forms_;
};

SurfaceFormStore surface_forms_from_json(const nlohmann::json& j);
nlohmann::json surface_forms_to_json(const SurfaceFormStore& store);
SurfaceFormStore load_surface_forms(const std::filesystem::path& path);
void save_surface_forms(const SurfaceFormStore& store, const std::filesystem::path& path);

struct Transcript;

// Adds one count per linked span (lowercased) in every utterance event.
// Throws DataError when a link names an entity the schema does not know.
SurfaceFormStore record_surface_forms(SurfaceFormStore store, const Transcript& transcript,
                                      const Schema& schema);

}  // namespace mutual
