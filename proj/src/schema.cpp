#include "mutual/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "mutual/error.hpp"
#include "mutual/transcript.hpp"

#ifndef MUTUAL_DATA_DIR
#define MUTUAL_DATA_DIR "data"
#endif

namespace mutual {

namespace {

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Schema::Schema(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
  for (std::size_t a = 0; a < attributes_.size(); ++a) {
    auto& attr = attributes_[a];
    attr_by_name_.emplace(attr.name, static_cast<int>(a));
    attr_values_.emplace_back();
    for (auto& e : attr.values) {
      e.type = attr.name;
      const auto idx = static_cast<EntityIndex>(entities_.size());
      entities_.push_back(e);
      entity_attr_.push_back(static_cast<int>(a));
      attr_values_.back().push_back(idx);
      entity_by_id_.emplace(e.id, idx);
    }
  }
}

std::optional<EntityIndex> Schema::find_entity(std::string_view id) const {
  auto it = entity_by_id_.find(std::string(id));
  if (it == entity_by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Schema::find_attribute(std::string_view name) const {
  auto it = attr_by_name_.find(std::string(name));
  if (it == attr_by_name_.end()) return std::nullopt;
  return it->second;
}

EntityIndex Schema::require_entity(std::string_view id) const {
  auto e = find_entity(id);
  if (!e) throw DataError("unknown entity id '" + std::string(id) + "'");
  return *e;
}

int Schema::require_attribute(std::string_view name) const {
  auto a = find_attribute(name);
  if (!a) throw DataError("unknown attribute '" + std::string(name) + "'");
  return *a;
}

std::vector<std::string> validate_schema(const Schema& schema) {
  std::vector<std::string> violations;
  std::set<std::string> attr_names;
  std::set<std::string> entity_ids;
  if (schema.attributes().empty()) violations.push_back("schema has no attributes");
  for (const auto& attr : schema.attributes()) {
    if (attr.name.empty()) violations.push_back("attribute with empty name");
    if (!attr_names.insert(attr.name).second) violations.push_back("duplicate attribute '" + attr.name + "'");
    if (attr.values.empty()) violations.push_back("attribute '" + attr.name + "' has an empty value set");
    for (const auto& e : attr.values) {
      if (e.id.empty()) violations.push_back("entity with empty id in '" + attr.name + "'");
      if (e.canonical.empty()) violations.push_back("entity '" + e.id + "' has an empty canonical name");
      if (!entity_ids.insert(e.id).second) violations.push_back("duplicate entity id '" + e.id + "'");
    }
  }
  return violations;
}

Schema schema_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("attributes") || !j["attributes"].is_array())
    throw DataError("schema: expected object with an 'attributes' array");
  std::vector<Attribute> attrs;
  for (const auto& ja : j["attributes"]) {
    Attribute a;
    a.name = ja.at("name").get<std::string>();
    for (const auto& jv : ja.at("values")) {
      Entity e;
      e.id = jv.at("id").get<std::string>();
      e.canonical = jv.at("canonical").get<std::string>();
      e.type = a.name;
      a.values.push_back(std::move(e));
    }
    attrs.push_back(std::move(a));
  }
  return Schema(std::move(attrs));
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : schema.attributes()) {
    nlohmann::json values = nlohmann::json::array();
    for (const auto& e : a.values) values.push_back({{"id", e.id}, {"canonical", e.canonical}});
    attrs.push_back({{"name", a.name}, {"values", std::move(values)}});
  }
  return {{"attributes", std::move(attrs)}};
}

Schema parse_schema(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("schema: parse error: ") + ex.what());
  }
  Schema schema;
  try {
    schema = schema_from_json(j);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("schema: ") + ex.what());
  }
  auto violations = validate_schema(schema);
  if (!violations.empty()) throw DataError("schema: " + violations.front());
  return schema;
}

Schema load_schema(const std::filesystem::path& path) { return parse_schema(read_file(path)); }

std::filesystem::path bundled_data_dir() {
  if (const char* env = std::getenv("MUTUAL_DATA_DIR"); env && *env) return env;
  return MUTUAL_DATA_DIR;
}

Schema default_schema() { return load_schema(bundled_data_dir() / "schema_default.json"); }

void SurfaceFormStore::add(const std::string& entity_id, const std::string& surface, int count) {
  if (count <= 0) throw UsageError("surface form count must be positive");
  forms_[entity_id][to_lower(surface)] += count;
}

const SurfaceFormStore::Counts* SurfaceFormStore::forms(const std::string& entity_id) const {
  auto it = forms_.find(entity_id);
  return it == forms_.end() || it->second.empty() ? nullptr : &it->second;
}

int SurfaceFormStore::count(const std::string& entity_id, const std::string& surface) const {
  auto* f = forms(entity_id);
  if (!f) return 0;
  auto it = f->find(surface);
  return it == f->end() ? 0 : it->second;
}

void SurfaceFormStore::check_against(const Schema& schema) const {
  for (const auto& [id, counts] : forms_) {
    if (!schema.find_entity(id)) throw DataError("surface forms: unknown entity '" + id + "'");
    for (const auto& [s, c] : counts)
      if (c <= 0) throw DataError("surface forms: non-positive count for '" + id + "'/'" + s + "'");
  }
}

SurfaceFormStore surface_forms_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("surface forms: expected a JSON object");
  SurfaceFormStore store;
  for (const auto& [id, forms] : j.items()) {
    if (!forms.is_object()) throw DataError("surface forms: entry for '" + id + "' is not an object");
    for (const auto& [surface, count] : forms.items()) {
      int c = count.get<int>();
      if (c <= 0) throw DataError("surface forms: non-positive count for '" + id + "'");
      store.add(id, surface, c);
    }
  }
  return store;
}

nlohmann::json surface_forms_to_json(const SurfaceFormStore& store) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, counts] : store.all()) {
    nlohmann::json f = nlohmann::json::object();
    for (const auto& [s, c] : counts) f[s] = c;
    j[id] = std::move(f);
  }
  return j;
}

SurfaceFormStore load_surface_forms(const std::filesystem::path& path) {
  try {
    return surface_forms_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("surface forms: " + std::string(ex.what()));
  }
}

void save_surface_forms(const SurfaceFormStore& store, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << surface_forms_to_json(store).dump(1) << "\n";
}

SurfaceFormStore record_surface_forms(SurfaceFormStore store, const Transcript& transcript,
                                      const Schema& schema) {
  for (const auto& ev : transcript.events) {
    if (ev.kind != EventKind::utterance) continue;
    for (const auto& link : ev.links) {
      if (!schema.find_entity(link.entity_id))
        throw DataError("transcript links unknown entity '" + link.entity_id + "'");
      store.add(link.entity_id, link.span, 1);
    }
  }
  return store;
}

}  // namespace mutual
