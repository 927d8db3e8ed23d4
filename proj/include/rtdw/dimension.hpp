#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rtdw/schema.hpp"
#include "rtdw/types.hpp"

namespace rtdw::model {

struct MemberVersion {
  SurrogateKey surrogate = 0;
  std::vector<Value> attributes;  // aligned with DimensionDef.attributes
  Tick valid_from = kTickMin;
  Tick valid_to = kTickMax;  // half-open [from, to)
  bool is_current = true;
};

// Runtime member store for one dimension. Single writer, concurrent readers.
// Overwrite policy keeps one version per natural key and updates it in place;
// Versioned policy closes the current version and appends a new one with a
// fresh surrogate key.
class DimensionState {
 public:
  explicit DimensionState(DimensionDef def);

  const DimensionDef& def() const { return def_; }

  // Upserts a member. Returns the surrogate key of the now-current version.
  // Throws TimestampRegression when a Versioned update predates the current
  // version's valid_from.
  SurrogateKey apply_scd_update(
      const Value& natural_key,
      const std::vector<std::pair<std::string, Value>>& attrs, Tick at);

  // Surrogate of the version whose [valid_from, valid_to) contains as_of.
  // Throws UnknownMember / NoVersionCovers.
  SurrogateKey resolve_surrogate(const Value& natural_key, Tick as_of) const;
  std::optional<SurrogateKey> try_resolve(const Value& natural_key, Tick as_of,
                                          std::string* reason = nullptr) const;

  Value attribute_of(SurrogateKey key, int attr_index) const;
  Value attribute_of(SurrogateKey key, const std::string& attr) const;

  bool has_member(const Value& natural_key) const;
  std::vector<MemberVersion> versions_of(const Value& natural_key) const;
  std::vector<Value> member_keys() const;  // natural key values, sorted
  std::size_t member_count() const;

 private:
  static std::string key_string(const Value& v);
  SurrogateKey insert_new_member(const std::string& key, const Value& natural_key,
                                 const std::vector<std::pair<std::string, Value>>& attrs,
                                 Tick at);
  std::vector<Value> default_attributes(const Value& natural_key) const;
  void apply_attrs(std::vector<Value>& dst,
                   const std::vector<std::pair<std::string, Value>>& attrs) const;

  DimensionDef def_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::vector<MemberVersion>> members_;
  // surrogate -> (member key, version index); entries are never removed
  std::unordered_map<SurrogateKey, std::pair<std::string, std::size_t>> by_surrogate_;
  SurrogateKey next_surrogate_ = 1;
};

// All dimension states for a schema, shared between ETL and queries.
class DimensionCatalog {
 public:
  explicit DimensionCatalog(const SchemaDef& schema);

  DimensionState& at(const std::string& dimension);
  const DimensionState& at(const std::string& dimension) const;
  bool contains(const std::string& dimension) const;

 private:
  std::map<std::string, std::unique_ptr<DimensionState>> dims_;
};

}  // namespace rtdw::model
