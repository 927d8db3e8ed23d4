#include "rtdw/dimension.hpp"

#include <algorithm>
#include <mutex>

#include "rtdw/errors.hpp"

namespace rtdw::model {

DimensionState::DimensionState(DimensionDef def) : def_(std::move(def)) {}

std::string DimensionState::key_string(const Value& v) {
  // Type-tagged so integer 1 and text "1" stay distinct member keys.
  switch (v.index()) {
    case 0: return "i:" + std::to_string(std::get<0>(v));
    case 1: return "d:" + to_string(v);
    default: return "t:" + std::get<2>(v);
  }
}

std::vector<Value> DimensionState::default_attributes(const Value& natural_key) const {
  std::vector<Value> out;
  out.reserve(def_.attributes.size());
  for (const auto& a : def_.attributes) {
    if (a.name == def_.natural_key) {
      out.push_back(natural_key);
      continue;
    }
    switch (a.kind) {
      case ScalarKind::Integer:
      case ScalarKind::Timestamp: out.emplace_back(std::int64_t{0}); break;
      case ScalarKind::Decimal: out.emplace_back(0.0); break;
      case ScalarKind::Text: out.emplace_back(std::string()); break;
    }
  }
  return out;
}

void DimensionState::apply_attrs(
    std::vector<Value>& dst,
    const std::vector<std::pair<std::string, Value>>& attrs) const {
  for (const auto& [name, value] : attrs) {
    int idx = def_.attribute_index(name);
    if (idx < 0) throw UnknownAttribute(def_.name + "." + name);
    dst[static_cast<std::size_t>(idx)] = value;
  }
}

SurrogateKey DimensionState::insert_new_member(
    const std::string& key, const Value& natural_key,
    const std::vector<std::pair<std::string, Value>>& attrs, Tick at) {
  MemberVersion v;
  v.surrogate = next_surrogate_++;
  v.attributes = default_attributes(natural_key);
  apply_attrs(v.attributes, attrs);
  v.valid_from = at;
  v.valid_to = kTickMax;
  v.is_current = true;
  auto& versions = members_[key];
  versions.push_back(std::move(v));
  by_surrogate_.emplace(versions.back().surrogate,
                        std::make_pair(key, versions.size() - 1));
  return versions.back().surrogate;
}

SurrogateKey DimensionState::apply_scd_update(
    const Value& natural_key,
    const std::vector<std::pair<std::string, Value>>& attrs, Tick at) {
  std::unique_lock lock(mu_);
  const std::string key = key_string(natural_key);
  auto it = members_.find(key);
  if (it == members_.end()) {
    // Unknown natural key inserts as a new member under either policy.
    return insert_new_member(key, natural_key, attrs, at);
  }
  auto& versions = it->second;
  MemberVersion& current = versions.back();
  if (def_.scd_policy == ScdPolicy::Overwrite) {
    apply_attrs(current.attributes, attrs);
    return current.surrogate;
  }
  if (at < current.valid_from) {
    throw TimestampRegression(def_.name + " key " + to_string(natural_key) +
                              ": update at " + std::to_string(at) +
                              " precedes valid_from " +
                              std::to_string(current.valid_from));
  }
  current.valid_to = at;
  current.is_current = false;
  MemberVersion next;
  next.surrogate = next_surrogate_++;
  next.attributes = current.attributes;
  apply_attrs(next.attributes, attrs);
  // Natural key attribute never changes across versions.
  int nk = def_.attribute_index(def_.natural_key);
  if (nk >= 0) next.attributes[static_cast<std::size_t>(nk)] = natural_key;
  next.valid_from = at;
  next.valid_to = kTickMax;
  next.is_current = true;
  versions.push_back(std::move(next));
  by_surrogate_.emplace(versions.back().surrogate,
                        std::make_pair(key, versions.size() - 1));
  return versions.back().surrogate;
}

std::optional<SurrogateKey> DimensionState::try_resolve(
    const Value& natural_key, Tick as_of, std::string* reason) const {
  std::shared_lock lock(mu_);
  auto it = members_.find(key_string(natural_key));
  if (it == members_.end()) {
    if (reason) *reason = "UnknownMember";
    return std::nullopt;
  }
  const auto& versions = it->second;
  if (def_.scd_policy == ScdPolicy::Overwrite) {
    return versions.back().surrogate;
  }
  for (const auto& v : versions) {
    if (v.valid_from <= as_of && as_of < v.valid_to) return v.surrogate;
  }
  if (reason) *reason = "NoVersionCovers";
  return std::nullopt;
}

SurrogateKey DimensionState::resolve_surrogate(const Value& natural_key,
                                               Tick as_of) const {
  std::string reason;
  auto got = try_resolve(natural_key, as_of, &reason);
  if (got) return *got;
  const std::string what =
      def_.name + " key " + to_string(natural_key) + " as_of " + std::to_string(as_of);
  if (reason == "NoVersionCovers") throw NoVersionCovers(what);
  throw UnknownMember(what);
}

Value DimensionState::attribute_of(SurrogateKey key, int attr_index) const {
  std::shared_lock lock(mu_);
  auto it = by_surrogate_.find(key);
  if (it == by_surrogate_.end()) {
    throw UnknownMember(def_.name + " surrogate " + std::to_string(key));
  }
  const auto& versions = members_.at(it->second.first);
  const auto& attrs = versions[it->second.second].attributes;
  if (attr_index < 0 || static_cast<std::size_t>(attr_index) >= attrs.size()) {
    throw UnknownAttribute(def_.name + " attribute #" + std::to_string(attr_index));
  }
  return attrs[static_cast<std::size_t>(attr_index)];
}

Value DimensionState::attribute_of(SurrogateKey key, const std::string& attr) const {
  int idx = def_.attribute_index(attr);
  if (idx < 0) throw UnknownAttribute(def_.name + "." + attr);
  return attribute_of(key, idx);
}

bool DimensionState::has_member(const Value& natural_key) const {
  std::shared_lock lock(mu_);
  return members_.count(key_string(natural_key)) > 0;
}

std::vector<MemberVersion> DimensionState::versions_of(const Value& natural_key) const {
  std::shared_lock lock(mu_);
  auto it = members_.find(key_string(natural_key));
  if (it == members_.end()) return {};
  return it->second;
}

std::vector<Value> DimensionState::member_keys() const {
  std::shared_lock lock(mu_);
  std::vector<Value> keys;
  keys.reserve(members_.size());
  int nk = def_.attribute_index(def_.natural_key);
  for (const auto& [k, versions] : members_) {
    (void)k;
    keys.push_back(versions.front().attributes[static_cast<std::size_t>(nk)]);
  }
  std::sort(keys.begin(), keys.end(),
            [](const Value& a, const Value& b) { return compare_values(a, b) < 0; });
  return keys;
}

std::size_t DimensionState::member_count() const {
  std::shared_lock lock(mu_);
  return members_.size();
}

DimensionCatalog::DimensionCatalog(const SchemaDef& schema) {
  for (const auto& d : schema.dimensions) {
    dims_.emplace(d.name, std::make_unique<DimensionState>(d));
  }
}

DimensionState& DimensionCatalog::at(const std::string& dimension) {
  auto it = dims_.find(dimension);
  if (it == dims_.end()) throw UnknownDimension(dimension);
  return *it->second;
}

const DimensionState& DimensionCatalog::at(const std::string& dimension) const {
  auto it = dims_.find(dimension);
  if (it == dims_.end()) throw UnknownDimension(dimension);
  return *it->second;
}

bool DimensionCatalog::contains(const std::string& dimension) const {
  return dims_.count(dimension) > 0;
}

}  // namespace rtdw::model
