#include "rtdw/schema.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rtdw/errors.hpp"

namespace rtdw::model {

using nlohmann::json;

const char* aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::Sum: return "sum";
    case Aggregator::Count: return "count";
    case Aggregator::Min: return "min";
    case Aggregator::Max: return "max";
    case Aggregator::Avg: return "avg";
  }
  return "unknown";
}

Aggregator aggregator_from_name(const std::string& name) {
  if (name == "sum") return Aggregator::Sum;
  if (name == "count") return Aggregator::Count;
  if (name == "min") return Aggregator::Min;
  if (name == "max") return Aggregator::Max;
  if (name == "avg") return Aggregator::Avg;
  throw ConfigError("unknown aggregator '" + name + "'");
}

int DimensionDef::attribute_index(const std::string& attr) const {
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].name == attr) return static_cast<int>(i);
  }
  return -1;
}

int FactTableDef::grain_index(const std::string& dimension) const {
  for (std::size_t i = 0; i < grain.size(); ++i) {
    if (grain[i] == dimension) return static_cast<int>(i);
  }
  return -1;
}

int FactTableDef::measure_index(const std::string& measure) const {
  for (std::size_t i = 0; i < measures.size(); ++i) {
    if (measures[i].name == measure) return static_cast<int>(i);
  }
  return -1;
}

const DimensionDef* SchemaDef::find_dimension(const std::string& name) const {
  for (const auto& d : dimensions) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

const FactTableDef* SchemaDef::find_fact(const std::string& name) const {
  for (const auto& f : fact_tables) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const FactTableDef& SchemaDef::fact(const std::string& name) const {
  const FactTableDef* f = find_fact(name);
  if (!f) throw UnknownFact(name);
  return *f;
}

int SchemaDef::priority_rank(const std::string& fact) const {
  for (std::size_t i = 0; i < query_priorities.size(); ++i) {
    if (query_priorities[i] == fact) return static_cast<int>(i);
  }
  return static_cast<int>(query_priorities.size());
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    os << v.code << "(" << v.element << ")";
    if (!v.detail.empty()) os << ": " << v.detail;
    os << "\n";
  }
  return os.str();
}

ValidationReport validate_schema(const SchemaDef& schema) {
  ValidationReport report;
  auto add = [&](std::string code, std::string element, std::string detail) {
    report.violations.push_back(
        {std::move(code), std::move(element), std::move(detail)});
  };

  std::set<std::string> dims_seen;
  for (const auto& d : schema.dimensions) {
    if (d.name.empty()) add("EmptyDimensionName", d.name, "");
    if (!dims_seen.insert(d.name).second) {
      add("DuplicateDimension", d.name, "declared more than once");
    }
    std::set<std::string> seen;
    for (const auto& a : d.attributes) {
      if (!seen.insert(a.name).second) {
        add("DuplicateAttribute", d.name, "attribute '" + a.name + "'");
      }
    }
    if (d.attribute_index(d.natural_key) < 0) {
      add("UnknownNaturalKey", d.name,
          "natural key '" + d.natural_key + "' is not a declared attribute");
    }
  }

  std::map<std::string, std::set<std::string>> facts_using_dim;
  std::set<std::string> fact_names;
  for (const auto& f : schema.fact_tables) {
    if (!fact_names.insert(f.name).second) {
      add("DuplicateFactTable", f.name, "");
    }
    if (f.grain.empty()) add("GrainEmpty", f.name, "");
    std::set<std::string> grain_seen;
    for (const auto& g : f.grain) {
      if (!schema.find_dimension(g)) {
        add("UnknownGrainDimension", f.name, "dimension '" + g + "'");
      } else {
        facts_using_dim[g].insert(f.name);
      }
      if (!grain_seen.insert(g).second) {
        add("DuplicateGrainDimension", f.name, "dimension '" + g + "'");
      }
    }
    std::set<std::string> measure_seen;
    for (const auto& m : f.measures) {
      if (!measure_seen.insert(m.name).second) {
        add("DuplicateMeasure", f.name, "measure '" + m.name + "'");
      }
    }
    if (f.duration_days <= 0) {
      add("NonPositiveDuration", f.name,
          "duration " + std::to_string(f.duration_days));
    }
  }

  // Dimensions shared across fact tables must be declared conformed.
  for (const auto& d : schema.dimensions) {
    auto it = facts_using_dim.find(d.name);
    if (it != facts_using_dim.end() && it->second.size() >= 2 && !d.conformed) {
      add("ConformanceViolation", d.name,
          "used by " + std::to_string(it->second.size()) + " fact tables");
    }
  }

  for (const auto& p : schema.query_priorities) {
    if (!fact_names.count(p)) {
      add("UnknownPriorityFact", p, "");
    }
  }
  return report;
}

namespace {

ScdPolicy scd_from_name(const std::string& s) {
  if (s == "overwrite") return ScdPolicy::Overwrite;
  if (s == "versioned") return ScdPolicy::Versioned;
  throw ConfigError("unknown scd policy '" + s + "'");
}

}  // namespace

SchemaDef schema_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema parse: ") + e.what());
  }
  SchemaDef schema;
  try {
    for (const auto& jd : j.value("dimensions", json::array())) {
      DimensionDef d;
      d.name = jd.at("name").get<std::string>();
      for (const auto& ja : jd.value("attributes", json::array())) {
        d.attributes.push_back(
            {ja.at("name").get<std::string>(),
             scalar_kind_from_name(ja.value("kind", "text"))});
      }
      d.natural_key = jd.at("natural_key").get<std::string>();
      d.scd_policy = scd_from_name(jd.value("scd", "overwrite"));
      d.conformed = jd.value("conformed", false);
      schema.dimensions.push_back(std::move(d));
    }
    for (const auto& jf : j.value("fact_tables", json::array())) {
      FactTableDef f;
      f.name = jf.at("name").get<std::string>();
      for (const auto& g : jf.value("grain", json::array())) {
        f.grain.push_back(g.get<std::string>());
      }
      for (const auto& jm : jf.value("measures", json::array())) {
        MeasureDef m;
        m.name = jm.at("name").get<std::string>();
        m.aggregator = aggregator_from_name(jm.value("aggregator", "sum"));
        m.precomputed = jm.value("precomputed", false);
        m.source = jm.value("source", std::string());
        f.measures.push_back(std::move(m));
      }
      f.duration_days = jf.value("duration_days", std::int64_t{0});
      schema.fact_tables.push_back(std::move(f));
    }
    for (const auto& p : j.value("query_priorities", json::array())) {
      schema.query_priorities.push_back(p.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema fields: ") + e.what());
  }
  return schema;
}

std::string schema_to_json_text(const SchemaDef& schema) {
  json j;
  j["dimensions"] = json::array();
  for (const auto& d : schema.dimensions) {
    json jd;
    jd["name"] = d.name;
    jd["attributes"] = json::array();
    for (const auto& a : d.attributes) {
      jd["attributes"].push_back(
          {{"name", a.name}, {"kind", scalar_kind_name(a.kind)}});
    }
    jd["natural_key"] = d.natural_key;
    jd["scd"] = d.scd_policy == ScdPolicy::Versioned ? "versioned" : "overwrite";
    jd["conformed"] = d.conformed;
    j["dimensions"].push_back(std::move(jd));
  }
  j["fact_tables"] = json::array();
  for (const auto& f : schema.fact_tables) {
    json jf;
    jf["name"] = f.name;
    jf["grain"] = f.grain;
    jf["measures"] = json::array();
    for (const auto& m : f.measures) {
      jf["measures"].push_back({{"name", m.name},
                                {"aggregator", aggregator_name(m.aggregator)},
                                {"precomputed", m.precomputed},
                                {"source", m.source}});
    }
    jf["duration_days"] = f.duration_days;
    j["fact_tables"].push_back(std::move(jf));
  }
  j["query_priorities"] = schema.query_priorities;
  return j.dump(2);
}

SchemaDef load_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SourceUnreadable("schema file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return schema_from_json_text(buf.str());
}

}  // namespace rtdw::model
