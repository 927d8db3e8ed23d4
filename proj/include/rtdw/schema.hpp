#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rtdw/types.hpp"

namespace rtdw::model {

enum class ScdPolicy { Overwrite, Versioned };
enum class Aggregator { Sum, Count, Min, Max, Avg };

const char* aggregator_name(Aggregator a);
Aggregator aggregator_from_name(const std::string& name);

struct AttributeDef {
  std::string name;
  ScalarKind kind = ScalarKind::Text;
};

struct DimensionDef {
  std::string name;
  std::vector<AttributeDef> attributes;
  std::string natural_key;
  ScdPolicy scd_policy = ScdPolicy::Overwrite;
  bool conformed = false;

  int attribute_index(const std::string& attr) const;  // -1 if absent
};

struct MeasureDef {
  std::string name;
  Aggregator aggregator = Aggregator::Sum;
  bool precomputed = false;
  // Input field the measure is read from, or (when precomputed) the
  // arithmetic expression over input fields that produces it. Empty means
  // "same field name as the measure".
  std::string source;
};

struct FactTableDef {
  std::string name;
  std::vector<std::string> grain;  // dimension names, ordered
  std::vector<MeasureDef> measures;
  std::int64_t duration_days = 0;  // retention window

  int grain_index(const std::string& dimension) const;  // -1 if absent
  int measure_index(const std::string& measure) const;  // -1 if absent
};

struct SchemaDef {
  std::vector<DimensionDef> dimensions;
  std::vector<FactTableDef> fact_tables;
  std::vector<std::string> query_priorities;

  const DimensionDef* find_dimension(const std::string& name) const;
  const FactTableDef* find_fact(const std::string& name) const;
  const FactTableDef& fact(const std::string& name) const;  // throws UnknownFact
  // Lower rank = admitted first. Facts not listed rank after all listed ones.
  int priority_rank(const std::string& fact) const;
};

struct Violation {
  std::string code;     // stable identifier, e.g. "GrainEmpty"
  std::string element;  // offending schema element name
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool valid() const { return violations.empty(); }
  std::string to_string() const;
};

// Checks every schema invariant; violations are data, not failures. The
// report is deterministic and order-stable for a given schema.
ValidationReport validate_schema(const SchemaDef& schema);

// Canonical schema file format (JSON). See README for the layout.
SchemaDef schema_from_json_text(const std::string& text);
std::string schema_to_json_text(const SchemaDef& schema);
SchemaDef load_schema_file(const std::string& path);

}  // namespace rtdw::model
