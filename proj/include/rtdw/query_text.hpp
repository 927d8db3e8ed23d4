#pragma once

#include <string>
#include <vector>

#include "rtdw/query.hpp"
#include "rtdw/schema.hpp"

namespace rtdw::query {

// Declarative query text:
//   AGG(measure) [, AGG(measure)...] [BY dim.attr[, dim.attr...]]
//   [WHERE pred[, pred...]] [FRESHNESS AsOfHistorical|NearRealTime|RealTime]
// preds: operand (=|<|<=|>|>=) value | operand BETWEEN v AND v
//        | operand IN (v, v, ...)         operand: event_time | dim.attr
// Values are numbers, "quoted text", or bare identifiers (taken as text).
// The fact table is inferred from the measure names; pass explicit_fact to
// break ties when measures are ambiguous across fact tables.
QuerySpec parse_query(const std::string& text, const model::SchemaDef& schema,
                      const std::string& explicit_fact = "");

}  // namespace rtdw::query

namespace rtdw::alerting {

struct ParsedRule {
  std::string rule_id;
  query::QuerySpec spec;
  std::string predicate_op;  // ">", "<", ">=", "<=", "crosses"
  double threshold = 0;
  bool on_event = false;
  Tick period = 1;  // cycle period, or dedup window for on-event rules
};

// One rule per line:
//   <id>: <query text> FIRE WHEN <op> <value> EVERY <period>
//   <id>: <query text> FIRE WHEN <op> <value> ON EVENT EVERY <period>
// '#' starts a comment line.
ParsedRule parse_alert_rule(const std::string& line, const model::SchemaDef& schema);
std::vector<ParsedRule> parse_alert_rules_file(const std::string& path,
                                               const model::SchemaDef& schema);

}  // namespace rtdw::alerting
