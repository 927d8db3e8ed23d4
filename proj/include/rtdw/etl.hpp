#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rtdw/dimension.hpp"
#include "rtdw/schema.hpp"
#include "rtdw/types.hpp"

namespace rtdw::etl {

// Tiny arithmetic over source fields (+ - * / and parentheses), used for
// measures stored as pre-calculations.
class MeasureExpr {
 public:
  static MeasureExpr parse(const std::string& text);  // throws ParseError
  double eval(const std::function<std::optional<double>(const std::string&)>&
                  field_lookup) const;
  std::vector<std::string> fields() const;
  const std::string& text() const { return text_; }

 private:
  struct Node {
    enum Kind { Const, Field, Add, Sub, Mul, Div, Neg } kind = Const;
    double value = 0;
    std::string name;
    int lhs = -1, rhs = -1;
  };
  double eval_node(int idx,
                   const std::function<std::optional<double>(const std::string&)>&
                       field_lookup) const;
  std::vector<Node> nodes_;
  int root_ = -1;
  std::string text_;
};

struct SourceRecord {
  std::string source_id;
  std::vector<std::pair<std::string, std::string>> fields;  // ordered name -> raw
  Tick extracted_at = 0;
  bool framing_error = false;  // unparseable input, counts as noise downstream

  const std::string* find(const std::string& name) const;
};

struct CleanRule {
  enum class Kind { NotNull, TypeConforms, Range, ReferentialMember };
  Kind kind = Kind::NotNull;
  std::string field;
  ScalarKind scalar_kind = ScalarKind::Text;  // TypeConforms
  double lo = 0, hi = 0;                      // Range
  std::string dimension;                      // ReferentialMember

  std::string label() const;

  static CleanRule not_null(std::string field);
  static CleanRule type_conforms(std::string field, ScalarKind kind);
  static CleanRule range(std::string field, double lo, double hi);
  static CleanRule referential(std::string field, std::string dimension);
};

struct CleanReport {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::vector<std::pair<std::string, std::size_t>> per_rule;  // label -> rejections
  double snr = 0;  // accepted / max(rejected, 1)
};

// Rejects a record iff at least one rule fails (framing errors always
// reject). Deterministic; rejections are data, not failures.
std::pair<std::vector<SourceRecord>, CleanReport> clean(
    std::vector<SourceRecord> records, const std::vector<CleanRule>& rules,
    const model::DimensionCatalog& dims);

// How source fields map onto one fact table.
struct TransformSpec {
  std::string fact;
  // grain dimension -> source field holding the natural key (defaults to the
  // dimension name when empty)
  std::vector<std::pair<std::string, std::string>> dim_fields;
  // per measure: source field; precomputed measures use the MeasureDef source
  // expression instead
  std::vector<std::string> measure_fields;
  std::string event_time_field = "event_time";

  static TransformSpec defaults(const model::FactTableDef& fact);
};

struct DeadLetter {
  SourceRecord record;
  std::string reason;
};

struct TransformResult {
  std::vector<FactRow> rows;
  std::vector<DeadLetter> dead;
};

// Keys each record against the dimension states (as of the record's event
// time), coerces measures, computes precomputed measures. Rows that fail
// surrogate resolution or coercion divert to the dead-letter collection.
TransformResult transform(const std::vector<SourceRecord>& records,
                          const model::SchemaDef& schema, const TransformSpec& tspec,
                          const model::DimensionCatalog& dims);

// --- extract connectors ---

// Delimited file with a header line; a line with the wrong column count is
// yielded with framing_error set so clean can count it as noise.
std::vector<SourceRecord> extract_delimited(const std::string& path,
                                            const std::string& source_id,
                                            char delimiter = ',');
// Record-per-line structured text (one JSON object per line).
std::vector<SourceRecord> extract_jsonl(const std::string& path,
                                        const std::string& source_id);

void write_dead_letters(const std::string& path, const std::vector<DeadLetter>& dead);

}  // namespace rtdw::etl
