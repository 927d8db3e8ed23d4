#include "rtdw/etl.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rtdw/errors.hpp"

namespace rtdw::etl {

// --- MeasureExpr ------------------------------------------------------------

namespace {

struct ExprLexer {
  explicit ExprLexer(const std::string& s) : src(s) {}
  const std::string& src;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
  }
  char peek() {
    skip_ws();
    return pos < src.size() ? src[pos] : '\0';
  }
  char take() {
    char c = peek();
    if (pos < src.size()) ++pos;
    return c;
  }
};

}  // namespace

MeasureExpr MeasureExpr::parse(const std::string& text) {
  MeasureExpr expr;
  expr.text_ = text;
  ExprLexer lex(text);

  // expr := term (('+'|'-') term)* ; term := factor (('*'|'/') factor)*
  // factor := number | ident | '(' expr ')' | '-' factor
  std::function<int()> parse_expr, parse_term, parse_factor;

  auto add_node = [&](Node n) {
    expr.nodes_.push_back(std::move(n));
    return static_cast<int>(expr.nodes_.size() - 1);
  };

  parse_factor = [&]() -> int {
    char c = lex.peek();
    if (c == '(') {
      lex.take();
      int inner = parse_expr();
      if (lex.take() != ')') throw ParseError("expected ')' in '" + text + "'");
      return inner;
    }
    if (c == '-') {
      lex.take();
      Node n;
      n.kind = Node::Neg;
      n.lhs = parse_factor();
      return add_node(std::move(n));
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t start = lex.pos;
      while (lex.pos < lex.src.size() &&
             (std::isdigit(static_cast<unsigned char>(lex.src[lex.pos])) ||
              lex.src[lex.pos] == '.' || lex.src[lex.pos] == 'e' ||
              lex.src[lex.pos] == 'E')) {
        ++lex.pos;
      }
      Node n;
      n.kind = Node::Const;
      n.value = std::stod(lex.src.substr(start, lex.pos - start));
      return add_node(std::move(n));
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = lex.pos;
      while (lex.pos < lex.src.size() &&
             (std::isalnum(static_cast<unsigned char>(lex.src[lex.pos])) ||
              lex.src[lex.pos] == '_')) {
        ++lex.pos;
      }
      Node n;
      n.kind = Node::Field;
      n.name = lex.src.substr(start, lex.pos - start);
      return add_node(std::move(n));
    }
    throw ParseError("unexpected '" + std::string(1, c) + "' in expression '" + text + "'");
  };

  parse_term = [&]() -> int {
    int lhs = parse_factor();
    while (true) {
      char c = lex.peek();
      if (c != '*' && c != '/') return lhs;
      lex.take();
      Node n;
      n.kind = c == '*' ? Node::Mul : Node::Div;
      n.lhs = lhs;
      n.rhs = parse_factor();
      lhs = add_node(std::move(n));
    }
  };

  parse_expr = [&]() -> int {
    int lhs = parse_term();
    while (true) {
      char c = lex.peek();
      if (c != '+' && c != '-') return lhs;
      lex.take();
      Node n;
      n.kind = c == '+' ? Node::Add : Node::Sub;
      n.lhs = lhs;
      n.rhs = parse_term();
      lhs = add_node(std::move(n));
    }
  };

  expr.root_ = parse_expr();
  if (lex.peek() != '\0') {
    throw ParseError("trailing input in expression '" + text + "'");
  }
  return expr;
}

double MeasureExpr::eval_node(
    int idx,
    const std::function<std::optional<double>(const std::string&)>& field_lookup) const {
  const Node& n = nodes_[static_cast<std::size_t>(idx)];
  switch (n.kind) {
    case Node::Const: return n.value;
    case Node::Field: {
      auto v = field_lookup(n.name);
      if (!v) throw ParseError("expression field '" + n.name + "' unavailable");
      return *v;
    }
    case Node::Add: return eval_node(n.lhs, field_lookup) + eval_node(n.rhs, field_lookup);
    case Node::Sub: return eval_node(n.lhs, field_lookup) - eval_node(n.rhs, field_lookup);
    case Node::Mul: return eval_node(n.lhs, field_lookup) * eval_node(n.rhs, field_lookup);
    case Node::Div: return eval_node(n.lhs, field_lookup) / eval_node(n.rhs, field_lookup);
    case Node::Neg: return -eval_node(n.lhs, field_lookup);
  }
  return 0;
}

double MeasureExpr::eval(
    const std::function<std::optional<double>(const std::string&)>& field_lookup) const {
  return eval_node(root_, field_lookup);
}

std::vector<std::string> MeasureExpr::fields() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) {
    if (n.kind == Node::Field) out.push_back(n.name);
  }
  return out;
}

// --- SourceRecord / clean ----------------------------------------------------

const std::string* SourceRecord::find(const std::string& name) const {
  for (const auto& [k, v] : fields) {
    if (k == name) return &v;
  }
  return nullptr;
}

CleanRule CleanRule::not_null(std::string field) {
  CleanRule r;
  r.kind = Kind::NotNull;
  r.field = std::move(field);
  return r;
}

CleanRule CleanRule::type_conforms(std::string field, ScalarKind kind) {
  CleanRule r;
  r.kind = Kind::TypeConforms;
  r.field = std::move(field);
  r.scalar_kind = kind;
  return r;
}

CleanRule CleanRule::range(std::string field, double lo, double hi) {
  CleanRule r;
  r.kind = Kind::Range;
  r.field = std::move(field);
  r.lo = lo;
  r.hi = hi;
  return r;
}

CleanRule CleanRule::referential(std::string field, std::string dimension) {
  CleanRule r;
  r.kind = Kind::ReferentialMember;
  r.field = std::move(field);
  r.dimension = std::move(dimension);
  return r;
}

std::string CleanRule::label() const {
  switch (kind) {
    case Kind::NotNull: return "NotNull(" + field + ")";
    case Kind::TypeConforms:
      return "TypeConforms(" + field + "," + scalar_kind_name(scalar_kind) + ")";
    case Kind::Range: return "Range(" + field + ")";
    case Kind::ReferentialMember:
      return "ReferentialMember(" + field + "," + dimension + ")";
  }
  return "?";
}

namespace {

bool parse_number(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

bool parse_integer(const std::string& s, std::int64_t* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

bool rule_passes(const CleanRule& rule, const SourceRecord& rec,
                 const model::DimensionCatalog& dims) {
  const std::string* raw = rec.find(rule.field);
  switch (rule.kind) {
    case CleanRule::Kind::NotNull:
      return raw != nullptr && !raw->empty() && *raw != "null";
    case CleanRule::Kind::TypeConforms: {
      if (!raw) return false;
      if (rule.scalar_kind == ScalarKind::Text) return true;
      if (rule.scalar_kind == ScalarKind::Decimal) {
        double d;
        return parse_number(*raw, &d);
      }
      std::int64_t i;
      return parse_integer(*raw, &i);  // Integer and Timestamp
    }
    case CleanRule::Kind::Range: {
      if (!raw) return false;
      double d;
      if (!parse_number(*raw, &d)) return false;
      return rule.lo <= d && d <= rule.hi;
    }
    case CleanRule::Kind::ReferentialMember: {
      if (!raw) return false;
      const model::DimensionState& ds = dims.at(rule.dimension);
      // member keys may be declared integer or text
      std::int64_t i;
      if (parse_integer(*raw, &i) && ds.has_member(Value(i))) return true;
      return ds.has_member(Value(*raw));
    }
  }
  return false;
}

}  // namespace

std::pair<std::vector<SourceRecord>, CleanReport> clean(
    std::vector<SourceRecord> records, const std::vector<CleanRule>& rules,
    const model::DimensionCatalog& dims) {
  CleanReport report;
  report.per_rule.reserve(rules.size() + 1);
  std::vector<std::size_t> rule_hits(rules.size(), 0);
  std::size_t framing_hits = 0;

  std::vector<SourceRecord> accepted;
  accepted.reserve(records.size());
  for (auto& rec : records) {
    bool ok = true;
    if (rec.framing_error) {
      ok = false;
      ++framing_hits;
    } else {
      for (std::size_t i = 0; i < rules.size(); ++i) {
        if (!rule_passes(rules[i], rec, dims)) {
          ok = false;
          ++rule_hits[i];
        }
      }
    }
    if (ok) {
      accepted.push_back(std::move(rec));
    } else {
      ++report.rejected;
    }
  }
  report.accepted = accepted.size();
  for (std::size_t i = 0; i < rules.size(); ++i) {
    report.per_rule.emplace_back(rules[i].label(), rule_hits[i]);
  }
  if (framing_hits > 0) report.per_rule.emplace_back("Framing", framing_hits);
  report.snr = static_cast<double>(report.accepted) /
               static_cast<double>(std::max<std::size_t>(report.rejected, 1));
  return {std::move(accepted), report};
}

// --- transform ----------------------------------------------------------------

TransformSpec TransformSpec::defaults(const model::FactTableDef& fact) {
  TransformSpec t;
  t.fact = fact.name;
  for (const auto& g : fact.grain) t.dim_fields.emplace_back(g, g);
  for (const auto& m : fact.measures) {
    t.measure_fields.push_back(m.precomputed ? std::string() : (m.source.empty() ? m.name : m.source));
  }
  return t;
}

TransformResult transform(const std::vector<SourceRecord>& records,
                          const model::SchemaDef& schema, const TransformSpec& tspec,
                          const model::DimensionCatalog& dims) {
  TransformResult out;
  const model::FactTableDef& fact = schema.fact(tspec.fact);
  if (tspec.dim_fields.size() != fact.grain.size() ||
      tspec.measure_fields.size() != fact.measures.size()) {
    throw ConfigError("transform spec shape does not match fact '" + fact.name + "'");
  }

  // Parse precomputed expressions once.
  std::vector<std::optional<MeasureExpr>> exprs(fact.measures.size());
  for (std::size_t i = 0; i < fact.measures.size(); ++i) {
    if (fact.measures[i].precomputed) {
      const std::string& src = fact.measures[i].source;
      if (src.empty()) {
        throw ConfigError("precomputed measure '" + fact.measures[i].name +
                          "' needs a source expression");
      }
      exprs[i] = MeasureExpr::parse(src);
    }
  }

  for (const auto& rec : records) {
    std::string reason;
    FactRow row;
    row.dim_keys.reserve(fact.grain.size());
    row.measures.reserve(fact.measures.size());

    const std::string* ev = rec.find(tspec.event_time_field);
    std::int64_t ev_ticks = 0;
    if (!ev || !parse_integer(*ev, &ev_ticks)) {
      out.dead.push_back({rec, "BadEventTime(" + tspec.event_time_field + ")"});
      continue;
    }
    row.event_time = ev_ticks;
    row.load_time = rec.extracted_at;  // loaders restamp at ingestion

    bool ok = true;
    for (const auto& [dim_name, field] : tspec.dim_fields) {
      const model::DimensionState& ds = dims.at(dim_name);
      const std::string* raw = rec.find(field);
      if (!raw) {
        reason = "MissingDimensionField(" + field + ")";
        ok = false;
        break;
      }
      // natural keys may be integer- or text-typed
      Value key;
      const model::DimensionDef& dd = ds.def();
      int nk = dd.attribute_index(dd.natural_key);
      if (nk >= 0 && (dd.attributes[static_cast<std::size_t>(nk)].kind == ScalarKind::Integer ||
                      dd.attributes[static_cast<std::size_t>(nk)].kind == ScalarKind::Timestamp)) {
        std::int64_t i;
        if (!parse_integer(*raw, &i)) {
          reason = "BadNaturalKey(" + field + ")";
          ok = false;
          break;
        }
        key = Value(i);
      } else {
        key = Value(*raw);
      }
      std::string why;
      auto surrogate = ds.try_resolve(key, row.event_time, &why);
      if (!surrogate) {
        reason = why + "(" + dim_name + "=" + to_string(key) + ")";
        ok = false;
        break;
      }
      row.dim_keys.push_back(*surrogate);
    }
    if (!ok) {
      out.dead.push_back({rec, reason});
      continue;
    }

    auto field_lookup = [&](const std::string& name) -> std::optional<double> {
      const std::string* raw = rec.find(name);
      if (!raw) return std::nullopt;
      double d;
      if (!parse_number(*raw, &d)) return std::nullopt;
      return d;
    };

    for (std::size_t i = 0; i < fact.measures.size(); ++i) {
      if (exprs[i]) {
        try {
          row.measures.push_back(exprs[i]->eval(field_lookup));
        } catch (const ParseError&) {
          reason = "BadPrecomputedInput(" + fact.measures[i].name + ")";
          ok = false;
          break;
        }
        continue;
      }
      auto v = field_lookup(tspec.measure_fields[i]);
      if (!v) {
        reason = "BadMeasure(" + fact.measures[i].name + ")";
        ok = false;
        break;
      }
      row.measures.push_back(*v);
    }
    if (!ok) {
      out.dead.push_back({rec, reason});
      continue;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

// --- extract -------------------------------------------------------------------

std::vector<SourceRecord> extract_delimited(const std::string& path,
                                            const std::string& source_id,
                                            char delimiter) {
  std::ifstream in(path);
  if (!in) throw SourceUnreadable("delimited file '" + path + "'");
  std::vector<SourceRecord> out;
  std::string line;
  if (!std::getline(in, line)) return out;  // empty file -> empty stream

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, delimiter)) header.push_back(col);
  }

  while (std::getline(in, line)) {
    SourceRecord rec;
    rec.source_id = source_id;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, delimiter)) cols.push_back(col);
    if (!line.empty() && line.back() == delimiter) cols.push_back("");
    if (cols.size() != header.size()) {
      rec.framing_error = true;
      rec.fields.emplace_back("_raw", line);
    } else {
      for (std::size_t i = 0; i < header.size(); ++i) {
        rec.fields.emplace_back(header[i], cols[i]);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SourceRecord> extract_jsonl(const std::string& path,
                                        const std::string& source_id) {
  std::ifstream in(path);
  if (!in) throw SourceUnreadable("jsonl file '" + path + "'");
  std::vector<SourceRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SourceRecord rec;
    rec.source_id = source_id;
    try {
      auto j = nlohmann::json::parse(line);
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (it->is_string()) {
          rec.fields.emplace_back(it.key(), it->get<std::string>());
        } else {
          rec.fields.emplace_back(it.key(), it->dump());
        }
      }
    } catch (const nlohmann::json::exception&) {
      rec.framing_error = true;
      rec.fields.emplace_back("_raw", line);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_dead_letters(const std::string& path, const std::vector<DeadLetter>& dead) {
  std::ofstream out(path);
  if (!out) throw UnwritableOutput("dead letter file '" + path + "'");
  for (const auto& d : dead) {
    nlohmann::json j;
    j["source_id"] = d.record.source_id;
    j["reason"] = d.reason;
    nlohmann::json fields = nlohmann::json::object();
    for (const auto& [k, v] : d.record.fields) fields[k] = v;
    j["fields"] = fields;
    out << j.dump() << "\n";
  }
}

}  // namespace rtdw::etl
