#include "rtdw/query_text.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "rtdw/errors.hpp"

namespace rtdw::query {

namespace {

enum class Tok { Ident, Number, String, Symbol, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0;
  bool is_integer = false;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }

  Token take() {
    Token t = cur_;
    advance();
    return t;
  }

  bool at_keyword(const char* kw) const {
    if (cur_.kind != Tok::Ident) return false;
    return iequal(cur_.text, kw);
  }

  bool eat_keyword(const char* kw) {
    if (!at_keyword(kw)) return false;
    advance();
    return true;
  }

  void expect_symbol(const char* sym) {
    if (cur_.kind != Tok::Symbol || cur_.text != sym) {
      throw ParseError("expected '" + std::string(sym) + "' near '" + cur_.text + "'");
    }
    advance();
  }

  bool eat_symbol(const char* sym) {
    if (cur_.kind == Tok::Symbol && cur_.text == sym) {
      advance();
      return true;
    }
    return false;
  }

  static bool iequal(const std::string& a, const char* b) {
    std::size_t i = 0;
    for (; i < a.size() && b[i]; ++i) {
      if (std::tolower(static_cast<unsigned char>(a[i])) !=
          std::tolower(static_cast<unsigned char>(b[i]))) {
        return false;
      }
    }
    return i == a.size() && b[i] == '\0';
  }

 private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
      ++pos_;
    }
    cur_ = Token{};
    if (pos_ >= src_.size()) {
      cur_.kind = Tok::End;
      cur_.text = "<end>";
      return;
    }
    const char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '_')) {
        ++pos_;
      }
      cur_.kind = Tok::Ident;
      cur_.text = src_.substr(start, pos_ - start);
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      std::size_t start = pos_;
      ++pos_;
      bool is_int = true;
      while (pos_ < src_.size()) {
        const char d = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(d))) {
          ++pos_;
        } else if (d == '.' || d == 'e' || d == 'E' ||
                   ((d == '+' || d == '-') &&
                    (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E'))) {
          is_int = false;
          ++pos_;
        } else {
          break;
        }
      }
      cur_.kind = Tok::Number;
      cur_.text = src_.substr(start, pos_ - start);
      cur_.number = std::stod(cur_.text);
      cur_.is_integer = is_int;
      return;
    }
    if (c == '"') {
      ++pos_;
      std::string out;
      while (pos_ < src_.size() && src_[pos_] != '"') {
        out += src_[pos_++];
      }
      if (pos_ >= src_.size()) throw ParseError("unterminated string literal");
      ++pos_;
      cur_.kind = Tok::String;
      cur_.text = std::move(out);
      return;
    }
    // multi-char comparison symbols
    if ((c == '<' || c == '>') && pos_ + 1 < src_.size() && src_[pos_ + 1] == '=') {
      cur_.kind = Tok::Symbol;
      cur_.text = src_.substr(pos_, 2);
      pos_ += 2;
      return;
    }
    cur_.kind = Tok::Symbol;
    cur_.text = std::string(1, c);
    ++pos_;
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  Token cur_;
};

Value token_value(const Token& t) {
  if (t.kind == Tok::Number) {
    if (t.is_integer) return Value(static_cast<std::int64_t>(std::stoll(t.text)));
    return Value(t.number);
  }
  if (t.kind == Tok::String || t.kind == Tok::Ident) return Value(t.text);
  throw ParseError("expected a value, got '" + t.text + "'");
}

bool is_agg_keyword(const Token& t, model::Aggregator* out) {
  if (t.kind != Tok::Ident) return false;
  if (Lexer::iequal(t.text, "sum")) return *out = model::Aggregator::Sum, true;
  if (Lexer::iequal(t.text, "count")) return *out = model::Aggregator::Count, true;
  if (Lexer::iequal(t.text, "min")) return *out = model::Aggregator::Min, true;
  if (Lexer::iequal(t.text, "max")) return *out = model::Aggregator::Max, true;
  if (Lexer::iequal(t.text, "avg")) return *out = model::Aggregator::Avg, true;
  return false;
}

struct Operand {
  bool on_event_time = false;
  std::string dimension, attribute;
};

Operand parse_operand(Lexer& lex) {
  Token t = lex.take();
  if (t.kind != Tok::Ident) throw ParseError("expected predicate operand, got '" + t.text + "'");
  Operand op;
  if (Lexer::iequal(t.text, "event_time")) {
    op.on_event_time = true;
    return op;
  }
  op.dimension = t.text;
  lex.expect_symbol(".");
  Token attr = lex.take();
  if (attr.kind != Tok::Ident) throw ParseError("expected attribute name after '.'");
  op.attribute = attr.text;
  return op;
}

FilterPred parse_pred(Lexer& lex) {
  FilterPred pred;
  Operand op = parse_operand(lex);
  pred.on_event_time = op.on_event_time;
  pred.dimension = op.dimension;
  pred.attribute = op.attribute;
  if (lex.eat_keyword("between")) {
    pred.op = PredOp::Between;
    pred.lo = token_value(lex.take());
    if (!lex.eat_keyword("and")) throw ParseError("BETWEEN needs AND");
    pred.hi = token_value(lex.take());
    return pred;
  }
  if (lex.eat_keyword("in")) {
    pred.op = PredOp::InSet;
    lex.expect_symbol("(");
    while (true) {
      pred.set.push_back(token_value(lex.take()));
      if (lex.eat_symbol(",")) continue;
      lex.expect_symbol(")");
      break;
    }
    return pred;
  }
  Token sym = lex.take();
  if (sym.kind != Tok::Symbol) throw ParseError("expected comparison, got '" + sym.text + "'");
  if (sym.text == "=") {
    pred.op = PredOp::Eq;
  } else if (sym.text == "<") {
    pred.op = PredOp::Lt;
  } else if (sym.text == "<=") {
    pred.op = PredOp::Le;
  } else if (sym.text == ">") {
    pred.op = PredOp::Gt;
  } else if (sym.text == ">=") {
    pred.op = PredOp::Ge;
  } else {
    throw ParseError("unknown comparison '" + sym.text + "'");
  }
  pred.lo = token_value(lex.take());
  return pred;
}

// Parses the query portion, stopping before FIRE (alert rules reuse this).
QuerySpec parse_query_body(Lexer& lex, const model::SchemaDef& schema,
                           const std::string& explicit_fact) {
  QuerySpec spec;
  while (true) {
    model::Aggregator agg;
    Token t = lex.peek();
    if (!is_agg_keyword(t, &agg)) {
      throw ParseError("expected aggregate (SUM/COUNT/MIN/MAX/AVG), got '" + t.text + "'");
    }
    lex.take();
    lex.expect_symbol("(");
    Token m = lex.take();
    if (m.kind != Tok::Ident) throw ParseError("expected measure name");
    lex.expect_symbol(")");
    spec.aggregates.push_back({m.text, agg});
    if (!lex.eat_symbol(",")) break;
  }
  if (lex.eat_keyword("by")) {
    while (true) {
      Operand op = parse_operand(lex);
      if (op.on_event_time) throw ParseError("BY accepts dimension attributes only");
      spec.group_by.emplace_back(op.dimension, op.attribute);
      if (!lex.eat_symbol(",")) break;
    }
  }
  if (lex.eat_keyword("where")) {
    while (true) {
      spec.filters.push_back(parse_pred(lex));
      if (!lex.eat_symbol(",")) break;
    }
  }
  if (lex.eat_keyword("freshness")) {
    Token f = lex.take();
    if (f.kind != Tok::Ident) throw ParseError("expected freshness level");
    spec.freshness = freshness_from_name(f.text);
  }

  // Infer the fact table from the measure names.
  if (!explicit_fact.empty()) {
    spec.fact = explicit_fact;
  } else {
    std::vector<std::string> candidates;
    for (const auto& f : schema.fact_tables) {
      bool all = true;
      for (const auto& a : spec.aggregates) {
        if (f.measure_index(a.measure) < 0) {
          all = false;
          break;
        }
      }
      if (all) candidates.push_back(f.name);
    }
    if (candidates.empty()) {
      throw UnknownMeasure("no fact table declares all queried measures");
    }
    if (candidates.size() > 1) {
      throw ParseError("measures are ambiguous across fact tables (" +
                       candidates[0] + ", " + candidates[1] +
                       "...); pass an explicit fact");
    }
    spec.fact = candidates[0];
  }
  return spec;
}

}  // namespace

QuerySpec parse_query(const std::string& text, const model::SchemaDef& schema,
                      const std::string& explicit_fact) {
  Lexer lex(text);
  QuerySpec spec = parse_query_body(lex, schema, explicit_fact);
  if (lex.peek().kind != Tok::End) {
    throw ParseError("trailing input near '" + lex.peek().text + "'");
  }
  return spec;
}

namespace {

std::string format_value(const Value& v) {
  if (v.index() == 2) return "\"" + std::get<2>(v) + "\"";
  return to_string(v);
}

std::string format_operand(const FilterPred& p) {
  return p.on_event_time ? "event_time" : p.dimension + "." + p.attribute;
}

const char* pred_op_text(PredOp op) {
  switch (op) {
    case PredOp::Eq: return "=";
    case PredOp::Lt: return "<";
    case PredOp::Le: return "<=";
    case PredOp::Gt: return ">";
    case PredOp::Ge: return ">=";
    default: return "?";
  }
}

}  // namespace

std::string format_query(const QuerySpec& spec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spec.aggregates.size(); ++i) {
    if (i) os << ", ";
    std::string n = model::aggregator_name(spec.aggregates[i].agg);
    for (auto& c : n) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    os << n << "(" << spec.aggregates[i].measure << ")";
  }
  if (!spec.group_by.empty()) {
    os << " BY ";
    for (std::size_t i = 0; i < spec.group_by.size(); ++i) {
      if (i) os << ", ";
      os << spec.group_by[i].first << "." << spec.group_by[i].second;
    }
  }
  if (!spec.filters.empty()) {
    os << " WHERE ";
    for (std::size_t i = 0; i < spec.filters.size(); ++i) {
      if (i) os << ", ";
      const FilterPred& p = spec.filters[i];
      os << format_operand(p) << " ";
      if (p.op == PredOp::Between) {
        os << "BETWEEN " << format_value(p.lo) << " AND " << format_value(p.hi);
      } else if (p.op == PredOp::InSet) {
        os << "IN (";
        for (std::size_t j = 0; j < p.set.size(); ++j) {
          if (j) os << ", ";
          os << format_value(p.set[j]);
        }
        os << ")";
      } else {
        os << pred_op_text(p.op) << " " << format_value(p.lo);
      }
    }
  }
  os << " FRESHNESS " << freshness_name(spec.freshness);
  return os.str();
}

}  // namespace rtdw::query

namespace rtdw::alerting {

ParsedRule parse_alert_rule(const std::string& line, const model::SchemaDef& schema) {
  auto colon = line.find(':');
  if (colon == std::string::npos) {
    throw ParseError("alert rule needs '<id>: <query> FIRE WHEN ...'");
  }
  ParsedRule rule;
  rule.rule_id = line.substr(0, colon);
  // trim
  while (!rule.rule_id.empty() && std::isspace(static_cast<unsigned char>(rule.rule_id.back()))) {
    rule.rule_id.pop_back();
  }
  std::size_t s = 0;
  while (s < rule.rule_id.size() && std::isspace(static_cast<unsigned char>(rule.rule_id[s]))) {
    ++s;
  }
  rule.rule_id = rule.rule_id.substr(s);
  if (rule.rule_id.empty()) throw ParseError("empty alert rule id");

  const std::string body = line.substr(colon + 1);
  query::Lexer lex(body);
  rule.spec = query::parse_query_body(lex, schema, "");
  if (!lex.eat_keyword("fire")) throw ParseError("expected FIRE WHEN clause");
  if (!lex.eat_keyword("when")) throw ParseError("expected WHEN after FIRE");
  if (lex.eat_keyword("crosses")) {
    rule.predicate_op = "crosses";
  } else {
    auto t = lex.take();
    if (t.kind != query::Tok::Symbol ||
        (t.text != ">" && t.text != "<" && t.text != ">=" && t.text != "<=")) {
      throw ParseError("FIRE WHEN needs >, <, >=, <= or CROSSES");
    }
    rule.predicate_op = t.text;
  }
  auto thr = lex.take();
  if (thr.kind != query::Tok::Number) throw ParseError("threshold must be numeric");
  rule.threshold = thr.number;
  if (lex.eat_keyword("on")) {
    if (!lex.eat_keyword("event")) throw ParseError("expected EVENT after ON");
    rule.on_event = true;
  }
  if (lex.eat_keyword("every")) {
    auto p = lex.take();
    if (p.kind != query::Tok::Number || !p.is_integer) {
      throw ParseError("EVERY needs an integer period");
    }
    rule.period = static_cast<Tick>(p.number);
  } else if (!rule.on_event) {
    throw ParseError("cycle rules need EVERY <period>");
  }
  if (lex.peek().kind != query::Tok::End) {
    throw ParseError("trailing input in alert rule near '" + lex.peek().text + "'");
  }
  return rule;
}

std::vector<ParsedRule> parse_alert_rules_file(const std::string& path,
                                               const model::SchemaDef& schema) {
  std::ifstream in(path);
  if (!in) throw SourceUnreadable("alert rules file '" + path + "'");
  std::vector<ParsedRule> rules;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size() || line[i] == '#') continue;
    rules.push_back(parse_alert_rule(line, schema));
  }
  return rules;
}

}  // namespace rtdw::alerting
