#include "rtdw/types.hpp"

#include <cmath>
#include <functional>

#include "rtdw/errors.hpp"

namespace rtdw {

const char* scalar_kind_name(ScalarKind k) {
  switch (k) {
    case ScalarKind::Integer: return "integer";
    case ScalarKind::Decimal: return "decimal";
    case ScalarKind::Text: return "text";
    case ScalarKind::Timestamp: return "timestamp";
  }
  return "unknown";
}

ScalarKind scalar_kind_from_name(const std::string& name) {
  if (name == "integer") return ScalarKind::Integer;
  if (name == "decimal") return ScalarKind::Decimal;
  if (name == "text") return ScalarKind::Text;
  if (name == "timestamp") return ScalarKind::Timestamp;
  throw ConfigError("unknown scalar kind '" + name + "'");
}

std::string to_string(const Value& v) {
  switch (v.index()) {
    case 0: return std::to_string(std::get<0>(v));
    case 1: {
      double d = std::get<1>(v);
      if (d == std::floor(d) && std::abs(d) < 1e15) {
        return std::to_string(static_cast<std::int64_t>(d));
      }
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.12g", d);
      return buf;
    }
    default: return std::get<2>(v);
  }
}

namespace {
bool is_text(const Value& v) { return v.index() == 2; }

double as_number(const Value& v) {
  return v.index() == 0 ? static_cast<double>(std::get<0>(v)) : std::get<1>(v);
}
}  // namespace

int compare_values(const Value& a, const Value& b) {
  const bool ta = is_text(a), tb = is_text(b);
  if (ta != tb) return ta ? 1 : -1;  // numerics order before text
  if (ta) {
    const auto& sa = std::get<2>(a);
    const auto& sb = std::get<2>(b);
    return sa < sb ? -1 : (sa == sb ? 0 : 1);
  }
  if (a.index() == 0 && b.index() == 0) {
    auto ia = std::get<0>(a), ib = std::get<0>(b);
    return ia < ib ? -1 : (ia == ib ? 0 : 1);
  }
  double da = as_number(a), db = as_number(b);
  return da < db ? -1 : (da == db ? 0 : 1);
}

std::size_t hash_value(const Value& v) {
  if (is_text(v)) return std::hash<std::string>{}(std::get<2>(v));
  double d = as_number(v);
  if (d == 0.0) d = 0.0;  // collapse -0.0
  return std::hash<double>{}(d);
}

}  // namespace rtdw
