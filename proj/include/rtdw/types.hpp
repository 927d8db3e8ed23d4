#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace rtdw {

// Logical timestamp. Simulated runs use abstract ticks; wall-clock runs use
// microseconds since engine start.
using Tick = std::int64_t;
using Epoch = std::uint64_t;
using SurrogateKey = std::uint64_t;

inline constexpr Tick kTickMin = std::numeric_limits<Tick>::min();
inline constexpr Tick kTickMax = std::numeric_limits<Tick>::max();

enum class ScalarKind { Integer, Decimal, Text, Timestamp };

const char* scalar_kind_name(ScalarKind k);
ScalarKind scalar_kind_from_name(const std::string& name);

// Attribute / predicate operand value. Timestamps travel as Integer ticks;
// the schema tracks the declared kind.
using Value = std::variant<std::int64_t, double, std::string>;

std::string to_string(const Value& v);

// Total order used for group keys and result ordering: numerics compare by
// value (int/double unified), text compares lexicographically, numerics
// order before text.
int compare_values(const Value& a, const Value& b);

inline bool values_equal(const Value& a, const Value& b) {
  return compare_values(a, b) == 0;
}

// Hash consistent with compare_values equality.
std::size_t hash_value(const Value& v);

struct FactRow {
  std::vector<SurrogateKey> dim_keys;  // aligned with the fact grain
  std::vector<double> measures;        // aligned with the fact's measures
  Tick event_time = 0;                 // business event timestamp
  Tick load_time = 0;                  // when the engine ingested the row
};

}  // namespace rtdw
