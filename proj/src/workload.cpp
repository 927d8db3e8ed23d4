#include "rtdw/workload.hpp"

#include <cmath>
#include <random>

#include "rtdw/errors.hpp"

namespace rtdw::harness {

namespace {

// Deterministic bounded draw (std::uniform_int_distribution is
// implementation-defined; the stream contract is byte-identical per seed).
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

std::string pad3(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

const char* kCarriers[] = {"skyway", "transpak", "norddash", "aerolane"};
const char* kRoutes[] = {"LHE-KHI", "KHI-ISB", "ISB-LHE", "LHE-DXB", "KHI-DXB"};
const char* kSectors[] = {"tech", "energy", "finance", "retail", "transport"};

bool is_ticketing(const std::string& g) { return g == "ticketing"; }
bool is_stocks(const std::string& g) { return g == "stocks"; }

void check_generator(const std::string& g) {
  if (!is_ticketing(g) && !is_stocks(g)) throw UnknownGenerator(g);
}

}  // namespace

model::SchemaDef workload_schema(const std::string& generator) {
  check_generator(generator);
  model::SchemaDef schema;
  if (is_ticketing(generator)) {
    model::DimensionDef flight;
    flight.name = "flight";
    flight.attributes = {{"code", ScalarKind::Text},
                         {"carrier", ScalarKind::Text},
                         {"route", ScalarKind::Text}};
    flight.natural_key = "code";
    flight.scd_policy = model::ScdPolicy::Versioned;
    model::DimensionDef day;
    day.name = "day";
    day.attributes = {{"d", ScalarKind::Integer}, {"month", ScalarKind::Integer}};
    day.natural_key = "d";
    schema.dimensions = {flight, day};

    model::FactTableDef tickets;
    tickets.name = "tickets";
    tickets.grain = {"flight", "day"};
    tickets.measures = {{"fare", model::Aggregator::Sum, false, "fare"},
                        {"seats", model::Aggregator::Sum, false, "seats"},
                        {"revenue", model::Aggregator::Sum, true, "fare * seats"}};
    tickets.duration_days = 30;
    schema.fact_tables = {tickets};
    schema.query_priorities = {"tickets"};
  } else {
    model::DimensionDef symbol;
    symbol.name = "symbol";
    symbol.attributes = {{"code", ScalarKind::Text}, {"sector", ScalarKind::Text}};
    symbol.natural_key = "code";
    schema.dimensions = {symbol};

    model::FactTableDef trades;
    trades.name = "trades";
    trades.grain = {"symbol"};
    trades.measures = {{"price", model::Aggregator::Avg, false, "price"},
                       {"volume", model::Aggregator::Sum, false, "volume"}};
    trades.duration_days = 7;
    schema.fact_tables = {trades};
    schema.query_priorities = {"trades"};
  }
  return schema;
}

void seed_workload_dimensions(const std::string& generator,
                              model::DimensionCatalog& dims, int members,
                              std::uint64_t seed) {
  check_generator(generator);
  std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
  if (is_ticketing(generator)) {
    auto& flight = dims.at("flight");
    for (int i = 0; i < members; ++i) {
      flight.apply_scd_update(
          Value(std::string("FL-") + pad3(i)),
          {{"carrier", Value(std::string(kCarriers[bounded(rng, 4)]))},
           {"route", Value(std::string(kRoutes[bounded(rng, 5)]))}},
          0);
    }
    auto& day = dims.at("day");
    for (int i = 0; i < std::max(members, 31); ++i) {
      day.apply_scd_update(Value(std::int64_t{i}),
                           {{"month", Value(std::int64_t{i / 30 + 1})}}, 0);
    }
  } else {
    auto& symbol = dims.at("symbol");
    for (int i = 0; i < members; ++i) {
      symbol.apply_scd_update(
          Value(std::string("SYM") + pad3(i)),
          {{"sector", Value(std::string(kSectors[bounded(rng, 5)]))}}, 0);
    }
  }
}

const std::string& workload_fact(const std::string& generator) {
  static const std::string tickets = "tickets";
  static const std::string trades = "trades";
  check_generator(generator);
  return is_ticketing(generator) ? tickets : trades;
}

std::vector<etl::CleanRule> workload_clean_rules(const std::string& generator) {
  check_generator(generator);
  using etl::CleanRule;
  if (is_ticketing(generator)) {
    return {CleanRule::not_null("fare"),
            CleanRule::type_conforms("fare", ScalarKind::Decimal),
            CleanRule::range("seats", 0, 100),
            CleanRule::referential("flight", "flight")};
  }
  return {CleanRule::not_null("price"),
          CleanRule::type_conforms("price", ScalarKind::Decimal),
          CleanRule::range("volume", 0, 1e9),
          CleanRule::referential("symbol", "symbol")};
}

etl::TransformSpec workload_transform(const std::string& generator,
                                      const model::SchemaDef& schema) {
  check_generator(generator);
  return etl::TransformSpec::defaults(schema.fact(workload_fact(generator)));
}

std::vector<etl::SourceRecord> generate_workload(const WorkloadParams& params) {
  check_generator(params.generator);
  if (params.rate <= 0) throw ConfigError("workload rate must be positive");
  std::mt19937_64 rng(params.seed);

  std::vector<etl::SourceRecord> out;
  const bool ticketing = is_ticketing(params.generator);
  // rate r rows/tick, arrivals at ticks 1..duration; fractional rates
  // accumulate so counts stay exact: emitted(t) = round(r*t) - round(r*(t-1))
  std::int64_t emitted = 0;
  for (Tick t = 1; t <= params.duration; ++t) {
    const auto target = static_cast<std::int64_t>(
        std::llround(params.rate * static_cast<double>(t)));
    for (; emitted < target; ++emitted) {
      etl::SourceRecord rec;
      rec.source_id = params.generator;
      rec.extracted_at = t;
      const Tick jitter = static_cast<Tick>(bounded(rng, 3));  // late events
      const Tick event_time = std::max<Tick>(1, t - jitter);
      if (ticketing) {
        rec.fields.emplace_back(
            "flight", "FL-" + pad3(static_cast<int>(
                                  bounded(rng, static_cast<std::uint64_t>(params.members)))));
        rec.fields.emplace_back("day", std::to_string(event_time / 1440));
        rec.fields.emplace_back("fare", std::to_string(50 + bounded(rng, 500)));
        rec.fields.emplace_back("seats", std::to_string(1 + bounded(rng, 4)));
      } else {
        rec.fields.emplace_back(
            "symbol", "SYM" + pad3(static_cast<int>(
                                  bounded(rng, static_cast<std::uint64_t>(params.members)))));
        rec.fields.emplace_back("price", std::to_string(100 + bounded(rng, 900)));
        rec.fields.emplace_back("volume", std::to_string(1 + bounded(rng, 1000)));
      }
      rec.fields.emplace_back("event_time", std::to_string(event_time));
      out.push_back(std::move(rec));
    }
  }

  // Plant exactly round(p*n) dirty records at deterministic positions.
  const auto n = out.size();
  const auto dirty = static_cast<std::size_t>(
      std::llround(params.dirty_fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {  // Fisher-Yates, deterministic
    std::swap(idx[i - 1], idx[bounded(rng, i)]);
  }
  const char* value_field = ticketing ? "fare" : "price";
  const char* range_field = ticketing ? "seats" : "volume";
  const char* member_field = ticketing ? "flight" : "symbol";
  for (std::size_t k = 0; k < dirty && k < n; ++k) {
    etl::SourceRecord& rec = out[idx[k]];
    auto set_field = [&](const char* name, const std::string& v) {
      for (auto& [fk, fv] : rec.fields) {
        if (fk == name) {
          fv = v;
          return;
        }
      }
    };
    switch (k % 4) {
      case 0: set_field(value_field, ""); break;             // NotNull
      case 1: set_field(value_field, "garbled"); break;      // TypeConforms
      case 2: set_field(range_field, "-7"); break;           // Range
      case 3: set_field(member_field, "GHOST-999"); break;   // ReferentialMember
    }
  }
  return out;
}

}  // namespace rtdw::harness
