#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtdw/dimension.hpp"
#include "rtdw/etl.hpp"
#include "rtdw/schema.hpp"

namespace rtdw::harness {

// Deterministic source-record generators for the two example domains:
// "ticketing" (a row per ticket sold) and "stocks" (a row per trade tick).
// Measures are integer-valued so sums are order-independent in doubles.
struct WorkloadParams {
  std::string generator;  // "ticketing" | "stocks"
  double rate = 1;        // records per tick
  Tick duration = 0;      // ticks; arrivals stamped 1..duration
  std::uint64_t seed = 0;
  double dirty_fraction = 0;  // exact planted fraction of malformed records
  int members = 20;           // dimension members to draw keys from
};

// The canonical star schema each generator targets.
model::SchemaDef workload_schema(const std::string& generator);

// Seeds the generator's dimensions with `members` members per dimension.
void seed_workload_dimensions(const std::string& generator,
                              model::DimensionCatalog& dims, int members,
                              std::uint64_t seed);

// Fixed seed => byte-identical streams. Exactly round(dirty_fraction * n)
// records are malformed, each in a way the canonical clean rules catch.
std::vector<etl::SourceRecord> generate_workload(const WorkloadParams& params);

// The clean rules the generator's dirty records are built to fail.
std::vector<etl::CleanRule> workload_clean_rules(const std::string& generator);

// Field mapping for the generator's fact table.
etl::TransformSpec workload_transform(const std::string& generator,
                                      const model::SchemaDef& schema);

const std::string& workload_fact(const std::string& generator);

}  // namespace rtdw::harness
