#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rtdw/etl.hpp"
#include "rtdw/loader.hpp"
#include "rtdw/schema.hpp"
#include "rtdw/types.hpp"

namespace rtdw::harness {

struct SourceConfig {
  std::string fact;
  std::string generator;  // workload generator name, or empty when file-fed
  std::string file_kind;  // "delimited" | "jsonl" when file-fed
  std::string file_path;
  double rate = 1;
  double dirty_fraction = 0;
  int members = 20;
  etl::LoadStrategy strategy;
  bool default_clean_rules = true;
  std::vector<etl::CleanRule> clean_rules;
  // optional field mapping for file-fed sources; defaults map by name
  bool has_transform = false;
  std::vector<std::pair<std::string, std::string>> dim_fields;
  std::vector<std::pair<std::string, std::string>> measure_fields;
  std::string event_time_field;
};

struct QueryScript {
  Tick at = -1;    // run once at this tick
  Tick every = 0;  // or on this period
  std::string expr;
  std::string fact_hint;
};

struct ScdScript {
  Tick at = 0;
  std::string dimension;
  std::string key;
  std::vector<std::pair<std::string, Value>> attrs;
};

struct ScenarioConfig {
  std::string schema_path;
  model::SchemaDef schema;
  std::uint64_t seed = 0;
  Tick ticks = 100;
  bool wall_clock = false;
  std::size_t cache_capacity = 0;
  Tick ticks_per_day = 1440;
  std::string wal_path;
  bool result_memo = false;
  std::vector<SourceConfig> sources;
  std::vector<QueryScript> queries;
  std::vector<ScdScript> scd_updates;
  std::string alerts_path;
  // When set, the whole scenario runs once per strategy (own engine each);
  // queries/alerts run against the first. At-rest totals must agree.
  std::vector<std::string> compare_strategies;
  bool oracle_self_test = false;  // perturbs oracle values; mismatches expected
  std::vector<std::string> report_formats = {"table"};
  std::string report_dir;

  static ScenarioConfig load(const std::string& path);
};

etl::LoadStrategy parse_strategy(const std::string& text);

struct StrategyReport {
  std::string fact;
  std::string strategy;
  std::uint64_t records_in = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  double snr = 0;
  std::uint64_t dead_letters = 0;
  std::uint64_t rows_ingested = 0;
  std::uint64_t batches = 0;
  std::uint64_t flips = 0;
  std::uint64_t cache_overflows = 0;
  std::uint64_t overflow_rejected = 0;
  double freshness_mean = 0;
  Tick freshness_p95 = 0;
  Tick freshness_max = 0;
  double flip_pause_mean_ms = 0;
  double flip_pause_p95_ms = 0;
  double flip_pause_max_ms = 0;
  double final_sum = 0;  // first measure, at rest
  std::uint64_t final_count = 0;

  bool operator==(const StrategyReport&) const = default;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::vector<StrategyReport> strategies;
  std::uint64_t queries_executed = 0;
  std::uint64_t oracle_mismatches = 0;
  std::uint64_t invariant_violations = 0;
  std::vector<std::string> violation_notes;
  double query_latency_mean_ms = 0;
  double query_latency_p95_ms = 0;
  double query_latency_max_ms = 0;
  double insert_throughput = 0;  // rows/sec, wall
  double run_wall_seconds = 0;
  std::uint64_t alerts_fired = 0;
  std::string alert_digest;
  Epoch final_epoch = 0;

  bool passed() const { return oracle_mismatches == 0 && invariant_violations == 0; }
};

RunReport run_scenario(const ScenarioConfig& config);

// format: "table" | "csv" | "json-lines"
void emit_report(const RunReport& report, const std::string& format, std::ostream& os);
// Writes report.<ext> per format into dir; throws UnwritableOutput.
std::vector<std::string> write_report_files(const RunReport& report,
                                            const std::vector<std::string>& formats,
                                            const std::string& dir);
std::string report_to_jsonl(const RunReport& report);
RunReport report_from_jsonl(const std::string& text);
bool reports_equal_modulo_wall(const RunReport& a, const RunReport& b);

}  // namespace rtdw::harness
