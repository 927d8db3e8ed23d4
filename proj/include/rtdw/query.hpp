#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtdw/dimension.hpp"
#include "rtdw/schema.hpp"
#include "rtdw/storage.hpp"
#include "rtdw/types.hpp"

namespace rtdw::query {

enum class Freshness { AsOfHistorical, NearRealTime, RealTime };
const char* freshness_name(Freshness f);
Freshness freshness_from_name(const std::string& name);

enum class PredOp { Eq, Lt, Le, Gt, Ge, Between, InSet };

struct FilterPred {
  bool on_event_time = false;
  std::string dimension;  // when !on_event_time
  std::string attribute;
  PredOp op = PredOp::Eq;
  Value lo;                // Eq/Lt/Le/Gt/Ge operand; Between lower bound
  Value hi;                // Between upper bound
  std::vector<Value> set;  // InSet members
};

struct AggSpec {
  std::string measure;
  model::Aggregator agg = model::Aggregator::Sum;
};

struct QuerySpec {
  std::string fact;
  std::vector<FilterPred> filters;
  std::vector<std::pair<std::string, std::string>> group_by;  // (dimension, attribute)
  std::vector<AggSpec> aggregates;
  Freshness freshness = Freshness::RealTime;
};

// Canonical text form (the CLI grammar); parse/format round-trip.
std::string format_query(const QuerySpec& spec);

enum class Route { Direct, JIM, ReverseJIM };
const char* route_name(Route r);

struct MergePlan {
  Route route = Route::Direct;
  std::size_t estimated_rt_rows = 0;
  std::size_t estimated_hist_rows = 0;
  Epoch epoch = 0;
  bool overflow_avoided = false;  // ReverseJIM wanted but slice would overflow
};

struct ResultRow {
  std::vector<Value> keys;
  std::vector<double> values;
};

struct ResultSet {
  std::vector<std::string> key_names;  // "dimension.attribute"
  std::vector<std::string> agg_names;  // "SUM(measure)"
  std::vector<ResultRow> rows;         // sorted by keys

  struct Meta {
    Epoch epoch = 0;
    Route route = Route::Direct;
    std::size_t rows_scanned = 0;
    Tick staleness_bound = kTickMin;  // max load_time among visible rows
    double wait_seconds = 0;          // flip-pause admission wait
    bool from_memo = false;
  } meta;

  const ResultRow* find(const std::vector<Value>& keys) const;
  std::optional<double> scalar() const;  // single ungrouped aggregate value
};

// Projection + filter slice the JIM request analyzer pushes down: exactly the
// columns and predicates the query needs. Applying the slice then aggregating
// equals aggregating the full data.
struct RequiredSlice {
  std::string fact;
  Freshness freshness = Freshness::RealTime;
  std::vector<FilterPred> pushed_filters;
  std::vector<int> measure_indices;                            // sorted, unique
  std::vector<std::pair<std::string, std::string>> attributes;  // dim.attr needed
  bool event_time_needed = false;
};

// Snapshot image of the required real-time slice; immutable once built.
struct TempTable {
  std::vector<FactRow> rows;
  Epoch epoch = 0;
  std::size_t rows_scanned = 0;
  Tick max_load_seen = kTickMin;
};

// Historical slice loaded into external-cache scratch space for ReverseJIM.
// Holds the reservation until destroyed (query completion frees capacity).
struct CacheResident {
  storage::Warehouse::ScratchReservation reservation;
  std::vector<FactRow> rows;
  std::size_t rows_scanned = 0;
  Tick max_load_seen = kTickMin;
};

struct QueryEngineOptions {
  bool result_memo = false;  // off by default: stale-memo hazard
};

class QueryEngine {
 public:
  QueryEngine(const model::SchemaDef& schema, storage::Warehouse& warehouse,
              model::DimensionCatalog& dims, QueryEngineOptions opts = {});

  // Route selection from current engine state (opens a snapshot internally).
  MergePlan plan(const QuerySpec& spec) const;
  MergePlan plan_on(const storage::Snapshot& snap, const QuerySpec& spec) const;

  RequiredSlice jim_analyze(const QuerySpec& spec) const;
  TempTable jim_image(const RequiredSlice& slice, const storage::Snapshot& snap) const;
  // Throws CacheOverflow when the slice exceeds free cache capacity.
  CacheResident reverse_jim_load(const RequiredSlice& slice,
                                 const storage::Snapshot& snap) const;

  // Admits (respecting flip pauses and query priorities), snapshots, plans,
  // runs the chosen route and merges partial aggregates. Never returns
  // partial results.
  ResultSet execute(const QuerySpec& spec);
  ResultSet execute(const QuerySpec& spec, std::optional<Route> forced_route);
  // Runs against a caller-held snapshot (no admission wait, no memo).
  ResultSet execute_on(const storage::Snapshot& snap, const QuerySpec& spec,
                       std::optional<Route> forced_route = std::nullopt) const;

  // Drops memoized results tagged with epochs below the given one.
  void invalidate_result_cache(Epoch epoch);
  std::size_t memo_size() const;

  void validate(const QuerySpec& spec) const;  // UnknownFact/Attribute/Measure

 private:
  ResultSet run_route(const storage::Snapshot& snap, const QuerySpec& spec,
                      const struct CompiledQuery& comp, Route route) const;

  const model::SchemaDef& schema_;
  storage::Warehouse& wh_;
  model::DimensionCatalog& dims_;
  QueryEngineOptions opts_;

  struct MemoEntry {
    Epoch epoch = 0;
    std::uint64_t hist_version = 0;
    ResultSet result;
  };
  mutable std::mutex memo_mu_;
  mutable std::unordered_map<std::string, MemoEntry> memo_;
};

}  // namespace rtdw::query
