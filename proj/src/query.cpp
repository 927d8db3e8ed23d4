#include "rtdw/query.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_map>

#include "rtdw/errors.hpp"

namespace rtdw::query {

const char* freshness_name(Freshness f) {
  switch (f) {
    case Freshness::AsOfHistorical: return "AsOfHistorical";
    case Freshness::NearRealTime: return "NearRealTime";
    case Freshness::RealTime: return "RealTime";
  }
  return "unknown";
}

Freshness freshness_from_name(const std::string& name) {
  std::string low;
  for (char c : name) {
    low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (low == "asofhistorical") return Freshness::AsOfHistorical;
  if (low == "nearrealtime") return Freshness::NearRealTime;
  if (low == "realtime") return Freshness::RealTime;
  throw ParseError("unknown freshness level '" + name + "'");
}

const char* route_name(Route r) {
  switch (r) {
    case Route::Direct: return "Direct";
    case Route::JIM: return "JIM";
    case Route::ReverseJIM: return "ReverseJIM";
  }
  return "unknown";
}

const ResultRow* ResultSet::find(const std::vector<Value>& keys) const {
  for (const auto& r : rows) {
    if (r.keys.size() != keys.size()) continue;
    bool eq = true;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (!values_equal(r.keys[i], keys[i])) {
        eq = false;
        break;
      }
    }
    if (eq) return &r;
  }
  return nullptr;
}

std::optional<double> ResultSet::scalar() const {
  if (!key_names.empty() || rows.size() != 1 || rows[0].values.empty()) {
    return std::nullopt;
  }
  return rows[0].values[0];
}

namespace {

bool pred_matches(PredOp op, const Value& v, const Value& lo, const Value& hi,
                  const std::vector<Value>& set) {
  switch (op) {
    case PredOp::Eq: return values_equal(v, lo);
    case PredOp::Lt: return compare_values(v, lo) < 0;
    case PredOp::Le: return compare_values(v, lo) <= 0;
    case PredOp::Gt: return compare_values(v, lo) > 0;
    case PredOp::Ge: return compare_values(v, lo) >= 0;
    case PredOp::Between:
      return compare_values(v, lo) >= 0 && compare_values(v, hi) <= 0;
    case PredOp::InSet:
      for (const auto& s : set) {
        if (values_equal(v, s)) return true;
      }
      return false;
  }
  return false;
}

Tick as_tick(const Value& v) {
  if (v.index() == 0) return std::get<0>(v);
  if (v.index() == 1) return static_cast<Tick>(std::llround(std::get<1>(v)));
  throw ParseError("event_time predicate needs a numeric operand");
}

struct AggPartial {
  double sum = 0;
  std::uint64_t count = 0;
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();

  void add(double v) {
    sum += v;
    ++count;
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  double finalize(model::Aggregator a) const {
    switch (a) {
      case model::Aggregator::Sum: return sum;
      case model::Aggregator::Count: return static_cast<double>(count);
      case model::Aggregator::Min: return mn;
      case model::Aggregator::Max: return mx;
      case model::Aggregator::Avg: return sum / static_cast<double>(count);
    }
    return 0;
  }
};

std::string encode_key_part(const Value& v) {
  if (v.index() == 2) return "t:" + std::get<2>(v);
  const double d =
      v.index() == 0 ? static_cast<double>(std::get<0>(v)) : std::get<1>(v);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "n:%.17g", d == 0.0 ? 0.0 : d);
  return buf;
}

struct GroupState {
  std::vector<Value> keys;
  std::vector<AggPartial> partials;
};

// Intersection of all event_time predicates as a closed [lo, hi] range; the
// planner's estimator only looks at this cheap metadata.
void tighten_event_bounds(const FilterPred& f, Tick& lo, Tick& hi) {
  switch (f.op) {
    case PredOp::Eq:
      lo = std::max(lo, as_tick(f.lo));
      hi = std::min(hi, as_tick(f.lo));
      break;
    case PredOp::Lt: hi = std::min(hi, as_tick(f.lo) - 1); break;
    case PredOp::Le: hi = std::min(hi, as_tick(f.lo)); break;
    case PredOp::Gt: lo = std::max(lo, as_tick(f.lo) + 1); break;
    case PredOp::Ge: lo = std::max(lo, as_tick(f.lo)); break;
    case PredOp::Between:
      lo = std::max(lo, as_tick(f.lo));
      hi = std::min(hi, as_tick(f.hi));
      break;
    case PredOp::InSet: {
      Tick mn = kTickMax, mx = kTickMin;
      for (const auto& v : f.set) {
        mn = std::min(mn, as_tick(v));
        mx = std::max(mx, as_tick(v));
      }
      lo = std::max(lo, mn);
      hi = std::min(hi, mx);
      break;
    }
  }
}

}  // namespace

// Name -> index resolution done once per execution.
struct CompiledQuery {
  const model::FactTableDef* fact = nullptr;

  struct CFilter {
    bool on_event_time = false;
    int key_index = -1;
    int attr_index = -1;
    const model::DimensionState* dim = nullptr;
    PredOp op = PredOp::Eq;
    Value lo, hi;
    std::vector<Value> set;
  };
  std::vector<CFilter> filters;

  struct CGroup {
    int key_index = -1;
    int attr_index = -1;
    const model::DimensionState* dim = nullptr;
  };
  std::vector<CGroup> groups;

  struct CAgg {
    int measure_index = -1;
    model::Aggregator agg = model::Aggregator::Sum;
  };
  std::vector<CAgg> aggs;

  bool row_passes(const FactRow& row) const {
    for (const auto& f : filters) {
      Value v =
          f.on_event_time
              ? Value(row.event_time)
              : f.dim->attribute_of(
                    row.dim_keys[static_cast<std::size_t>(f.key_index)], f.attr_index);
      if (!pred_matches(f.op, v, f.lo, f.hi, f.set)) return false;
    }
    return true;
  }
};

namespace {

CompiledQuery compile_spec(const model::SchemaDef& schema,
                           const model::DimensionCatalog& dims, const QuerySpec& spec) {
  CompiledQuery comp;
  comp.fact = &schema.fact(spec.fact);
  for (const auto& f : spec.filters) {
    CompiledQuery::CFilter cf;
    cf.on_event_time = f.on_event_time;
    cf.op = f.op;
    cf.lo = f.lo;
    cf.hi = f.hi;
    cf.set = f.set;
    if (!f.on_event_time) {
      cf.key_index = comp.fact->grain_index(f.dimension);
      const model::DimensionState& ds = dims.at(f.dimension);
      cf.attr_index = ds.def().attribute_index(f.attribute);
      cf.dim = &ds;
      if (cf.key_index < 0 || cf.attr_index < 0) {
        throw UnknownAttribute(f.dimension + "." + f.attribute);
      }
    }
    comp.filters.push_back(std::move(cf));
  }
  for (const auto& [dim, attr] : spec.group_by) {
    CompiledQuery::CGroup cg;
    cg.key_index = comp.fact->grain_index(dim);
    const model::DimensionState& ds = dims.at(dim);
    cg.attr_index = ds.def().attribute_index(attr);
    cg.dim = &ds;
    if (cg.key_index < 0 || cg.attr_index < 0) {
      throw UnknownAttribute(dim + "." + attr);
    }
    comp.groups.push_back(cg);
  }
  for (const auto& a : spec.aggregates) {
    int mi = comp.fact->measure_index(a.measure);
    if (mi < 0) throw UnknownMeasure(spec.fact + "." + a.measure);
    comp.aggs.push_back({mi, a.agg});
  }
  return comp;
}

struct ScanAccum {
  std::unordered_map<std::string, GroupState> groups;
  std::size_t scanned = 0;
  Tick max_load = kTickMin;

  void group_row(const FactRow& row, const CompiledQuery& comp) {
    std::string key;
    std::vector<Value> keys;
    keys.reserve(comp.groups.size());
    for (const auto& g : comp.groups) {
      Value v = g.dim->attribute_of(
          row.dim_keys[static_cast<std::size_t>(g.key_index)], g.attr_index);
      key += encode_key_part(v);
      key += '\x1f';
      keys.push_back(std::move(v));
    }
    auto [it, inserted] = groups.try_emplace(std::move(key));
    GroupState& gs = it->second;
    if (inserted) {
      gs.keys = std::move(keys);
      gs.partials.resize(comp.aggs.size());
    }
    for (std::size_t i = 0; i < comp.aggs.size(); ++i) {
      gs.partials[i].add(
          row.measures[static_cast<std::size_t>(comp.aggs[i].measure_index)]);
    }
  }

  // Full scan path: counts the row, tracks staleness, filters, aggregates.
  void scan(const FactRow& row, const CompiledQuery& comp) {
    ++scanned;
    max_load = std::max(max_load, row.load_time);
    if (!comp.row_passes(row)) return;
    group_row(row, comp);
  }

  // Rows already filtered and counted by jim_image / reverse_jim_load.
  void add_prefiltered(const FactRow& row, const CompiledQuery& comp) {
    group_row(row, comp);
  }
};

}  // namespace

QueryEngine::QueryEngine(const model::SchemaDef& schema, storage::Warehouse& warehouse,
                         model::DimensionCatalog& dims, QueryEngineOptions opts)
    : schema_(schema), wh_(warehouse), dims_(dims), opts_(opts) {}

void QueryEngine::validate(const QuerySpec& spec) const {
  const model::FactTableDef* fact = schema_.find_fact(spec.fact);
  if (!fact) throw UnknownFact(spec.fact);
  if (spec.aggregates.empty()) {
    throw UnknownMeasure(spec.fact + ": query has no aggregates");
  }
  for (const auto& a : spec.aggregates) {
    if (fact->measure_index(a.measure) < 0) {
      throw UnknownMeasure(spec.fact + "." + a.measure);
    }
  }
  auto check_attr = [&](const std::string& dim, const std::string& attr) {
    if (fact->grain_index(dim) < 0) {
      throw UnknownAttribute(dim + "." + attr + " (dimension not in grain of " +
                             spec.fact + ")");
    }
    const model::DimensionDef* dd = schema_.find_dimension(dim);
    if (!dd || dd->attribute_index(attr) < 0) {
      throw UnknownAttribute(dim + "." + attr);
    }
  };
  for (const auto& f : spec.filters) {
    if (!f.on_event_time) check_attr(f.dimension, f.attribute);
  }
  for (const auto& [dim, attr] : spec.group_by) check_attr(dim, attr);
}

MergePlan QueryEngine::plan(const QuerySpec& spec) const {
  return plan_on(wh_.open_snapshot(), spec);
}

MergePlan QueryEngine::plan_on(const storage::Snapshot& snap,
                               const QuerySpec& spec) const {
  validate(spec);
  MergePlan plan;
  plan.epoch = snap.epoch;
  if (spec.freshness == Freshness::AsOfHistorical) {
    plan.route = Route::Direct;
    return plan;
  }
  Tick lo = kTickMin, hi = kTickMax;
  for (const auto& f : spec.filters) {
    if (f.on_event_time) tighten_event_bounds(f, lo, hi);
  }
  const storage::FactVisible& vis = snap.fact(spec.fact);
  std::size_t hist = 0;
  for (const auto& seg : *vis.segments) {
    if (seg->min_event_time <= hi && seg->max_event_time >= lo) {
      hist += seg->rows.size();
    }
  }
  std::size_t rt = 0;
  auto count_in_range = [&](const FactRow& r) {
    if (lo <= r.event_time && r.event_time <= hi) ++rt;
  };
  vis.realtime.for_each(count_in_range);
  if (spec.freshness == Freshness::RealTime) vis.cache.for_each(count_in_range);

  plan.estimated_rt_rows = rt;
  plan.estimated_hist_rows = hist;
  if (rt <= hist) {
    plan.route = Route::JIM;  // move the small real-time slice toward history
  } else if (wh_.cache_configured() &&
             hist <= wh_.cache_free()) {
    plan.route = Route::ReverseJIM;
  } else {
    plan.route = Route::JIM;  // safe direction: the data cache may overflow
    plan.overflow_avoided = true;
  }
  return plan;
}

RequiredSlice QueryEngine::jim_analyze(const QuerySpec& spec) const {
  validate(spec);
  RequiredSlice slice;
  slice.fact = spec.fact;
  slice.freshness = spec.freshness;
  slice.pushed_filters = spec.filters;
  const model::FactTableDef& fact = schema_.fact(spec.fact);
  for (const auto& a : spec.aggregates) {
    int mi = fact.measure_index(a.measure);
    if (std::find(slice.measure_indices.begin(), slice.measure_indices.end(), mi) ==
        slice.measure_indices.end()) {
      slice.measure_indices.push_back(mi);
    }
  }
  std::sort(slice.measure_indices.begin(), slice.measure_indices.end());
  auto add_attr = [&](const std::string& d, const std::string& a) {
    auto p = std::make_pair(d, a);
    if (std::find(slice.attributes.begin(), slice.attributes.end(), p) ==
        slice.attributes.end()) {
      slice.attributes.push_back(std::move(p));
    }
  };
  for (const auto& [d, a] : spec.group_by) add_attr(d, a);
  for (const auto& f : spec.filters) {
    if (f.on_event_time) {
      slice.event_time_needed = true;
    } else {
      add_attr(f.dimension, f.attribute);
    }
  }
  return slice;
}

namespace {

QuerySpec slice_as_spec(const RequiredSlice& slice) {
  QuerySpec spec;
  spec.fact = slice.fact;
  spec.filters = slice.pushed_filters;
  spec.freshness = slice.freshness;
  return spec;
}

}  // namespace

TempTable QueryEngine::jim_image(const RequiredSlice& slice,
                                 const storage::Snapshot& snap) const {
  CompiledQuery comp = compile_spec(schema_, dims_, slice_as_spec(slice));
  TempTable tmp;
  tmp.epoch = snap.epoch;
  if (slice.freshness == Freshness::AsOfHistorical) return tmp;
  const storage::FactVisible& vis = snap.fact(slice.fact);
  auto take = [&](const FactRow& r) {
    ++tmp.rows_scanned;
    tmp.max_load_seen = std::max(tmp.max_load_seen, r.load_time);
    if (comp.row_passes(r)) tmp.rows.push_back(r);
  };
  vis.realtime.for_each(take);
  if (slice.freshness == Freshness::RealTime) vis.cache.for_each(take);
  return tmp;
}

CacheResident QueryEngine::reverse_jim_load(const RequiredSlice& slice,
                                            const storage::Snapshot& snap) const {
  CompiledQuery comp = compile_spec(schema_, dims_, slice_as_spec(slice));
  CacheResident res;
  const storage::FactVisible& vis = snap.fact(slice.fact);
  for (const auto& seg : *vis.segments) {
    for (const auto& r : seg->rows) {
      ++res.rows_scanned;
      res.max_load_seen = std::max(res.max_load_seen, r.load_time);
      if (comp.row_passes(r)) res.rows.push_back(r);
    }
  }
  // Reserve once the slice size is known; the reservation frees on destruction.
  res.reservation = wh_.reserve_scratch(res.rows.size());
  return res;
}

ResultSet QueryEngine::run_route(const storage::Snapshot& snap, const QuerySpec& spec,
                                 const CompiledQuery& comp, Route route) const {
  ScanAccum acc;
  const storage::FactVisible& vis = snap.fact(spec.fact);
  const bool include_rt = spec.freshness != Freshness::AsOfHistorical;
  const bool include_cache = spec.freshness == Freshness::RealTime;

  switch (route) {
    case Route::Direct: {
      for (const auto& seg : *vis.segments) {
        for (const auto& r : seg->rows) acc.scan(r, comp);
      }
      if (include_rt) {
        vis.realtime.for_each([&](const FactRow& r) { acc.scan(r, comp); });
      }
      if (include_cache) {
        vis.cache.for_each([&](const FactRow& r) { acc.scan(r, comp); });
      }
      break;
    }
    case Route::JIM: {
      TempTable tmp = jim_image(jim_analyze(spec), snap);
      acc.scanned += tmp.rows_scanned;
      acc.max_load = std::max(acc.max_load, tmp.max_load_seen);
      for (const auto& r : tmp.rows) acc.add_prefiltered(r, comp);
      for (const auto& seg : *vis.segments) {
        for (const auto& r : seg->rows) acc.scan(r, comp);
      }
      break;
    }
    case Route::ReverseJIM: {
      CacheResident resident = reverse_jim_load(jim_analyze(spec), snap);
      acc.scanned += resident.rows_scanned;
      acc.max_load = std::max(acc.max_load, resident.max_load_seen);
      for (const auto& r : resident.rows) acc.add_prefiltered(r, comp);
      if (include_rt) {
        vis.realtime.for_each([&](const FactRow& r) { acc.scan(r, comp); });
      }
      if (include_cache) {
        vis.cache.for_each([&](const FactRow& r) { acc.scan(r, comp); });
      }
      // resident goes out of scope after aggregation: scratch capacity frees
      break;
    }
  }

  ResultSet rs;
  for (const auto& [d, a] : spec.group_by) rs.key_names.push_back(d + "." + a);
  for (const auto& a : spec.aggregates) {
    std::string n = model::aggregator_name(a.agg);
    for (auto& ch : n) {
      ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    rs.agg_names.push_back(n + "(" + a.measure + ")");
  }
  std::vector<const GroupState*> ordered;
  ordered.reserve(acc.groups.size());
  for (const auto& [k, gs] : acc.groups) ordered.push_back(&gs);
  std::sort(ordered.begin(), ordered.end(),
            [](const GroupState* a, const GroupState* b) {
              for (std::size_t i = 0; i < a->keys.size() && i < b->keys.size(); ++i) {
                int c = compare_values(a->keys[i], b->keys[i]);
                if (c != 0) return c < 0;
              }
              return a->keys.size() < b->keys.size();
            });
  for (const GroupState* gs : ordered) {
    ResultRow row;
    row.keys = gs->keys;
    row.values.reserve(comp.aggs.size());
    for (std::size_t i = 0; i < comp.aggs.size(); ++i) {
      row.values.push_back(gs->partials[i].finalize(comp.aggs[i].agg));
    }
    rs.rows.push_back(std::move(row));
  }
  rs.meta.epoch = snap.epoch;
  rs.meta.route = route;
  rs.meta.rows_scanned = acc.scanned;
  rs.meta.staleness_bound = acc.max_load;
  return rs;
}

ResultSet QueryEngine::execute_on(const storage::Snapshot& snap, const QuerySpec& spec,
                                  std::optional<Route> forced_route) const {
  validate(spec);
  CompiledQuery comp = compile_spec(schema_, dims_, spec);
  const bool planner_chose = !forced_route.has_value();
  Route route = forced_route ? *forced_route : plan_on(snap, spec).route;
  try {
    return run_route(snap, spec, comp, route);
  } catch (const CacheOverflow&) {
    // The estimate said the slice fits but the cache filled since: replan to
    // JIM, the safe direction. Forced routes propagate the overflow.
    if (route == Route::ReverseJIM && planner_chose) {
      return run_route(snap, spec, comp, Route::JIM);
    }
    throw;
  }
}

ResultSet QueryEngine::execute(const QuerySpec& spec) {
  return execute(spec, std::nullopt);
}

ResultSet QueryEngine::execute(const QuerySpec& spec,
                               std::optional<Route> forced_route) {
  auto adm = wh_.admit_query(spec.fact);
  storage::Snapshot snap = wh_.open_snapshot();
  std::string memo_key;
  if (opts_.result_memo && !forced_route) {
    memo_key = spec.fact + "|" + format_query(spec);
    std::lock_guard lk(memo_mu_);
    auto it = memo_.find(memo_key);
    if (it != memo_.end()) {
      // A memo hit is only legal at the current epoch; historical-only
      // queries may additionally ride across real-time-only epoch bumps.
      const bool hit =
          spec.freshness == Freshness::AsOfHistorical
              ? it->second.hist_version == snap.fact(spec.fact).hist_version
              : it->second.epoch == snap.epoch;
      if (hit) {
        ResultSet rs = it->second.result;
        rs.meta.from_memo = true;
        rs.meta.wait_seconds = adm.wait_seconds;
        return rs;
      }
    }
  }
  ResultSet rs = execute_on(snap, spec, forced_route);
  rs.meta.wait_seconds = adm.wait_seconds;
  if (opts_.result_memo && !forced_route) {
    std::lock_guard lk(memo_mu_);
    memo_[memo_key] = MemoEntry{snap.epoch, snap.fact(spec.fact).hist_version, rs};
  }
  return rs;
}

void QueryEngine::invalidate_result_cache(Epoch epoch) {
  std::lock_guard lk(memo_mu_);
  for (auto it = memo_.begin(); it != memo_.end();) {
    if (it->second.epoch < epoch) {
      it = memo_.erase(it);
    } else {
      ++it;
    }
  }
}

std::size_t QueryEngine::memo_size() const {
  std::lock_guard lk(memo_mu_);
  return memo_.size();
}

}  // namespace rtdw::query
