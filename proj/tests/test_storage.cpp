#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <thread>

#include "rtdw/errors.hpp"
#include "rtdw/schema.hpp"
#include "rtdw/storage.hpp"

using namespace rtdw;
using namespace rtdw::storage;

namespace {

model::SchemaDef tiny_schema() {
  model::SchemaDef schema;
  model::DimensionDef d;
  d.name = "k";
  d.attributes = {{"id", ScalarKind::Integer}};
  d.natural_key = "id";
  schema.dimensions = {d};
  model::FactTableDef f;
  f.name = "facts";
  f.grain = {"k"};
  f.measures = {{"m", model::Aggregator::Sum, false, ""}};
  f.duration_days = 30;
  schema.fact_tables = {f};
  schema.query_priorities = {"facts"};
  return schema;
}

FactRow row(double m, Tick event, Tick load = 0) {
  FactRow r;
  r.dim_keys = {1};
  r.measures = {m};
  r.event_time = event;
  r.load_time = load == 0 ? event : load;
  return r;
}

std::vector<double> visible_measures(const Snapshot& snap, const std::string& fact) {
  std::vector<double> out;
  const FactVisible& vis = snap.fact(fact);
  for (const auto& seg : *vis.segments) {
    for (const auto& r : seg->rows) out.push_back(r.measures[0]);
  }
  vis.realtime.for_each([&](const FactRow& r) { out.push_back(r.measures[0]); });
  vis.cache.for_each([&](const FactRow& r) { out.push_back(r.measures[0]); });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("load_batch seals a segment and bumps the epoch once") {
  Warehouse wh(tiny_schema());
  CHECK(wh.epoch() == 0);
  Epoch e = wh.load_batch("facts", {row(1, 10), row(2, 20), row(3, 15)});
  CHECK(e == 1);
  Snapshot snap = wh.open_snapshot();
  REQUIRE(snap.fact("facts").segments->size() == 1);
  const Segment& seg = *snap.fact("facts").segments->front();
  CHECK(seg.rows.size() == 3);
  CHECK(seg.min_event_time == 10);
  CHECK(seg.max_event_time == 20);
  CHECK(seg.origin == SegmentOrigin::BatchLoad);
}

TEST_CASE("empty batch load is a no-op: no segment, no epoch bump") {
  Warehouse wh(tiny_schema());
  Epoch e = wh.load_batch("facts", {});
  CHECK(e == 0);
  CHECK(wh.open_snapshot().fact("facts").segments->empty());
}

TEST_CASE("schema mismatch rejected on every ingestion path") {
  Warehouse wh(tiny_schema());
  FactRow bad;
  bad.dim_keys = {1, 2};
  bad.measures = {1.0};
  CHECK_THROWS_AS(wh.load_batch("facts", {bad}), SchemaMismatch);
  CHECK_THROWS_AS(wh.trickle_insert("facts", bad), SchemaMismatch);
  wh.begin_staging_cycle("facts", 0);
  CHECK_THROWS_AS(wh.stage_insert("facts", bad), SchemaMismatch);
  CHECK_THROWS_AS(wh.load_batch("ghost", {row(1, 1)}), UnknownFact);
}

TEST_CASE("trickle_insert visibility follows snapshot open order") {
  Warehouse wh(tiny_schema());
  Snapshot before = wh.open_snapshot();
  wh.trickle_insert("facts", row(7, 5));
  Snapshot after = wh.open_snapshot();
  CHECK(before.fact("facts").realtime.size() == 0);
  CHECK(after.fact("facts").realtime.size() == 1);
  CHECK(after.epoch == before.epoch + 1);
}

TEST_CASE("two snapshots around one insert differ by exactly that row") {
  Warehouse wh(tiny_schema());
  wh.trickle_insert("facts", row(1, 1));
  Snapshot a = wh.open_snapshot();
  wh.trickle_insert("facts", row(2, 2));
  Snapshot b = wh.open_snapshot();
  auto va = visible_measures(a, "facts");
  auto vb = visible_measures(b, "facts");
  REQUIRE(va.size() + 1 == vb.size());
  CHECK(std::includes(vb.begin(), vb.end(), va.begin(), va.end()));
}

TEST_CASE("interleaved snapshots equal prefixes of the insert log") {
  // log-prefix oracle: snapshot i must see exactly rows 1..i
  Warehouse wh(tiny_schema());
  std::vector<Snapshot> snaps;
  snaps.push_back(wh.open_snapshot());
  for (int i = 1; i <= 100; ++i) {
    wh.trickle_insert("facts", row(i, i));
    snaps.push_back(wh.open_snapshot());
  }
  for (int i = 0; i <= 100; ++i) {
    auto vis = visible_measures(snaps[static_cast<std::size_t>(i)], "facts");
    REQUIRE(vis.size() == static_cast<std::size_t>(i));
    for (int k = 0; k < i; ++k) CHECK(vis[static_cast<std::size_t>(k)] == k + 1);
  }
}

TEST_CASE("sequential trickle inserts: monotone epochs, counted partition") {
  Warehouse wh(tiny_schema());
  Epoch prev = wh.epoch();
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    Epoch e = wh.trickle_insert("facts", row(i, i));
    CHECK(e == prev + 1);
    prev = e;
  }
  CHECK(wh.open_snapshot().fact("facts").realtime.size() == static_cast<std::size_t>(n));
}

TEST_CASE("staging: invisible until flip; stage without a cycle is an error") {
  Warehouse wh(tiny_schema());
  CHECK_THROWS_AS(wh.stage_insert("facts", row(1, 1)), NoActiveStagingCycle);
  CHECK_THROWS_AS(wh.flip("facts", 10), NoActiveStagingCycle);

  wh.begin_staging_cycle("facts", 0);
  wh.stage_insert("facts", row(1, 1));
  wh.stage_insert("facts", row(2, 2));
  CHECK(visible_measures(wh.open_snapshot(), "facts").empty());

  FlipReport rep = wh.flip("facts", 10);
  CHECK(rep.rows_moved == 2);
  CHECK(rep.epoch == 1);
  auto vis = visible_measures(wh.open_snapshot(), "facts");
  CHECK(vis == std::vector<double>{1, 2});
  CHECK(wh.staging_size("facts") == 0);
  CHECK(wh.staging_cycle_open("facts"));
}

TEST_CASE("flip moves staged rows next to existing visible rows") {
  Warehouse wh(tiny_schema());
  wh.load_batch("facts", {row(0, 0)});
  wh.begin_staging_cycle("facts", 0);
  wh.stage_insert("facts", row(1, 1));
  wh.stage_insert("facts", row(2, 2));
  wh.flip("facts", 5);
  CHECK(visible_measures(wh.open_snapshot(), "facts") == std::vector<double>{0, 1, 2});
}

TEST_CASE("empty flip still bumps the epoch and restarts the cycle") {
  Warehouse wh(tiny_schema());
  wh.begin_staging_cycle("facts", 0);
  Epoch before = wh.epoch();
  FlipReport rep = wh.flip("facts", 5);
  CHECK(rep.rows_moved == 0);
  CHECK(rep.epoch == before + 1);
  CHECK(rep.segment_id == 0);
  CHECK(wh.open_snapshot().fact("facts").segments->empty());
  CHECK(wh.staging_cycle_open("facts"));
}

TEST_CASE("cache: capacity enforced, drain removes by load_time") {
  WarehouseOptions opts;
  opts.cache_capacity = 2;
  Warehouse wh(tiny_schema(), opts);
  wh.cache_insert("facts", row(1, 1, 1));
  wh.cache_insert("facts", row(2, 2, 2));
  CHECK_THROWS_AS(wh.cache_insert("facts", row(3, 3, 3)), CacheOverflow);
  CHECK(wh.cache_size("facts") == 2);

  auto removed = wh.cache_drain("facts", 1);
  CHECK(removed.size() == 1);
  CHECK(removed[0].measures[0] == 1);
  CHECK(wh.cache_size("facts") == 1);
  CHECK(wh.cache_free() == 1);

  // drain of an empty window removes nothing
  CHECK(wh.cache_drain("facts", 1).empty());
  auto rest = wh.cache_drain("facts", 99);
  CHECK(rest.size() == 1);
  CHECK(wh.cache_drain("facts", 99).empty());
}

TEST_CASE("cache drain of three rows by load_time bound") {
  WarehouseOptions opts;
  opts.cache_capacity = 10;
  Warehouse wh(tiny_schema(), opts);
  for (Tick t = 1; t <= 3; ++t) wh.cache_insert("facts", row(t, t, t));
  auto removed = wh.cache_drain("facts", 2);
  CHECK(removed.size() == 2);
  CHECK(wh.cache_size("facts") == 1);
}

TEST_CASE("cache unconfigured is an error") {
  Warehouse wh(tiny_schema());
  CHECK_THROWS_AS(wh.cache_insert("facts", row(1, 1)), CacheNotConfigured);
}

TEST_CASE("cache snapshot views are stable across drain") {
  WarehouseOptions opts;
  opts.cache_capacity = 8;
  Warehouse wh(tiny_schema(), opts);
  for (Tick t = 1; t <= 4; ++t) wh.cache_insert("facts", row(t, t, t));
  Snapshot snap = wh.open_snapshot();
  wh.cache_drain("facts", 2);
  CHECK(snap.fact("facts").cache.size() == 4);  // old view unchanged
  CHECK(wh.open_snapshot().fact("facts").cache.size() == 2);
}

TEST_CASE("scratch reservation blocks and restores free capacity") {
  WarehouseOptions opts;
  opts.cache_capacity = 100;
  Warehouse wh(tiny_schema(), opts);
  wh.cache_insert("facts", row(1, 1));
  {
    auto res = wh.reserve_scratch(50);
    CHECK(wh.cache_free() == 49);
    CHECK_THROWS_AS(wh.reserve_scratch(50), CacheOverflow);
  }
  CHECK(wh.cache_free() == 99);
}

TEST_CASE("consolidate re-homes old real-time rows and preserves the multiset") {
  WarehouseOptions opts;
  opts.cache_capacity = 10;
  Warehouse wh(tiny_schema(), opts);
  wh.trickle_insert("facts", row(1, 1));
  wh.trickle_insert("facts", row(5, 5));
  wh.cache_insert("facts", row(2, 2));

  auto before = visible_measures(wh.open_snapshot(), "facts");
  ConsolidateReport rep = wh.consolidate("facts", 3);
  CHECK(rep.rows_moved == 2);  // event_time 1 (rt) and 2 (cache)
  auto after_snap = wh.open_snapshot();
  CHECK(visible_measures(after_snap, "facts") == before);
  CHECK(after_snap.fact("facts").realtime.size() == 1);
  CHECK(after_snap.fact("facts").cache.size() == 0);
  REQUIRE(after_snap.fact("facts").segments->size() == 1);
  CHECK(after_snap.fact("facts").segments->front()->origin ==
        SegmentOrigin::Consolidation);

  // idempotent for the same bound
  ConsolidateReport again = wh.consolidate("facts", 3);
  CHECK(again.rows_moved == 0);
  CHECK(again.segment_id == 0);
  CHECK(visible_measures(wh.open_snapshot(), "facts") == before);
}

TEST_CASE("property: consolidate preserves the visible multiset on random workloads") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    WarehouseOptions opts;
    opts.cache_capacity = 1000;
    Warehouse wh(tiny_schema(), opts);
    for (int i = 0; i < 300; ++i) {
      const Tick t = static_cast<Tick>(rng() % 100);
      const double m = static_cast<double>(rng() % 1000);
      switch (rng() % 3) {
        case 0: wh.trickle_insert("facts", row(m, t)); break;
        case 1: wh.cache_insert("facts", row(m, t)); break;
        default: wh.load_batch("facts", {row(m, t)}); break;
      }
    }
    auto before = visible_measures(wh.open_snapshot(), "facts");
    wh.consolidate("facts", static_cast<Tick>(rng() % 120));
    CHECK(visible_measures(wh.open_snapshot(), "facts") == before);
  }
}

TEST_CASE("retention drops only wholly-aged segments") {
  WarehouseOptions opts;
  opts.ticks_per_day = 1;  // duration_days = 30 ticks
  Warehouse wh(tiny_schema(), opts);
  const Tick now = 100;
  wh.load_batch("facts", {row(1, 40), row(1, 60)});   // [40,60] vs cutoff 70 -> drop
  wh.load_batch("facts", {row(2, 60), row(2, 80)});   // [60,80] partially covered -> keep
  wh.load_batch("facts", {row(3, 90)});               // fresh -> keep
  std::size_t dropped = wh.enforce_retention("facts", now);
  CHECK(dropped == 2);
  CHECK(wh.segment_count("facts") == 2);

  // empty store: nothing to drop, no epoch bump
  Warehouse fresh(tiny_schema(), opts);
  CHECK(fresh.enforce_retention("facts", now) == 0);
  CHECK(fresh.epoch() == 0);
}

TEST_CASE("concurrent batch loads both commit with distinct epochs") {
  Warehouse wh(tiny_schema());
  std::thread a([&] {
    for (int i = 0; i < 50; ++i) wh.load_batch("facts", {row(1, i)});
  });
  std::thread b([&] {
    for (int i = 0; i < 50; ++i) wh.load_batch("facts", {row(2, i)});
  });
  a.join();
  b.join();
  CHECK(wh.epoch() == 100);
  auto vis = visible_measures(wh.open_snapshot(), "facts");
  CHECK(vis.size() == 100);
  CHECK(std::count(vis.begin(), vis.end(), 1.0) == 50);
  CHECK(std::count(vis.begin(), vis.end(), 2.0) == 50);
}

TEST_CASE("flip atomicity: no snapshot sees a proper nonempty subset of a batch") {
  Warehouse wh(tiny_schema());
  wh.begin_staging_cycle("facts", 0);
  std::atomic<bool> stop{false};
  std::atomic<int> violations{0};
  std::thread reader([&] {
    while (!stop.load(std::memory_order_relaxed)) {
      Snapshot snap = wh.open_snapshot();
      std::map<double, int> per_flip;
      const FactVisible& vis = snap.fact("facts");
      for (const auto& seg : *vis.segments) {
        for (const auto& r : seg->rows) per_flip[r.measures[0]]++;
      }
      vis.realtime.for_each([&](const FactRow& r) { per_flip[r.measures[0]]++; });
      for (const auto& [flip_id, count] : per_flip) {
        if (count != 5) violations.fetch_add(1);
      }
    }
  });
  for (int flip = 0; flip < 500; ++flip) {
    for (int i = 0; i < 5; ++i) {
      wh.stage_insert("facts", row(flip, flip * 10 + i));
    }
    wh.flip("facts", flip);
  }
  stop.store(true);
  reader.join();
  CHECK(violations.load() == 0);
}

TEST_CASE("query admission waits out a pause and releases by priority order") {
  model::SchemaDef schema = tiny_schema();
  model::FactTableDef second = schema.fact_tables[0];
  second.name = "other";
  schema.fact_tables.push_back(second);
  schema.dimensions[0].conformed = true;
  schema.query_priorities = {"other", "facts"};  // "other" admits first
  Warehouse wh(schema);

  // no pause in effect: admission is immediate
  auto adm = wh.admit_query("facts");
  CHECK(adm.wait_seconds < 0.5);

  wh.pause_admissions();
  std::atomic<std::uint64_t> seq_facts{0}, seq_other{0};
  std::atomic<int> queued{0};
  std::thread q1([&] {
    queued.fetch_add(1);
    auto a = wh.admit_query("facts");
    seq_facts = a.sequence;
    CHECK(a.wait_seconds > 0.0);
  });
  std::thread q2([&] {
    queued.fetch_add(1);
    seq_other = wh.admit_query("other").sequence;
  });
  while (queued.load() < 2) std::this_thread::yield();
  std::this_thread::sleep_for(std::chrono::milliseconds(20));  // both parked
  wh.resume_admissions();
  q1.join();
  q2.join();
  CHECK(seq_other < seq_facts);  // priority list rank wins over arrival
}

TEST_CASE("non-volatility: row log views never change under later appends") {
  Warehouse wh(tiny_schema());
  wh.trickle_insert("facts", row(1, 1));
  Snapshot snap = wh.open_snapshot();
  for (int i = 0; i < 10000; ++i) wh.trickle_insert("facts", row(i, i));
  CHECK(snap.fact("facts").realtime.size() == 1);
  std::vector<double> vis = visible_measures(snap, "facts");
  CHECK(vis == std::vector<double>{1});
}

TEST_CASE("cache bound holds under concurrent insert and drain") {
  WarehouseOptions opts;
  opts.cache_capacity = 64;
  Warehouse wh(tiny_schema(), opts);
  std::atomic<bool> stop{false};
  std::atomic<std::uint64_t> bound_violations{0};
  std::thread checker([&] {
    while (!stop.load(std::memory_order_relaxed)) {
      if (wh.cache_used_total() > opts.cache_capacity) bound_violations.fetch_add(1);
      Snapshot snap = wh.open_snapshot();
      if (snap.fact("facts").cache.size() > opts.cache_capacity) {
        bound_violations.fetch_add(1);
      }
    }
  });
  std::thread drainer([&] {
    for (int i = 0; i < 400; ++i) {
      wh.cache_drain("facts", i * 5);
      std::this_thread::yield();
    }
  });
  for (Tick t = 1; t <= 2000; ++t) {
    try {
      wh.cache_insert("facts", row(1, t, t));
    } catch (const CacheOverflow&) {
      wh.cache_drain("facts", t);
    }
  }
  stop.store(true);
  checker.join();
  drainer.join();
  CHECK(bound_violations.load() == 0);
  CHECK(wh.cache_used_total() <= opts.cache_capacity);
}

TEST_CASE("release_snapshot drops the pinned visible sets") {
  Warehouse wh(tiny_schema());
  wh.trickle_insert("facts", row(1, 1));
  Snapshot snap = wh.open_snapshot();
  CHECK(snap.visible.size() == 1);
  wh.release_snapshot(snap);
  CHECK(snap.visible.empty());
}

TEST_CASE("max_visible_load_time tracks committed rows only") {
  Warehouse wh(tiny_schema());
  CHECK(wh.max_visible_load_time("facts") == kTickMin);
  wh.begin_staging_cycle("facts", 0);
  wh.stage_insert("facts", row(1, 1, 50));
  CHECK(wh.max_visible_load_time("facts") == kTickMin);  // staged: not visible
  wh.flip("facts", 1);
  CHECK(wh.max_visible_load_time("facts") == 50);
}
