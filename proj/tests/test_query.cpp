#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rtdw/engine.hpp"
#include "rtdw/errors.hpp"
#include "rtdw/oracle.hpp"
#include "rtdw/query_text.hpp"

using namespace rtdw;
using namespace rtdw::query;

namespace {

model::SchemaDef sales_schema() {
  model::SchemaDef schema;
  model::DimensionDef store;
  store.name = "store";
  store.attributes = {{"code", ScalarKind::Text}, {"region", ScalarKind::Text}};
  store.natural_key = "code";
  model::DimensionDef item;
  item.name = "item";
  item.attributes = {{"sku", ScalarKind::Text}, {"category", ScalarKind::Text}};
  item.natural_key = "sku";
  schema.dimensions = {store, item};

  model::FactTableDef sales;
  sales.name = "sales";
  sales.grain = {"store", "item"};
  sales.measures = {{"amount", model::Aggregator::Sum, false, ""},
                    {"units", model::Aggregator::Sum, false, ""}};
  sales.duration_days = 365;
  schema.fact_tables = {sales};
  schema.query_priorities = {"sales"};
  return schema;
}

struct Fixture {
  Engine engine;
  std::mt19937_64 rng{11};

  Fixture(std::size_t cache_capacity = 10000)
      : engine(sales_schema(), EngineOptions{cache_capacity, "", 1440, false}) {
    auto& store = engine.dimensions().at("store");
    auto& item = engine.dimensions().at("item");
    const char* regions[] = {"north", "south", "east"};
    for (int i = 0; i < 6; ++i) {
      store.apply_scd_update(Value(std::string("S") + std::to_string(i)),
                             {{"region", Value(std::string(regions[i % 3]))}}, 0);
    }
    const char* cats[] = {"food", "tools"};
    for (int i = 0; i < 4; ++i) {
      item.apply_scd_update(Value(std::string("I") + std::to_string(i)),
                            {{"category", Value(std::string(cats[i % 2]))}}, 0);
    }
  }

  FactRow make_row(double amount, Tick event, Tick load) {
    FactRow r;
    r.dim_keys = {
        engine.dimensions().at("store").resolve_surrogate(
            Value(std::string("S") + std::to_string(rng() % 6)), event),
        engine.dimensions().at("item").resolve_surrogate(
            Value(std::string("I") + std::to_string(rng() % 4)), event)};
    r.measures = {amount, static_cast<double>(1 + rng() % 3)};
    r.event_time = event;
    r.load_time = load;
    return r;
  }

  void scatter_rows(int hist, int rt, int cache) {
    std::vector<FactRow> batch;
    for (int i = 0; i < hist; ++i) {
      batch.push_back(make_row(static_cast<double>(rng() % 100), 10 + i % 50, 10 + i % 50));
    }
    engine.warehouse().load_batch("sales", std::move(batch));
    for (int i = 0; i < rt; ++i) {
      engine.warehouse().trickle_insert(
          "sales", make_row(static_cast<double>(rng() % 100), 100 + i % 50, 100 + i % 50));
    }
    for (int i = 0; i < cache; ++i) {
      engine.warehouse().cache_insert(
          "sales", make_row(static_cast<double>(rng() % 100), 150 + i % 50, 150 + i % 50));
    }
  }

  QuerySpec sum_query(Freshness f = Freshness::RealTime) {
    QuerySpec spec;
    spec.fact = "sales";
    spec.aggregates = {{"amount", model::Aggregator::Sum}};
    spec.freshness = f;
    return spec;
  }
};

}  // namespace

TEST_CASE("parser: full grammar round-trips through format_query") {
  auto schema = sales_schema();
  const std::string text =
      "SUM(amount), AVG(units) BY store.region "
      "WHERE event_time >= 10, item.category = \"food\", "
      "store.code IN (\"S1\", \"S2\"), event_time BETWEEN 1 AND 500 "
      "FRESHNESS NearRealTime";
  QuerySpec spec = parse_query(text, schema);
  CHECK(spec.fact == "sales");
  REQUIRE(spec.aggregates.size() == 2);
  CHECK(spec.aggregates[1].agg == model::Aggregator::Avg);
  REQUIRE(spec.group_by.size() == 1);
  CHECK(spec.group_by[0] == std::pair<std::string, std::string>("store", "region"));
  REQUIRE(spec.filters.size() == 4);
  CHECK(spec.filters[0].on_event_time);
  CHECK(spec.filters[0].op == PredOp::Ge);
  CHECK(spec.filters[2].op == PredOp::InSet);
  CHECK(spec.filters[3].op == PredOp::Between);
  CHECK(spec.freshness == Freshness::NearRealTime);

  QuerySpec again = parse_query(format_query(spec), schema);
  CHECK(format_query(again) == format_query(spec));
}

TEST_CASE("parser: errors are specific") {
  auto schema = sales_schema();
  CHECK_THROWS_AS(parse_query("amount", schema), ParseError);
  CHECK_THROWS_AS(parse_query("SUM(ghost)", schema), UnknownMeasure);
  CHECK_THROWS_AS(parse_query("SUM(amount) BY event_time", schema), ParseError);
  CHECK_THROWS_AS(parse_query("SUM(amount) WHERE store.code <> 3", schema), ParseError);
  CHECK_THROWS_AS(parse_query("SUM(amount) FRESHNESS Sometimes", schema), ParseError);
}

TEST_CASE("plan: freshness AsOfHistorical always routes Direct") {
  Fixture fx;
  fx.scatter_rows(50, 100, 0);
  MergePlan p = fx.engine.queries().plan(fx.sum_query(Freshness::AsOfHistorical));
  CHECK(p.route == Route::Direct);
}

TEST_CASE("plan: small real-time side picks JIM") {
  Fixture fx;
  fx.scatter_rows(1000, 10, 0);
  MergePlan p = fx.engine.queries().plan(fx.sum_query());
  CHECK(p.route == Route::JIM);
  CHECK(p.estimated_rt_rows == 10);
  CHECK(p.estimated_hist_rows == 1000);
}

TEST_CASE("plan: small historical side picks ReverseJIM when it fits the cache") {
  Fixture fx(/*cache_capacity=*/10000);
  fx.scatter_rows(100, 2000, 0);
  MergePlan p = fx.engine.queries().plan(fx.sum_query());
  CHECK(p.route == Route::ReverseJIM);
  CHECK_FALSE(p.overflow_avoided);
}

TEST_CASE("plan: would-overflow falls back to JIM with the avoidance flag") {
  Fixture fx(/*cache_capacity=*/1500);
  fx.scatter_rows(100, 0, 1400);  // cache nearly full; free = 100
  // historical estimate 100 <= free 100 would fit; add rows to exceed
  fx.engine.warehouse().load_batch("sales", [&] {
    std::vector<FactRow> rows;
    for (int i = 0; i < 200; ++i) rows.push_back(fx.make_row(1, 20, 20));
    return rows;
  }());
  MergePlan p = fx.engine.queries().plan(fx.sum_query());
  CHECK(p.estimated_hist_rows == 300);
  CHECK(p.estimated_rt_rows == 1400);
  CHECK(p.route == Route::JIM);
  CHECK(p.overflow_avoided);
}

TEST_CASE("plan: event_time filters narrow the estimates") {
  Fixture fx;
  fx.scatter_rows(200, 100, 0);  // hist events at 10..59, rt at 100..149
  QuerySpec spec = fx.sum_query();
  FilterPred f;
  f.on_event_time = true;
  f.op = PredOp::Ge;
  f.lo = Value(std::int64_t{100});
  spec.filters = {f};
  MergePlan p = fx.engine.queries().plan(spec);
  CHECK(p.estimated_hist_rows == 0);  // segment range [10,59] misses
  CHECK(p.estimated_rt_rows == 100);
}

TEST_CASE("jim_analyze: slice carries exactly the needed pieces") {
  Fixture fx;
  QuerySpec spec = parse_query(
      "SUM(amount) BY store.region WHERE event_time > 5, item.category = \"food\"",
      fx.engine.schema());
  RequiredSlice slice = fx.engine.queries().jim_analyze(spec);
  CHECK(slice.fact == "sales");
  CHECK(slice.pushed_filters.size() == 2);
  CHECK(slice.measure_indices == std::vector<int>{0});
  CHECK(slice.event_time_needed);
  REQUIRE(slice.attributes.size() == 2);
  CHECK(slice.attributes[0] == std::pair<std::string, std::string>("store", "region"));
  CHECK(slice.attributes[1] == std::pair<std::string, std::string>("item", "category"));

  // no filters: full projection
  QuerySpec all = fx.sum_query();
  RequiredSlice full = fx.engine.queries().jim_analyze(all);
  CHECK(full.pushed_filters.empty());
  CHECK_FALSE(full.event_time_needed);
}

TEST_CASE("jim_image: snapshot immutability and determinism") {
  Fixture fx;
  fx.scatter_rows(0, 2, 0);
  storage::Snapshot snap = fx.engine.warehouse().open_snapshot();
  RequiredSlice slice = fx.engine.queries().jim_analyze(fx.sum_query());
  TempTable t1 = fx.engine.queries().jim_image(slice, snap);
  CHECK(t1.rows.size() == 2);

  fx.engine.warehouse().trickle_insert("sales", fx.make_row(9, 500, 500));
  TempTable t2 = fx.engine.queries().jim_image(slice, snap);
  CHECK(t2.rows.size() == 2);  // concurrent ingestion does not alter the image
  REQUIRE(t1.rows.size() == t2.rows.size());
  for (std::size_t i = 0; i < t1.rows.size(); ++i) {
    CHECK(t1.rows[i].measures[0] == t2.rows[i].measures[0]);
  }

  // empty real-time side -> empty image
  Fixture empty;
  storage::Snapshot esnap = empty.engine.warehouse().open_snapshot();
  CHECK(empty.engine.queries()
            .jim_image(empty.engine.queries().jim_analyze(empty.sum_query()), esnap)
            .rows.empty());
}

TEST_CASE("reverse_jim_load: loads within capacity, overflows beyond, frees after") {
  Fixture fx(/*cache_capacity=*/100);
  std::vector<FactRow> rows;
  for (int i = 0; i < 50; ++i) rows.push_back(fx.make_row(1, 10, 10));
  fx.engine.warehouse().load_batch("sales", std::move(rows));
  storage::Snapshot snap = fx.engine.warehouse().open_snapshot();
  RequiredSlice slice = fx.engine.queries().jim_analyze(fx.sum_query());
  {
    CacheResident res = fx.engine.queries().reverse_jim_load(slice, snap);
    CHECK(res.rows.size() == 50);
    CHECK(fx.engine.warehouse().cache_free() == 50);
  }
  CHECK(fx.engine.warehouse().cache_free() == 100);  // restored on completion

  std::vector<FactRow> more;
  for (int i = 0; i < 80; ++i) more.push_back(fx.make_row(1, 10, 10));
  fx.engine.warehouse().load_batch("sales", std::move(more));
  storage::Snapshot snap2 = fx.engine.warehouse().open_snapshot();
  CHECK_THROWS_AS(fx.engine.queries().reverse_jim_load(slice, snap2), CacheOverflow);
  CHECK(fx.engine.warehouse().cache_free() == 100);
}

TEST_CASE("execute: union arithmetic over historical + real-time") {
  Fixture fx;
  FactRow a = fx.make_row(1, 10, 10);
  FactRow b = fx.make_row(2, 11, 11);
  FactRow c = fx.make_row(3, 12, 12);
  fx.engine.warehouse().load_batch("sales", {a, b});
  fx.engine.warehouse().trickle_insert("sales", c);

  ResultSet rt = fx.engine.queries().execute(fx.sum_query(Freshness::RealTime));
  REQUIRE(rt.rows.size() == 1);
  CHECK(rt.rows[0].values[0] == 6);

  ResultSet hist = fx.engine.queries().execute(fx.sum_query(Freshness::AsOfHistorical));
  CHECK(hist.rows[0].values[0] == 3);
}

TEST_CASE("execute: NearRealTime excludes the external cache") {
  Fixture fx;
  fx.engine.warehouse().trickle_insert("sales", fx.make_row(5, 10, 10));
  fx.engine.warehouse().cache_insert("sales", fx.make_row(7, 11, 11));
  CHECK(*fx.engine.queries().execute(fx.sum_query(Freshness::RealTime)).scalar() == 12);
  CHECK(*fx.engine.queries().execute(fx.sum_query(Freshness::NearRealTime)).scalar() == 5);
}

TEST_CASE("execute on an empty store returns empty groups") {
  Fixture fx;
  ResultSet rs = fx.engine.queries().execute(fx.sum_query());
  CHECK(rs.rows.empty());
  CHECK_FALSE(rs.scalar().has_value());
}

TEST_CASE("property: all three routes agree with the oracle") {
  std::mt19937_64 seed_rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    Fixture fx(/*cache_capacity=*/50000);
    fx.rng.seed(seed_rng());
    fx.scatter_rows(static_cast<int>(seed_rng() % 400),
                    static_cast<int>(seed_rng() % 400),
                    static_cast<int>(seed_rng() % 200));

    for (int q = 0; q < 12; ++q) {
      QuerySpec spec;
      spec.fact = "sales";
      spec.freshness = q % 3 == 0 ? Freshness::NearRealTime : Freshness::RealTime;
      spec.aggregates = {{"amount", model::Aggregator::Sum},
                         {"amount", model::Aggregator::Count},
                         {"units", model::Aggregator::Min},
                         {"units", model::Aggregator::Max},
                         {"amount", model::Aggregator::Avg}};
      if (q % 2 == 0) spec.group_by = {{"store", "region"}};
      if (q % 4 == 1) spec.group_by = {{"store", "region"}, {"item", "category"}};
      if (q % 3 == 1) {
        FilterPred f;
        f.on_event_time = true;
        f.op = PredOp::Between;
        f.lo = Value(std::int64_t{20});
        f.hi = Value(std::int64_t{160});
        spec.filters.push_back(f);
      }
      if (q % 5 == 2) {
        FilterPred f;
        f.dimension = "item";
        f.attribute = "category";
        f.op = PredOp::Eq;
        f.lo = Value(std::string("food"));
        spec.filters.push_back(f);
      }

      storage::Snapshot snap = fx.engine.warehouse().open_snapshot();
      ResultSet expected = harness::oracle_aggregate(
          harness::snapshot_rows(snap, "sales", spec.freshness), spec,
          fx.engine.schema(), fx.engine.dimensions());
      for (Route route : {Route::Direct, Route::JIM, Route::ReverseJIM}) {
        ResultSet actual = fx.engine.queries().execute_on(snap, spec, route);
        std::string why;
        const bool ok = harness::results_equal(actual, expected, spec, 1e-9, &why);
        CHECK_MESSAGE(ok, route_name(route), ": ", why);
      }
    }
  }
}

TEST_CASE("snapshot stability: same epoch replays bit-identical results") {
  Fixture fx;
  fx.scatter_rows(100, 50, 20);
  QuerySpec spec = parse_query("SUM(amount), AVG(amount) BY store.region",
                               fx.engine.schema());
  storage::Snapshot snap = fx.engine.warehouse().open_snapshot();
  ResultSet a = fx.engine.queries().execute_on(snap, spec);
  fx.engine.warehouse().trickle_insert("sales", fx.make_row(1, 1, 1));
  ResultSet b = fx.engine.queries().execute_on(snap, spec);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    for (std::size_t v = 0; v < a.rows[i].values.size(); ++v) {
      CHECK(a.rows[i].values[v] == b.rows[i].values[v]);  // bit-identical
    }
  }
}

TEST_CASE("staleness bound covers every visible row") {
  Fixture fx;
  fx.engine.warehouse().load_batch("sales", {fx.make_row(1, 10, 17)});
  fx.engine.warehouse().trickle_insert("sales", fx.make_row(2, 11, 23));
  QuerySpec spec = fx.sum_query();
  FilterPred f;  // filter excludes the fresher row from the result, not the bound
  f.on_event_time = true;
  f.op = PredOp::Le;
  f.lo = Value(std::int64_t{10});
  spec.filters = {f};
  ResultSet rs = fx.engine.queries().execute(spec);
  CHECK(rs.meta.staleness_bound == 23);
  ResultSet hist = fx.engine.queries().execute(fx.sum_query(Freshness::AsOfHistorical));
  CHECK(hist.meta.staleness_bound == 17);
}

TEST_CASE("aggregate mergeability: partitioned stores merge to the direct totals") {
  Fixture fx(/*cache_capacity=*/10000);
  std::mt19937_64 rng(3);
  std::vector<FactRow> all;
  for (int i = 0; i < 300; ++i) {
    all.push_back(fx.make_row(static_cast<double>(rng() % 50), 10 + i % 40, 10 + i % 40));
  }
  // partition the same multiset three ways across the stores
  std::vector<FactRow> hist(all.begin(), all.begin() + 100);
  fx.engine.warehouse().load_batch("sales", hist);
  for (int i = 100; i < 200; ++i) fx.engine.warehouse().trickle_insert("sales", all[static_cast<std::size_t>(i)]);
  for (int i = 200; i < 300; ++i) fx.engine.warehouse().cache_insert("sales", all[static_cast<std::size_t>(i)]);

  QuerySpec spec = parse_query("SUM(amount), COUNT(amount), MIN(amount), MAX(amount), AVG(amount) BY item.category",
                               fx.engine.schema());
  storage::Snapshot snap = fx.engine.warehouse().open_snapshot();
  ResultSet merged = fx.engine.queries().execute_on(snap, spec);
  ResultSet oracle = harness::oracle_aggregate(all, spec, fx.engine.schema(),
                                               fx.engine.dimensions());
  std::string why;
  CHECK_MESSAGE(harness::results_equal(merged, oracle, spec, 1e-9, &why), why);
}

TEST_CASE("result memo: stale epochs recompute, fresh epochs hit") {
  Engine engine(sales_schema(), EngineOptions{0, "", 1440, /*result_memo=*/true});
  auto& store = engine.dimensions().at("store");
  store.apply_scd_update(Value(std::string("S0")), {{"region", Value(std::string("north"))}}, 0);
  auto& item = engine.dimensions().at("item");
  item.apply_scd_update(Value(std::string("I0")), {{"category", Value(std::string("food"))}}, 0);
  FactRow r;
  r.dim_keys = {store.resolve_surrogate(Value(std::string("S0")), 1),
                item.resolve_surrogate(Value(std::string("I0")), 1)};
  r.measures = {5, 1};
  r.event_time = 1;
  r.load_time = 1;
  engine.warehouse().trickle_insert("sales", r);

  QuerySpec spec = parse_query("SUM(amount)", engine.schema());
  ResultSet first = engine.queries().execute(spec);
  CHECK_FALSE(first.meta.from_memo);
  ResultSet second = engine.queries().execute(spec);
  CHECK(second.meta.from_memo);  // no intervening write
  CHECK(*second.scalar() == 5);

  engine.warehouse().trickle_insert("sales", r);  // epoch bump
  ResultSet third = engine.queries().execute(spec);
  CHECK_FALSE(third.meta.from_memo);  // stale memo not returned
  CHECK(*third.scalar() == 10);

  // historical-only queries ride across real-time-only epoch bumps
  QuerySpec hist = spec;
  hist.freshness = Freshness::AsOfHistorical;
  engine.warehouse().load_batch("sales", {r});
  ResultSet h1 = engine.queries().execute(hist);
  CHECK_FALSE(h1.meta.from_memo);
  engine.warehouse().trickle_insert("sales", r);  // rt-only change
  ResultSet h2 = engine.queries().execute(hist);
  CHECK(h2.meta.from_memo);
  engine.warehouse().load_batch("sales", {r});  // historical change
  ResultSet h3 = engine.queries().execute(hist);
  CHECK_FALSE(h3.meta.from_memo);

  engine.queries().invalidate_result_cache(engine.warehouse().epoch() + 1);
  CHECK(engine.queries().memo_size() == 0);
}

TEST_CASE("validate: unknown names raise specific errors") {
  Fixture fx;
  QuerySpec spec = fx.sum_query();
  spec.fact = "ghost";
  CHECK_THROWS_AS(fx.engine.queries().execute(spec), UnknownFact);
  spec = fx.sum_query();
  spec.aggregates[0].measure = "ghost";
  CHECK_THROWS_AS(fx.engine.queries().execute(spec), UnknownMeasure);
  spec = fx.sum_query();
  spec.group_by = {{"store", "ghost"}};
  CHECK_THROWS_AS(fx.engine.queries().execute(spec), UnknownAttribute);
}
