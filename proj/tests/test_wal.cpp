#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>

#include "rtdw/errors.hpp"
#include "rtdw/schema.hpp"
#include "rtdw/storage.hpp"
#include "rtdw/wal.hpp"

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
  f.measures = {{"m", model::Aggregator::Sum, false, ""},
                {"n", model::Aggregator::Sum, false, ""}};
  f.duration_days = 30;
  schema.fact_tables = {f};
  return schema;
}

FactRow row(double m, double n, Tick event, Tick load) {
  FactRow r;
  r.dim_keys = {1};
  r.measures = {m, n};
  r.event_time = event;
  r.load_time = load;
  return r;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<std::pair<Tick, double>> visible_multiset(const Warehouse& wh,
                                                      const std::string& fact) {
  std::vector<std::pair<Tick, double>> out;
  Snapshot snap = wh.open_snapshot();
  const FactVisible& vis = snap.fact(fact);
  for (const auto& seg : *vis.segments) {
    for (const auto& r : seg->rows) out.emplace_back(r.event_time, r.measures[0]);
  }
  vis.realtime.for_each(
      [&](const FactRow& r) { out.emplace_back(r.event_time, r.measures[0]); });
  vis.cache.for_each(
      [&](const FactRow& r) { out.emplace_back(r.event_time, r.measures[0]); });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("wal record encode/decode round-trip is bit-exact") {
  const std::string path = temp_path("rtdw_wal_roundtrip.wal");
  {
    WalWriter writer(path);
    WalRecord rec;
    rec.epoch = 42;
    rec.op = WalOp::BatchLoad;
    rec.fact = "facts";
    rec.param = -7;
    rec.dim_count = 1;
    rec.measure_count = 2;
    rec.rows = {row(1.5, -2.25, 10, 11), row(3, 4, -5, 6)};
    writer.append(rec);
    WalRecord empty;
    empty.epoch = 43;
    empty.op = WalOp::Flip;
    empty.fact = "facts";
    empty.param = 99;
    empty.dim_count = 1;
    empty.measure_count = 2;
    writer.append(empty);
    writer.flush();
  }
  WalReader reader(path);
  auto first = reader.next();
  REQUIRE(first.has_value());
  CHECK(first->epoch == 42);
  CHECK(first->op == WalOp::BatchLoad);
  CHECK(first->fact == "facts");
  CHECK(first->param == -7);
  REQUIRE(first->rows.size() == 2);
  CHECK(first->rows[0].measures[1] == -2.25);
  CHECK(first->rows[1].event_time == -5);
  auto second = reader.next();
  REQUIRE(second.has_value());
  CHECK(second->op == WalOp::Flip);
  CHECK(second->param == 99);
  CHECK(second->rows.empty());
  CHECK_FALSE(reader.next().has_value());
  std::remove(path.c_str());
}

TEST_CASE("truncated wal raises WalCorrupt") {
  const std::string path = temp_path("rtdw_wal_trunc.wal");
  {
    WalWriter writer(path);
    WalRecord rec;
    rec.epoch = 1;
    rec.op = WalOp::Trickle;
    rec.fact = "facts";
    rec.dim_count = 1;
    rec.measure_count = 2;
    rec.rows = {row(1, 2, 3, 4)};
    writer.append(rec);
    writer.flush();
  }
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  WalReader reader(path);
  CHECK_THROWS_AS(reader.next(), WalCorrupt);
  std::remove(path.c_str());
}

TEST_CASE("replay reproduces epochs and visible sets for random op sequences") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const std::string path =
        temp_path("rtdw_wal_replay_" + std::to_string(trial) + ".wal");
    WarehouseOptions opts;
    opts.cache_capacity = 200;
    opts.wal_path = path;
    opts.ticks_per_day = 1;
    model::SchemaDef schema = tiny_schema();
    {
      Warehouse original(schema, opts);
      original.begin_staging_cycle("facts", 0);
      Tick t = 1;
      for (int i = 0; i < 200; ++i) {
        const double m = static_cast<double>(rng() % 1000);
        switch (rng() % 8) {
          case 0:
          case 1:
            original.trickle_insert("facts", row(m, m + 1, t, t));
            break;
          case 2: {
            std::vector<FactRow> batch;
            const int n = 1 + static_cast<int>(rng() % 5);
            for (int k = 0; k < n; ++k) batch.push_back(row(m + k, m, t - k, t));
            original.load_batch("facts", std::move(batch));
            break;
          }
          case 3:
            original.stage_insert("facts", row(m, m, t, t));
            break;
          case 4:
            original.flip("facts", t);
            break;
          case 5:
            if (original.cache_free() > 0) {
              original.cache_insert("facts", row(m, m, t, t));
            }
            break;
          case 6:
            original.cache_drain("facts", t - static_cast<Tick>(rng() % 5));
            break;
          default:
            original.consolidate("facts", t - static_cast<Tick>(rng() % 10));
            break;
        }
        t += static_cast<Tick>(rng() % 3);
      }
      original.enforce_retention("facts", t);
      original.wal_flush();

      Warehouse replayed(schema,
                         WarehouseOptions{opts.cache_capacity, "", opts.ticks_per_day});
      replay_wal(path, replayed);
      CHECK(replayed.epoch() == original.epoch());
      CHECK(visible_multiset(replayed, "facts") == visible_multiset(original, "facts"));
      CHECK(replayed.segment_count("facts") == original.segment_count("facts"));
      CHECK(replayed.cache_size("facts") == original.cache_size("facts"));
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("replay epoch divergence is detected") {
  const std::string path = temp_path("rtdw_wal_diverge.wal");
  {
    WalWriter writer(path);
    WalRecord rec;
    rec.epoch = 5;  // a fresh warehouse commits this at epoch 1
    rec.op = WalOp::Trickle;
    rec.fact = "facts";
    rec.dim_count = 1;
    rec.measure_count = 2;
    rec.rows = {row(1, 2, 3, 4)};
    writer.append(rec);
    writer.flush();
  }
  Warehouse wh(tiny_schema());
  CHECK_THROWS_AS(replay_wal(path, wh), WalCorrupt);
  std::remove(path.c_str());
}
