#include "rtdw/loader.hpp"

#include <algorithm>
#include <cmath>

#include "rtdw/errors.hpp"

namespace rtdw::etl {

LoadStrategy LoadStrategy::batch(Tick interval) {
  LoadStrategy s;
  s.kind = Kind::Batch;
  s.interval = interval;
  return s;
}

LoadStrategy LoadStrategy::micro_batch(Tick interval) {
  LoadStrategy s;
  s.kind = Kind::MicroBatch;
  s.interval = interval;
  return s;
}

LoadStrategy LoadStrategy::trickle_direct() {
  LoadStrategy s;
  s.kind = Kind::TrickleDirect;
  return s;
}

LoadStrategy LoadStrategy::trickle_and_flip(Tick cycle, bool consolidate_daily) {
  LoadStrategy s;
  s.kind = Kind::TrickleAndFlip;
  s.cycle = cycle;
  s.consolidate_daily = consolidate_daily;
  return s;
}

LoadStrategy LoadStrategy::cache_routed(Tick drain_interval) {
  LoadStrategy s;
  s.kind = Kind::CacheRouted;
  s.drain_interval = drain_interval;
  return s;
}

std::string LoadStrategy::name() const {
  switch (kind) {
    case Kind::Batch: return "batch(" + std::to_string(interval) + ")";
    case Kind::MicroBatch: return "micro_batch(" + std::to_string(interval) + ")";
    case Kind::TrickleDirect: return "trickle";
    case Kind::TrickleAndFlip: return "trickle_and_flip(" + std::to_string(cycle) + ")";
    case Kind::CacheRouted: return "cache_routed(" + std::to_string(drain_interval) + ")";
  }
  return "?";
}

void LoadStrategy::validate() const {
  switch (kind) {
    case Kind::Batch:
    case Kind::MicroBatch:
      if (interval <= 0) throw ConfigError(name() + ": interval must be positive");
      break;
    case Kind::TrickleAndFlip:
      if (cycle <= 0) throw ConfigError(name() + ": cycle must be positive");
      break;
    case Kind::CacheRouted:
      if (drain_interval <= 0) {
        throw ConfigError(name() + ": drain interval must be positive");
      }
      break;
    case Kind::TrickleDirect: break;
  }
}

double LoaderStats::mean_freshness() const {
  if (freshness_samples.empty()) return 0;
  double sum = 0;
  for (Tick t : freshness_samples) sum += static_cast<double>(t);
  return sum / static_cast<double>(freshness_samples.size());
}

Tick LoaderStats::p95_freshness() const {
  if (freshness_samples.empty()) return 0;
  std::vector<Tick> s = freshness_samples;
  std::sort(s.begin(), s.end());
  return s[std::min(s.size() - 1, static_cast<std::size_t>(
                                      std::ceil(0.95 * static_cast<double>(s.size())) - 1))];
}

Tick LoaderStats::max_freshness() const {
  Tick mx = 0;
  for (Tick t : freshness_samples) mx = std::max(mx, t);
  return mx;
}

Loader::Loader(storage::Warehouse& wh, std::string fact, LoadStrategy strategy,
               const Clock& clock)
    : wh_(wh), fact_(std::move(fact)), strategy_(strategy), clock_(clock) {
  strategy_.validate();
  if (strategy_.kind == LoadStrategy::Kind::CacheRouted && !wh_.cache_configured()) {
    throw CacheNotConfigured(fact_ + ": cache_routed strategy needs a cache");
  }
}

void Loader::start() {
  if (started_) return;
  started_ = true;
  if (strategy_.kind == LoadStrategy::Kind::TrickleAndFlip) {
    wh_.begin_staging_cycle(fact_, clock_.now());
  }
}

void Loader::flush_buffer() {
  if (buffer_.empty()) return;
  std::vector<FactRow> batch;
  batch.swap(buffer_);
  wh_.load_batch(fact_, std::move(batch));
  ++stats_.batches;
}

void Loader::drain_cache_to_history(Tick upto) {
  std::vector<FactRow> drained = wh_.cache_drain(fact_, upto);
  if (!drained.empty()) {
    wh_.load_batch(fact_, std::move(drained));
    ++stats_.batches;
  }
}

void Loader::ingest(FactRow row) {
  row.load_time = clock_.now();  // the engine ingests the row now
  ++stats_.rows;
  switch (strategy_.kind) {
    case LoadStrategy::Kind::Batch:
    case LoadStrategy::Kind::MicroBatch:
      buffer_.push_back(std::move(row));
      break;
    case LoadStrategy::Kind::TrickleDirect:
      wh_.trickle_insert(fact_, std::move(row));
      break;
    case LoadStrategy::Kind::TrickleAndFlip:
      wh_.stage_insert(fact_, std::move(row));
      break;
    case LoadStrategy::Kind::CacheRouted: {
      try {
        wh_.cache_insert(fact_, row);
      } catch (const CacheOverflow&) {
        ++stats_.cache_overflows;
        // drain-and-retry once, then reject the row with a counted stat
        drain_cache_to_history(clock_.now());
        try {
          wh_.cache_insert(fact_, std::move(row));
        } catch (const CacheOverflow&) {
          ++stats_.rejected;
          --stats_.rows;
        }
      }
      break;
    }
  }
}

void Loader::on_tick(Tick t) {
  switch (strategy_.kind) {
    case LoadStrategy::Kind::Batch:
    case LoadStrategy::Kind::MicroBatch:
      if (t > 0 && t % strategy_.interval == 0) flush_buffer();
      break;
    case LoadStrategy::Kind::TrickleDirect:
      break;
    case LoadStrategy::Kind::TrickleAndFlip:
      if (t > 0 && t % strategy_.cycle == 0) {
        storage::FlipReport rep = wh_.flip(fact_, t);
        ++stats_.flips;
        stats_.flip_pauses.push_back(rep.pause_seconds);
      }
      if (strategy_.consolidate_daily && t > 0 &&
          t % wh_.options().ticks_per_day == 0) {
        wh_.consolidate(fact_, t);
      }
      break;
    case LoadStrategy::Kind::CacheRouted:
      if (t > 0 && t % strategy_.drain_interval == 0) drain_cache_to_history(t);
      break;
  }
  const Tick visible = std::max<Tick>(wh_.max_visible_load_time(fact_), 0);
  stats_.freshness_samples.push_back(t - visible);
}

void Loader::finish(Tick t) {
  switch (strategy_.kind) {
    case LoadStrategy::Kind::Batch:
    case LoadStrategy::Kind::MicroBatch:
      flush_buffer();
      break;
    case LoadStrategy::Kind::TrickleDirect:
      break;
    case LoadStrategy::Kind::TrickleAndFlip:
      if (wh_.staging_size(fact_) > 0) {
        storage::FlipReport rep = wh_.flip(fact_, t);
        ++stats_.flips;
        stats_.flip_pauses.push_back(rep.pause_seconds);
      }
      break;
    case LoadStrategy::Kind::CacheRouted:
      drain_cache_to_history(t);
      break;
  }
}

LoaderStats run_loader(storage::Warehouse& wh, const std::string& fact,
                       const LoadStrategy& strategy, std::vector<TimedRow> stream,
                       SimulatedClock& clock, Tick run_until) {
  std::stable_sort(stream.begin(), stream.end(),
                   [](const TimedRow& a, const TimedRow& b) { return a.arrival < b.arrival; });
  Loader loader(wh, fact, strategy, clock);
  loader.start();
  std::size_t next = 0;
  for (Tick t = clock.now(); t <= run_until; ++t) {
    clock.advance_to(t);
    while (next < stream.size() && stream[next].arrival <= t) {
      loader.ingest(std::move(stream[next].row));
      ++next;
    }
    loader.on_tick(t);
  }
  loader.finish(run_until);
  return loader.stats();
}

}  // namespace rtdw::etl
