#pragma once

#include <string>
#include <vector>

#include "rtdw/clock.hpp"
#include "rtdw/storage.hpp"
#include "rtdw/types.hpp"

namespace rtdw::etl {

// The five ingestion strategies: the batch/micro-batch frequency-escalation
// ladder, continuous trickle, trickle-and-flip through staging tables, and
// routing through the external real-time data cache.
struct LoadStrategy {
  enum class Kind { Batch, MicroBatch, TrickleDirect, TrickleAndFlip, CacheRouted };
  Kind kind = Kind::TrickleDirect;
  Tick interval = 0;        // Batch / MicroBatch flush period
  Tick cycle = 0;           // TrickleAndFlip flip cycle
  bool consolidate_daily = false;
  Tick drain_interval = 0;  // CacheRouted migration period

  static LoadStrategy batch(Tick interval);
  static LoadStrategy micro_batch(Tick interval);
  static LoadStrategy trickle_direct();
  static LoadStrategy trickle_and_flip(Tick cycle, bool consolidate_daily = false);
  static LoadStrategy cache_routed(Tick drain_interval);

  std::string name() const;
  void validate() const;  // ConfigError on nonpositive intervals
};

struct TimedRow {
  Tick arrival = 0;
  FactRow row;
};

struct LoaderStats {
  std::uint64_t rows = 0;
  std::uint64_t batches = 0;
  std::uint64_t flips = 0;
  std::uint64_t cache_overflows = 0;
  std::uint64_t rejected = 0;
  std::vector<double> flip_pauses;       // seconds
  std::vector<Tick> freshness_samples;   // lag sampled once per tick

  double mean_freshness() const;
  Tick p95_freshness() const;
  Tick max_freshness() const;
};

// Drives one fact table with one strategy. The caller owns the tick loop:
// ingest() every arriving row, then on_tick() once per tick (boundary work +
// freshness sample), then finish() when the stream ends.
class Loader {
 public:
  Loader(storage::Warehouse& wh, std::string fact, LoadStrategy strategy,
         const Clock& clock);

  void start();
  void ingest(FactRow row);
  void on_tick(Tick t);
  void finish(Tick t);
  const LoaderStats& stats() const { return stats_; }
  const LoadStrategy& strategy() const { return strategy_; }

 private:
  void flush_buffer();
  void drain_cache_to_history(Tick upto);

  storage::Warehouse& wh_;
  std::string fact_;
  LoadStrategy strategy_;
  const Clock& clock_;
  std::vector<FactRow> buffer_;  // Batch / MicroBatch
  LoaderStats stats_;
  bool started_ = false;
};

// Convenience driver over a pre-transformed stream under a simulated clock:
// advances the clock tick by tick, feeds arrivals, performs a final
// flush/flip/drain, and samples freshness lag each tick.
LoaderStats run_loader(storage::Warehouse& wh, const std::string& fact,
                       const LoadStrategy& strategy, std::vector<TimedRow> stream,
                       SimulatedClock& clock, Tick run_until);

}  // namespace rtdw::etl
