#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rtdw/schema.hpp"
#include "rtdw/types.hpp"

namespace rtdw::storage {

enum class SegmentOrigin : std::uint8_t { BatchLoad = 0, Flip = 1, Consolidation = 2 };

const char* segment_origin_name(SegmentOrigin o);

// Immutable after sealing. The engine never creates empty segments.
struct Segment {
  std::uint64_t id = 0;
  SegmentOrigin origin = SegmentOrigin::BatchLoad;
  std::vector<FactRow> rows;
  Tick min_event_time = kTickMax;
  Tick max_event_time = kTickMin;
  Tick max_load_time = kTickMin;
};

using SegmentPtr = std::shared_ptr<const Segment>;
using SegmentList = std::vector<SegmentPtr>;

// Chunked append-only row collection. Appends never move existing rows, so a
// (chunks, count) pair is a stable snapshot. Removal (drain/consolidation)
// republishes a fresh chunk list; existing views keep the old one.
class RowLog {
 public:
  static constexpr std::size_t kChunkRows = 4096;

  struct Chunk {
    Chunk() : rows(new FactRow[kChunkRows]) {}
    std::unique_ptr<FactRow[]> rows;
  };
  using ChunkList = std::vector<std::shared_ptr<Chunk>>;

  RowLog() : chunks_(std::make_shared<ChunkList>()) {}

  void append(FactRow row);
  void rebuild(std::vector<FactRow> kept);
  std::size_t size() const { return size_; }
  std::shared_ptr<const ChunkList> chunks() const { return chunks_; }

 private:
  std::shared_ptr<const ChunkList> chunks_;
  std::size_t size_ = 0;
};

struct RowLogView {
  std::shared_ptr<const RowLog::ChunkList> chunks;
  std::size_t count = 0;

  std::size_t size() const { return count; }

  template <typename F>
  void for_each(F&& f) const {
    std::size_t remaining = count;
    for (const auto& ch : *chunks) {
      const std::size_t n = std::min(remaining, RowLog::kChunkRows);
      for (std::size_t i = 0; i < n; ++i) f(ch->rows[i]);
      remaining -= n;
      if (remaining == 0) break;
    }
  }
};

// Frozen per-fact visible set: sealed segments, the real-time partition and
// the external cache as of one epoch.
struct FactVisible {
  std::shared_ptr<const SegmentList> segments;
  RowLogView realtime;
  RowLogView cache;
  std::uint64_t hist_version = 0;
};

struct Snapshot {
  Epoch epoch = 0;
  std::vector<std::pair<std::string, FactVisible>> visible;

  const FactVisible& fact(const std::string& name) const;
};

struct FlipReport {
  std::size_t rows_moved = 0;
  double pause_seconds = 0;
  Epoch epoch = 0;
  std::uint64_t segment_id = 0;  // 0 when no rows moved
};

struct ConsolidateReport {
  std::uint64_t segment_id = 0;  // 0 when nothing moved
  std::size_t rows_moved = 0;
  Epoch epoch = 0;
};

enum class WalOp : std::uint8_t {
  BatchLoad = 1,
  Trickle = 2,
  Flip = 3,
  Consolidate = 4,
  Retention = 5,
  CacheInsert = 6,
  CacheDrain = 7,
};

struct WarehouseOptions {
  std::size_t cache_capacity = 0;  // 0 = external cache not configured
  std::string wal_path;            // empty = write-ahead log disabled
  Tick ticks_per_day = 1440;       // retention: duration_days * ticks_per_day
};

class WalWriter;

// Epoch-versioned physical store for all fact tables in one schema:
// immutable historical segments, an append-only real-time partition, flip
// staging tables and the in-memory external real-time data cache. One
// logical writer per fact table (mutations are serialized internally),
// arbitrarily many concurrent snapshot readers.
class Warehouse {
 public:
  Warehouse(const model::SchemaDef& schema, WarehouseOptions opts = {});
  ~Warehouse();

  Warehouse(const Warehouse&) = delete;
  Warehouse& operator=(const Warehouse&) = delete;

  // --- ingestion ---
  // Seals rows into a new segment. Empty input is a no-op (epoch unchanged).
  Epoch load_batch(const std::string& fact, std::vector<FactRow> rows);
  Epoch trickle_insert(const std::string& fact, FactRow row);

  void begin_staging_cycle(const std::string& fact, Tick cycle_start);
  bool staging_cycle_open(const std::string& fact) const;
  std::size_t staging_size(const std::string& fact) const;
  void stage_insert(const std::string& fact, FactRow row);
  // Atomically publishes staged rows as a Flip segment, truncates staging and
  // starts a new cycle. Blocks new query admissions for the duration.
  FlipReport flip(const std::string& fact, Tick next_cycle_start);

  Epoch cache_insert(const std::string& fact, FactRow row);
  std::vector<FactRow> cache_drain(const std::string& fact, Tick upto);

  // Re-homes real-time partition + cache rows with event_time < older_than
  // into a Consolidation segment. Visible row multiset is unchanged.
  ConsolidateReport consolidate(const std::string& fact, Tick older_than);

  // Drops historical segments wholly older than now - duration. Returns rows
  // dropped; partially covered segments are kept.
  std::size_t enforce_retention(const std::string& fact, Tick now);

  // --- snapshots ---
  Snapshot open_snapshot() const;
  void release_snapshot(Snapshot& s) const { s.visible.clear(); }

  // --- query admission (flip pause gate) ---
  struct Admission {
    double wait_seconds = 0;
    std::uint64_t sequence = 0;
  };
  // Blocks while a flip pause is in effect. Waiters are admitted in the
  // schema's query-priority order, then arrival order.
  Admission admit_query(const std::string& fact);
  // The admission gate flip() uses; nestable across fact tables.
  void pause_admissions();
  void resume_admissions();

  // --- ReverseJIM scratch space in the external cache ---
  class ScratchReservation {
   public:
    ScratchReservation() = default;
    ScratchReservation(Warehouse* wh, std::size_t rows) : wh_(wh), rows_(rows) {}
    ScratchReservation(ScratchReservation&& o) noexcept { *this = std::move(o); }
    ScratchReservation& operator=(ScratchReservation&& o) noexcept;
    ~ScratchReservation() { release(); }
    void release();
    std::size_t rows() const { return rows_; }

   private:
    Warehouse* wh_ = nullptr;
    std::size_t rows_ = 0;
  };
  // Throws CacheOverflow when rows exceed free capacity.
  ScratchReservation reserve_scratch(std::size_t rows);

  // --- introspection ---
  Epoch epoch() const;
  // Bumped whenever a fact's segment list changes; lets historical-only
  // results stay cached across real-time-only epochs.
  std::uint64_t historical_version(const std::string& fact) const;
  Tick max_visible_load_time(const std::string& fact) const;
  std::size_t cache_size(const std::string& fact) const;
  std::size_t cache_used_total() const;
  std::size_t cache_free() const;
  std::size_t cache_capacity() const { return opts_.cache_capacity; }
  bool cache_configured() const { return opts_.cache_capacity > 0; }
  std::size_t segment_count(const std::string& fact) const;

  const model::SchemaDef& schema() const { return schema_; }
  const WarehouseOptions& options() const { return opts_; }

  // Commit notifications (fired after the commit, outside internal locks).
  using CommitObserver = std::function<void(const std::string& fact, Epoch, WalOp)>;
  void register_commit_observer(CommitObserver obs);

  void wal_flush();
  void set_wal_enabled(bool enabled);

 private:
  struct FactState {
    const model::FactTableDef* def = nullptr;
    std::shared_ptr<const SegmentList> segments;
    RowLog realtime;
    std::optional<Epoch> realtime_epoch_created;
    RowLog cache;
    std::optional<Tick> staging_cycle_start;
    std::vector<FactRow> staging;
    std::uint64_t hist_version = 0;
    Tick max_visible_load = kTickMin;
  };

  FactState& state(const std::string& fact);
  const FactState& state(const std::string& fact) const;
  void check_row(const FactState& fs, const FactRow& row) const;
  SegmentPtr seal_segment(std::vector<FactRow> rows, SegmentOrigin origin);
  void publish_segment(FactState& fs, SegmentPtr seg);
  void log_commit(Epoch epoch, WalOp op, const std::string& fact,
                  std::int64_t param, const std::vector<FactRow>& rows,
                  const FactState& fs);
  void notify(const std::string& fact, Epoch epoch, WalOp op);

  model::SchemaDef schema_;
  WarehouseOptions opts_;

  mutable std::mutex mu_;
  std::map<std::string, FactState> facts_;
  Epoch epoch_ = 0;
  std::uint64_t next_segment_id_ = 1;
  std::size_t cache_resident_total_ = 0;
  std::size_t scratch_reserved_ = 0;
  std::unique_ptr<WalWriter> wal_;
  bool wal_enabled_ = false;

  // Flip pause gate.
  mutable std::mutex adm_mu_;
  mutable std::condition_variable adm_cv_;
  int pause_count_ = 0;
  std::uint64_t adm_arrival_ = 0;
  std::uint64_t adm_sequence_ = 0;
  std::set<std::pair<int, std::uint64_t>> adm_waiters_;

  std::vector<CommitObserver> observers_;
  mutable std::mutex obs_mu_;
};

}  // namespace rtdw::storage
