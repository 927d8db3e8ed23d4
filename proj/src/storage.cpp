#include "rtdw/storage.hpp"

#include <algorithm>
#include <chrono>

#include "rtdw/errors.hpp"
#include "rtdw/wal.hpp"

namespace rtdw::storage {

const char* segment_origin_name(SegmentOrigin o) {
  switch (o) {
    case SegmentOrigin::BatchLoad: return "batch";
    case SegmentOrigin::Flip: return "flip";
    case SegmentOrigin::Consolidation: return "consolidation";
  }
  return "unknown";
}

void RowLog::append(FactRow row) {
  const std::size_t fill = size_ % kChunkRows;
  if (fill == 0) {
    auto next = std::make_shared<ChunkList>(*chunks_);
    next->push_back(std::make_shared<Chunk>());
    chunks_ = std::move(next);
  }
  (*chunks_->back()).rows[fill] = std::move(row);
  ++size_;
}

void RowLog::rebuild(std::vector<FactRow> kept) {
  auto next = std::make_shared<ChunkList>();
  std::size_t i = 0;
  while (i < kept.size()) {
    auto chunk = std::make_shared<Chunk>();
    const std::size_t n = std::min(kChunkRows, kept.size() - i);
    for (std::size_t j = 0; j < n; ++j) chunk->rows[j] = std::move(kept[i + j]);
    next->push_back(std::move(chunk));
    i += n;
  }
  chunks_ = std::move(next);
  size_ = kept.size();
}

const FactVisible& Snapshot::fact(const std::string& name) const {
  for (const auto& [fname, vis] : visible) {
    if (fname == name) return vis;
  }
  throw UnknownFact(name);
}

Warehouse::Warehouse(const model::SchemaDef& schema, WarehouseOptions opts)
    : schema_(schema), opts_(std::move(opts)) {
  for (const auto& f : schema_.fact_tables) {
    FactState fs;
    fs.def = schema_.find_fact(f.name);
    fs.segments = std::make_shared<const SegmentList>();
    facts_.emplace(f.name, std::move(fs));
  }
  if (!opts_.wal_path.empty()) {
    wal_ = std::make_unique<WalWriter>(opts_.wal_path);
    wal_enabled_ = true;
  }
}

Warehouse::~Warehouse() {
  if (wal_) wal_->flush();
}

Warehouse::FactState& Warehouse::state(const std::string& fact) {
  auto it = facts_.find(fact);
  if (it == facts_.end()) throw UnknownFact(fact);
  return it->second;
}

const Warehouse::FactState& Warehouse::state(const std::string& fact) const {
  auto it = facts_.find(fact);
  if (it == facts_.end()) throw UnknownFact(fact);
  return it->second;
}

void Warehouse::check_row(const FactState& fs, const FactRow& row) const {
  if (row.dim_keys.size() != fs.def->grain.size() ||
      row.measures.size() != fs.def->measures.size()) {
    throw SchemaMismatch(fs.def->name + ": row has " +
                         std::to_string(row.dim_keys.size()) + " keys / " +
                         std::to_string(row.measures.size()) + " measures, schema wants " +
                         std::to_string(fs.def->grain.size()) + " / " +
                         std::to_string(fs.def->measures.size()));
  }
}

SegmentPtr Warehouse::seal_segment(std::vector<FactRow> rows, SegmentOrigin origin) {
  auto seg = std::make_shared<Segment>();
  seg->id = next_segment_id_++;
  seg->origin = origin;
  for (const auto& r : rows) {
    seg->min_event_time = std::min(seg->min_event_time, r.event_time);
    seg->max_event_time = std::max(seg->max_event_time, r.event_time);
    seg->max_load_time = std::max(seg->max_load_time, r.load_time);
  }
  seg->rows = std::move(rows);
  return seg;
}

void Warehouse::publish_segment(FactState& fs, SegmentPtr seg) {
  auto next = std::make_shared<SegmentList>(*fs.segments);
  next->push_back(std::move(seg));
  fs.segments = std::move(next);
  fs.hist_version++;
}

void Warehouse::log_commit(Epoch epoch, WalOp op, const std::string& fact,
                           std::int64_t param, const std::vector<FactRow>& rows,
                           const FactState& fs) {
  if (!wal_ || !wal_enabled_) return;
  WalRecord rec;
  rec.epoch = epoch;
  rec.op = op;
  rec.fact = fact;
  rec.param = param;
  rec.dim_count = static_cast<std::uint16_t>(fs.def->grain.size());
  rec.measure_count = static_cast<std::uint16_t>(fs.def->measures.size());
  rec.rows = rows;
  wal_->append(rec);
}

void Warehouse::notify(const std::string& fact, Epoch epoch, WalOp op) {
  std::vector<CommitObserver> obs;
  {
    std::lock_guard lk(obs_mu_);
    obs = observers_;
  }
  for (auto& o : obs) o(fact, epoch, op);
}

Epoch Warehouse::load_batch(const std::string& fact, std::vector<FactRow> rows) {
  Epoch committed;
  {
    std::lock_guard lk(mu_);
    FactState& fs = state(fact);
    if (rows.empty()) return epoch_;  // pure data: no epoch bump
    for (const auto& r : rows) check_row(fs, r);
    for (const auto& r : rows) {
      fs.max_visible_load = std::max(fs.max_visible_load, r.load_time);
    }
    committed = ++epoch_;
    log_commit(committed, WalOp::BatchLoad, fact, 0, rows, fs);
    publish_segment(fs, seal_segment(std::move(rows), SegmentOrigin::BatchLoad));
  }
  notify(fact, committed, WalOp::BatchLoad);
  return committed;
}

Epoch Warehouse::trickle_insert(const std::string& fact, FactRow row) {
  Epoch committed;
  {
    std::lock_guard lk(mu_);
    FactState& fs = state(fact);
    check_row(fs, row);
    fs.max_visible_load = std::max(fs.max_visible_load, row.load_time);
    committed = ++epoch_;
    if (!fs.realtime_epoch_created) fs.realtime_epoch_created = committed;
    log_commit(committed, WalOp::Trickle, fact, 0, {row}, fs);
    fs.realtime.append(std::move(row));
  }
  notify(fact, committed, WalOp::Trickle);
  return committed;
}

void Warehouse::begin_staging_cycle(const std::string& fact, Tick cycle_start) {
  std::lock_guard lk(mu_);
  FactState& fs = state(fact);
  fs.staging_cycle_start = cycle_start;
  fs.staging.clear();
}

bool Warehouse::staging_cycle_open(const std::string& fact) const {
  std::lock_guard lk(mu_);
  return state(fact).staging_cycle_start.has_value();
}

std::size_t Warehouse::staging_size(const std::string& fact) const {
  std::lock_guard lk(mu_);
  return state(fact).staging.size();
}

void Warehouse::stage_insert(const std::string& fact, FactRow row) {
  std::lock_guard lk(mu_);
  FactState& fs = state(fact);
  if (!fs.staging_cycle_start) {
    throw NoActiveStagingCycle(fact);
  }
  check_row(fs, row);
  fs.staging.push_back(std::move(row));  // invisible to snapshots until flip
}

FlipReport Warehouse::flip(const std::string& fact, Tick next_cycle_start) {
  FlipReport report;
  const auto t0 = std::chrono::steady_clock::now();
  pause_admissions();
  Epoch committed;
  {
    std::lock_guard lk(mu_);
    FactState& fs = state(fact);
    if (!fs.staging_cycle_start) {
      resume_admissions();
      throw NoActiveStagingCycle(fact);
    }
    std::vector<FactRow> batch;
    batch.swap(fs.staging);
    fs.staging_cycle_start = next_cycle_start;
    report.rows_moved = batch.size();
    // A flip is a scheduling boundary: the epoch advances even when empty.
    committed = ++epoch_;
    log_commit(committed, WalOp::Flip, fact, next_cycle_start, batch, fs);
    if (!batch.empty()) {
      for (const auto& r : batch) {
        fs.max_visible_load = std::max(fs.max_visible_load, r.load_time);
      }
      SegmentPtr seg = seal_segment(std::move(batch), SegmentOrigin::Flip);
      report.segment_id = seg->id;
      publish_segment(fs, std::move(seg));
    }
  }
  resume_admissions();
  report.pause_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.epoch = committed;
  notify(fact, committed, WalOp::Flip);
  return report;
}

Epoch Warehouse::cache_insert(const std::string& fact, FactRow row) {
  Epoch committed;
  {
    std::lock_guard lk(mu_);
    if (!cache_configured()) throw CacheNotConfigured(fact);
    FactState& fs = state(fact);
    check_row(fs, row);
    if (cache_resident_total_ + scratch_reserved_ >= opts_.cache_capacity) {
      throw CacheOverflow(fact + ": cache at capacity " +
                          std::to_string(opts_.cache_capacity));
    }
    fs.max_visible_load = std::max(fs.max_visible_load, row.load_time);
    committed = ++epoch_;
    log_commit(committed, WalOp::CacheInsert, fact, 0, {row}, fs);
    fs.cache.append(std::move(row));
    ++cache_resident_total_;
  }
  notify(fact, committed, WalOp::CacheInsert);
  return committed;
}

std::vector<FactRow> Warehouse::cache_drain(const std::string& fact, Tick upto) {
  std::vector<FactRow> removed;
  Epoch committed = 0;
  bool mutated = false;
  {
    std::lock_guard lk(mu_);
    if (!cache_configured()) throw CacheNotConfigured(fact);
    FactState& fs = state(fact);
    std::vector<FactRow> kept;
    RowLogView view{fs.cache.chunks(), fs.cache.size()};
    view.for_each([&](const FactRow& r) {
      if (r.load_time <= upto) {
        removed.push_back(r);
      } else {
        kept.push_back(r);
      }
    });
    if (!removed.empty()) {
      mutated = true;
      committed = ++epoch_;
      log_commit(committed, WalOp::CacheDrain, fact, upto, {}, fs);
      fs.cache.rebuild(std::move(kept));
      cache_resident_total_ -= removed.size();
    }
  }
  if (mutated) notify(fact, committed, WalOp::CacheDrain);
  return removed;
}

ConsolidateReport Warehouse::consolidate(const std::string& fact, Tick older_than) {
  ConsolidateReport report;
  bool mutated = false;
  {
    std::lock_guard lk(mu_);
    FactState& fs = state(fact);
    std::vector<FactRow> moved;
    std::vector<FactRow> kept_rt;
    RowLogView rt{fs.realtime.chunks(), fs.realtime.size()};
    rt.for_each([&](const FactRow& r) {
      (r.event_time < older_than ? moved : kept_rt).push_back(r);
    });
    std::vector<FactRow> kept_cache;
    std::size_t cache_moved = 0;
    if (cache_configured()) {
      RowLogView cv{fs.cache.chunks(), fs.cache.size()};
      cv.for_each([&](const FactRow& r) {
        if (r.event_time < older_than) {
          moved.push_back(r);
          ++cache_moved;
        } else {
          kept_cache.push_back(r);
        }
      });
    }
    if (!moved.empty()) {
      mutated = true;
      report.rows_moved = moved.size();
      report.epoch = ++epoch_;
      log_commit(report.epoch, WalOp::Consolidate, fact, older_than, {}, fs);
      fs.realtime.rebuild(std::move(kept_rt));
      if (cache_moved > 0) {
        fs.cache.rebuild(std::move(kept_cache));
        cache_resident_total_ -= cache_moved;
      }
      SegmentPtr seg = seal_segment(std::move(moved), SegmentOrigin::Consolidation);
      report.segment_id = seg->id;
      publish_segment(fs, std::move(seg));
    } else {
      report.epoch = epoch_;
    }
  }
  if (mutated) notify(fact, report.epoch, WalOp::Consolidate);
  return report;
}

std::size_t Warehouse::enforce_retention(const std::string& fact, Tick now) {
  std::size_t dropped_rows = 0;
  Epoch committed = 0;
  bool mutated = false;
  {
    std::lock_guard lk(mu_);
    FactState& fs = state(fact);
    const Tick cutoff = now - fs.def->duration_days * opts_.ticks_per_day;
    auto kept = std::make_shared<SegmentList>();
    for (const auto& seg : *fs.segments) {
      // Coarse-grained: only segments wholly older than the cutoff drop.
      if (seg->max_event_time < cutoff) {
        dropped_rows += seg->rows.size();
      } else {
        kept->push_back(seg);
      }
    }
    if (dropped_rows > 0) {
      mutated = true;
      committed = ++epoch_;
      log_commit(committed, WalOp::Retention, fact, now, {}, fs);
      fs.segments = std::move(kept);
      fs.hist_version++;
    }
  }
  if (mutated) notify(fact, committed, WalOp::Retention);
  return dropped_rows;
}

Snapshot Warehouse::open_snapshot() const {
  Snapshot snap;
  std::lock_guard lk(mu_);
  snap.epoch = epoch_;
  snap.visible.reserve(schema_.fact_tables.size());
  for (const auto& f : schema_.fact_tables) {
    const FactState& fs = facts_.at(f.name);
    FactVisible vis;
    vis.segments = fs.segments;
    vis.realtime = {fs.realtime.chunks(), fs.realtime.size()};
    vis.cache = {fs.cache.chunks(), fs.cache.size()};
    vis.hist_version = fs.hist_version;
    snap.visible.emplace_back(f.name, std::move(vis));
  }
  return snap;
}

Warehouse::Admission Warehouse::admit_query(const std::string& fact) {
  const auto t0 = std::chrono::steady_clock::now();
  Admission adm;
  std::unique_lock lk(adm_mu_);
  if (pause_count_ > 0) {
    const auto key = std::make_pair(schema_.priority_rank(fact), adm_arrival_++);
    adm_waiters_.insert(key);
    adm_cv_.wait(lk, [&] { return pause_count_ == 0 && *adm_waiters_.begin() == key; });
    adm_waiters_.erase(key);
    adm_cv_.notify_all();  // hand off to the next waiter in priority order
  }
  adm.sequence = adm_sequence_++;
  adm.wait_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return adm;
}

void Warehouse::pause_admissions() {
  std::lock_guard lk(adm_mu_);
  ++pause_count_;
}

void Warehouse::resume_admissions() {
  {
    std::lock_guard lk(adm_mu_);
    --pause_count_;
  }
  adm_cv_.notify_all();
}

Warehouse::ScratchReservation& Warehouse::ScratchReservation::operator=(
    ScratchReservation&& o) noexcept {
  release();
  wh_ = o.wh_;
  rows_ = o.rows_;
  o.wh_ = nullptr;
  o.rows_ = 0;
  return *this;
}

void Warehouse::ScratchReservation::release() {
  if (wh_ && rows_ > 0) {
    std::lock_guard lk(wh_->mu_);
    wh_->scratch_reserved_ -= rows_;
  }
  wh_ = nullptr;
  rows_ = 0;
}

Warehouse::ScratchReservation Warehouse::reserve_scratch(std::size_t rows) {
  std::lock_guard lk(mu_);
  if (!cache_configured()) throw CacheNotConfigured("scratch");
  const std::size_t free = opts_.cache_capacity - cache_resident_total_ - scratch_reserved_;
  if (rows > free) {
    throw CacheOverflow("scratch " + std::to_string(rows) + " rows > free " +
                        std::to_string(free));
  }
  scratch_reserved_ += rows;
  return ScratchReservation(this, rows);
}

Epoch Warehouse::epoch() const {
  std::lock_guard lk(mu_);
  return epoch_;
}

std::uint64_t Warehouse::historical_version(const std::string& fact) const {
  std::lock_guard lk(mu_);
  return state(fact).hist_version;
}

Tick Warehouse::max_visible_load_time(const std::string& fact) const {
  std::lock_guard lk(mu_);
  return state(fact).max_visible_load;
}

std::size_t Warehouse::cache_size(const std::string& fact) const {
  std::lock_guard lk(mu_);
  return state(fact).cache.size();
}

std::size_t Warehouse::cache_used_total() const {
  std::lock_guard lk(mu_);
  return cache_resident_total_ + scratch_reserved_;
}

std::size_t Warehouse::cache_free() const {
  std::lock_guard lk(mu_);
  if (!cache_configured()) return 0;
  return opts_.cache_capacity - cache_resident_total_ - scratch_reserved_;
}

std::size_t Warehouse::segment_count(const std::string& fact) const {
  std::lock_guard lk(mu_);
  return state(fact).segments->size();
}

void Warehouse::register_commit_observer(CommitObserver obs) {
  std::lock_guard lk(obs_mu_);
  observers_.push_back(std::move(obs));
}

void Warehouse::wal_flush() {
  std::lock_guard lk(mu_);
  if (wal_) wal_->flush();
}

void Warehouse::set_wal_enabled(bool enabled) {
  std::lock_guard lk(mu_);
  wal_enabled_ = enabled && wal_ != nullptr;
}

}  // namespace rtdw::storage
