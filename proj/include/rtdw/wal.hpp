#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "rtdw/storage.hpp"
#include "rtdw/types.hpp"

namespace rtdw::storage {

// One committed mutation batch. Binary layout (little-endian, length-prefixed):
//   u32 body_len | body
//   body = u64 epoch | u8 op | u16 fact_len | fact bytes | i64 param
//        | u16 dim_count | u16 measure_count | u32 row_count | rows
//   row  = dim_count x u64 dim keys | measure_count x f64 measures
//        | i64 event_time | i64 load_time
// param carries the op argument: flip -> next cycle start, consolidate ->
// older_than, retention -> now, cache drain -> upto; 0 otherwise.
struct WalRecord {
  Epoch epoch = 0;
  WalOp op = WalOp::BatchLoad;
  std::string fact;
  std::int64_t param = 0;
  std::uint16_t dim_count = 0;
  std::uint16_t measure_count = 0;
  std::vector<FactRow> rows;
};

class WalWriter {
 public:
  explicit WalWriter(const std::string& path);  // truncates; UnwritableOutput
  void append(const WalRecord& rec);
  void flush();

 private:
  std::ofstream out_;
  std::string path_;
};

class WalReader {
 public:
  explicit WalReader(const std::string& path);  // SourceUnreadable
  std::optional<WalRecord> next();              // WalCorrupt on torn records

 private:
  std::ifstream in_;
  std::string path_;
};

// Re-applies a log into a fresh warehouse (which must have logging disabled
// or routed elsewhere). Returns the number of records applied. Throws
// WalCorrupt if a replayed commit lands on a different epoch than recorded.
std::size_t replay_wal(const std::string& path, Warehouse& wh);

}  // namespace rtdw::storage
