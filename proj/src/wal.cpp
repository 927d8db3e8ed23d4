#include "rtdw/wal.hpp"

#include <bit>
#include <cstring>

#include "rtdw/errors.hpp"

namespace rtdw::storage {

namespace {

void put_bytes(std::string& buf, const void* p, std::size_t n) {
  buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_le(std::string& buf, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(u & 0xff);
    u >>= 8;
  }
  put_bytes(buf, bytes, sizeof(T));
}

void put_f64(std::string& buf, double v) {
  put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v));
}

class Cursor {
 public:
  Cursor(const std::string& data) : data_(data) {}

  template <typename T>
  T get_le() {
    static_assert(std::is_integral_v<T>);
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) {
      u = (u << 8) | static_cast<unsigned char>(data_[pos_ + i]);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) throw WalCorrupt("record body truncated");
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};

std::string encode_body(const WalRecord& rec) {
  std::string body;
  put_le<std::uint64_t>(body, rec.epoch);
  put_le<std::uint8_t>(body, static_cast<std::uint8_t>(rec.op));
  put_le<std::uint16_t>(body, static_cast<std::uint16_t>(rec.fact.size()));
  put_bytes(body, rec.fact.data(), rec.fact.size());
  put_le<std::int64_t>(body, rec.param);
  put_le<std::uint16_t>(body, rec.dim_count);
  put_le<std::uint16_t>(body, rec.measure_count);
  put_le<std::uint32_t>(body, static_cast<std::uint32_t>(rec.rows.size()));
  for (const auto& r : rec.rows) {
    for (std::uint16_t i = 0; i < rec.dim_count; ++i) {
      put_le<std::uint64_t>(body, r.dim_keys[i]);
    }
    for (std::uint16_t i = 0; i < rec.measure_count; ++i) {
      put_f64(body, r.measures[i]);
    }
    put_le<std::int64_t>(body, r.event_time);
    put_le<std::int64_t>(body, r.load_time);
  }
  return body;
}

WalRecord decode_body(const std::string& body) {
  Cursor c(body);
  WalRecord rec;
  rec.epoch = c.get_le<std::uint64_t>();
  rec.op = static_cast<WalOp>(c.get_le<std::uint8_t>());
  const auto fact_len = c.get_le<std::uint16_t>();
  rec.fact = c.get_string(fact_len);
  rec.param = c.get_le<std::int64_t>();
  rec.dim_count = c.get_le<std::uint16_t>();
  rec.measure_count = c.get_le<std::uint16_t>();
  const auto row_count = c.get_le<std::uint32_t>();
  rec.rows.reserve(row_count);
  for (std::uint32_t i = 0; i < row_count; ++i) {
    FactRow r;
    r.dim_keys.resize(rec.dim_count);
    for (auto& k : r.dim_keys) k = c.get_le<std::uint64_t>();
    r.measures.resize(rec.measure_count);
    for (auto& m : r.measures) m = c.get_f64();
    r.event_time = c.get_le<std::int64_t>();
    r.load_time = c.get_le<std::int64_t>();
    rec.rows.push_back(std::move(r));
  }
  if (!c.exhausted()) throw WalCorrupt("trailing bytes in record body");
  return rec;
}

}  // namespace

WalWriter::WalWriter(const std::string& path) : path_(path) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw UnwritableOutput("wal '" + path + "'");
}

void WalWriter::append(const WalRecord& rec) {
  const std::string body = encode_body(rec);
  std::string frame;
  put_le<std::uint32_t>(frame, static_cast<std::uint32_t>(body.size()));
  out_.write(frame.data(), static_cast<std::streamsize>(frame.size()));
  out_.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out_) throw UnwritableOutput("wal write to '" + path_ + "'");
}

void WalWriter::flush() { out_.flush(); }

WalReader::WalReader(const std::string& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw SourceUnreadable("wal '" + path + "'");
}

std::optional<WalRecord> WalReader::next() {
  char len_bytes[4];
  in_.read(len_bytes, 4);
  if (in_.gcount() == 0 && in_.eof()) return std::nullopt;
  if (in_.gcount() != 4) throw WalCorrupt("truncated length prefix in '" + path_ + "'");
  std::uint32_t len = 0;
  for (int i = 3; i >= 0; --i) {
    len = (len << 8) | static_cast<unsigned char>(len_bytes[i]);
  }
  std::string body(len, '\0');
  in_.read(body.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint32_t>(in_.gcount()) != len) {
    throw WalCorrupt("truncated record body in '" + path_ + "'");
  }
  return decode_body(body);
}

std::size_t replay_wal(const std::string& path, Warehouse& wh) {
  WalReader reader(path);
  std::size_t applied = 0;
  while (auto rec = reader.next()) {
    switch (rec->op) {
      case WalOp::BatchLoad:
        wh.load_batch(rec->fact, std::move(rec->rows));
        break;
      case WalOp::Trickle:
        if (rec->rows.size() != 1) throw WalCorrupt("trickle record needs 1 row");
        wh.trickle_insert(rec->fact, std::move(rec->rows[0]));
        break;
      case WalOp::Flip:
        if (!wh.staging_cycle_open(rec->fact)) {
          wh.begin_staging_cycle(rec->fact, rec->param);
        }
        for (auto& r : rec->rows) wh.stage_insert(rec->fact, std::move(r));
        wh.flip(rec->fact, rec->param);
        break;
      case WalOp::Consolidate:
        wh.consolidate(rec->fact, rec->param);
        break;
      case WalOp::Retention:
        wh.enforce_retention(rec->fact, rec->param);
        break;
      case WalOp::CacheInsert:
        if (rec->rows.size() != 1) throw WalCorrupt("cache record needs 1 row");
        wh.cache_insert(rec->fact, std::move(rec->rows[0]));
        break;
      case WalOp::CacheDrain:
        wh.cache_drain(rec->fact, rec->param);
        break;
      default:
        throw WalCorrupt("unknown op " + std::to_string(static_cast<int>(rec->op)));
    }
    if (wh.epoch() != rec->epoch) {
      throw WalCorrupt("replay diverged: epoch " + std::to_string(wh.epoch()) +
                       " vs recorded " + std::to_string(rec->epoch));
    }
    ++applied;
  }
  return applied;
}

}  // namespace rtdw::storage
