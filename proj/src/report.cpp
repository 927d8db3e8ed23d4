#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "rtdw/errors.hpp"
#include "rtdw/scenario.hpp"

namespace rtdw::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string truncated(const std::string& s, std::size_t width) {
  if (s.size() <= width) return s;
  return s.substr(0, width - 2) + "..";  // deterministic truncation
}

json strategy_to_json(const StrategyReport& s) {
  return json{{"kind", "strategy"},
              {"fact", s.fact},
              {"strategy", s.strategy},
              {"records_in", s.records_in},
              {"accepted", s.accepted},
              {"rejected", s.rejected},
              {"snr", s.snr},
              {"dead_letters", s.dead_letters},
              {"rows_ingested", s.rows_ingested},
              {"batches", s.batches},
              {"flips", s.flips},
              {"cache_overflows", s.cache_overflows},
              {"overflow_rejected", s.overflow_rejected},
              {"freshness_mean", s.freshness_mean},
              {"freshness_p95", s.freshness_p95},
              {"freshness_max", s.freshness_max},
              {"flip_pause_mean_ms", s.flip_pause_mean_ms},
              {"flip_pause_p95_ms", s.flip_pause_p95_ms},
              {"flip_pause_max_ms", s.flip_pause_max_ms},
              {"final_sum", s.final_sum},
              {"final_count", s.final_count}};
}

StrategyReport strategy_from_json(const json& j) {
  StrategyReport s;
  s.fact = j.at("fact").get<std::string>();
  s.strategy = j.at("strategy").get<std::string>();
  s.records_in = j.at("records_in").get<std::uint64_t>();
  s.accepted = j.at("accepted").get<std::uint64_t>();
  s.rejected = j.at("rejected").get<std::uint64_t>();
  s.snr = j.at("snr").get<double>();
  s.dead_letters = j.at("dead_letters").get<std::uint64_t>();
  s.rows_ingested = j.at("rows_ingested").get<std::uint64_t>();
  s.batches = j.at("batches").get<std::uint64_t>();
  s.flips = j.at("flips").get<std::uint64_t>();
  s.cache_overflows = j.at("cache_overflows").get<std::uint64_t>();
  s.overflow_rejected = j.at("overflow_rejected").get<std::uint64_t>();
  s.freshness_mean = j.at("freshness_mean").get<double>();
  s.freshness_p95 = j.at("freshness_p95").get<Tick>();
  s.freshness_max = j.at("freshness_max").get<Tick>();
  s.flip_pause_mean_ms = j.at("flip_pause_mean_ms").get<double>();
  s.flip_pause_p95_ms = j.at("flip_pause_p95_ms").get<double>();
  s.flip_pause_max_ms = j.at("flip_pause_max_ms").get<double>();
  s.final_sum = j.at("final_sum").get<double>();
  s.final_count = j.at("final_count").get<std::uint64_t>();
  return s;
}

const char* kCsvHeader =
    "fact,strategy,records_in,accepted,rejected,snr,dead_letters,rows_ingested,"
    "batches,flips,cache_overflows,overflow_rejected,freshness_mean,freshness_p95,"
    "freshness_max,flip_pause_mean_ms,flip_pause_p95_ms,flip_pause_max_ms,"
    "final_sum,final_count,seed,queries,oracle_mismatches,invariant_violations";

}  // namespace

void emit_report(const RunReport& report, const std::string& format, std::ostream& os) {
  if (format == "json-lines") {
    os << report_to_jsonl(report);
    return;
  }
  if (format == "csv") {
    os << kCsvHeader << "\n";
    for (const auto& s : report.strategies) {
      os << s.fact << ',' << s.strategy << ',' << s.records_in << ',' << s.accepted
         << ',' << s.rejected << ',' << s.snr << ',' << s.dead_letters << ','
         << s.rows_ingested << ',' << s.batches << ',' << s.flips << ','
         << s.cache_overflows << ',' << s.overflow_rejected << ','
         << s.freshness_mean << ',' << s.freshness_p95 << ',' << s.freshness_max
         << ',' << s.flip_pause_mean_ms << ',' << s.flip_pause_p95_ms << ','
         << s.flip_pause_max_ms << ',' << s.final_sum << ',' << s.final_count << ','
         << report.seed << ',' << report.queries_executed << ','
         << report.oracle_mismatches << ',' << report.invariant_violations << "\n";
    }
    return;
  }
  if (format != "table") throw ConfigError("unknown report format '" + format + "'");

  os << std::left << std::setw(10) << "fact" << std::setw(22) << "strategy"
     << std::right << std::setw(9) << "rows" << std::setw(8) << "flips"
     << std::setw(10) << "lag.mean" << std::setw(9) << "lag.p95" << std::setw(8)
     << "snr" << std::setw(12) << "sum" << std::setw(9) << "count" << "\n";
  for (const auto& s : report.strategies) {
    std::ostringstream lag;
    lag << std::fixed << std::setprecision(2) << s.freshness_mean;
    os << std::left << std::setw(10) << truncated(s.fact, 9) << std::setw(22)
       << truncated(s.strategy, 21) << std::right << std::setw(9) << s.rows_ingested
       << std::setw(8) << s.flips << std::setw(10) << lag.str() << std::setw(9)
       << s.freshness_p95 << std::setw(8) << std::fixed << std::setprecision(1)
       << s.snr << std::setw(12) << std::setprecision(0) << s.final_sum
       << std::setw(9) << s.final_count << "\n";
  }
  os << "queries=" << report.queries_executed
     << " mismatches=" << report.oracle_mismatches
     << " violations=" << report.invariant_violations
     << " alerts=" << report.alerts_fired << " epoch=" << report.final_epoch
     << " throughput=" << std::fixed << std::setprecision(0)
     << report.insert_throughput << "/s" << "\n";
  for (const auto& v : report.violation_notes) os << "  violation: " << v << "\n";
}

std::string report_to_jsonl(const RunReport& report) {
  std::ostringstream os;
  for (const auto& s : report.strategies) os << strategy_to_json(s).dump() << "\n";
  json summary{{"kind", "summary"},
               {"seed", report.seed},
               {"queries_executed", report.queries_executed},
               {"oracle_mismatches", report.oracle_mismatches},
               {"invariant_violations", report.invariant_violations},
               {"violation_notes", report.violation_notes},
               {"query_latency_mean_ms", report.query_latency_mean_ms},
               {"query_latency_p95_ms", report.query_latency_p95_ms},
               {"query_latency_max_ms", report.query_latency_max_ms},
               {"insert_throughput", report.insert_throughput},
               {"run_wall_seconds", report.run_wall_seconds},
               {"alerts_fired", report.alerts_fired},
               {"alert_digest", report.alert_digest},
               {"final_epoch", report.final_epoch}};
  os << summary.dump() << "\n";
  return os.str();
}

RunReport report_from_jsonl(const std::string& text) {
  RunReport report;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string kind = j.value("kind", std::string());
    if (kind == "strategy") {
      report.strategies.push_back(strategy_from_json(j));
    } else if (kind == "summary") {
      report.seed = j.at("seed").get<std::uint64_t>();
      report.queries_executed = j.at("queries_executed").get<std::uint64_t>();
      report.oracle_mismatches = j.at("oracle_mismatches").get<std::uint64_t>();
      report.invariant_violations = j.at("invariant_violations").get<std::uint64_t>();
      report.violation_notes =
          j.at("violation_notes").get<std::vector<std::string>>();
      report.query_latency_mean_ms = j.at("query_latency_mean_ms").get<double>();
      report.query_latency_p95_ms = j.at("query_latency_p95_ms").get<double>();
      report.query_latency_max_ms = j.at("query_latency_max_ms").get<double>();
      report.insert_throughput = j.at("insert_throughput").get<double>();
      report.run_wall_seconds = j.at("run_wall_seconds").get<double>();
      report.alerts_fired = j.at("alerts_fired").get<std::uint64_t>();
      report.alert_digest = j.at("alert_digest").get<std::string>();
      report.final_epoch = j.at("final_epoch").get<Epoch>();
    }
  }
  return report;
}

bool reports_equal_modulo_wall(const RunReport& a, const RunReport& b) {
  if (a.strategies.size() != b.strategies.size()) return false;
  for (std::size_t i = 0; i < a.strategies.size(); ++i) {
    StrategyReport sa = a.strategies[i];
    StrategyReport sb = b.strategies[i];
    // flip pauses are wall measurements
    sa.flip_pause_mean_ms = sb.flip_pause_mean_ms = 0;
    sa.flip_pause_p95_ms = sb.flip_pause_p95_ms = 0;
    sa.flip_pause_max_ms = sb.flip_pause_max_ms = 0;
    if (!(sa == sb)) return false;
  }
  return a.seed == b.seed && a.queries_executed == b.queries_executed &&
         a.oracle_mismatches == b.oracle_mismatches &&
         a.invariant_violations == b.invariant_violations &&
         a.violation_notes == b.violation_notes &&
         a.alerts_fired == b.alerts_fired && a.alert_digest == b.alert_digest &&
         a.final_epoch == b.final_epoch;
}

std::vector<std::string> write_report_files(const RunReport& report,
                                            const std::vector<std::string>& formats,
                                            const std::string& dir) {
  std::vector<std::string> written;
  fs::create_directories(dir);
  for (const auto& f : formats) {
    std::string ext = f == "json-lines" ? "jsonl" : (f == "csv" ? "csv" : "txt");
    fs::path path = fs::path(dir) / ("report." + ext);
    std::ofstream out(path);
    if (!out) throw UnwritableOutput(path.string());
    emit_report(report, f, out);
    written.push_back(path.string());
  }
  return written;
}

}  // namespace rtdw::harness
