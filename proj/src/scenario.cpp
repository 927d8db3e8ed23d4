#include "rtdw/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rtdw/alerting.hpp"
#include "rtdw/engine.hpp"
#include "rtdw/errors.hpp"
#include "rtdw/oracle.hpp"
#include "rtdw/query_text.hpp"
#include "rtdw/workload.hpp"

namespace rtdw::harness {

using nlohmann::json;
namespace fs = std::filesystem;

etl::LoadStrategy parse_strategy(const std::string& text) {
  // "batch:100", "micro_batch:10", "trickle", "trickle_and_flip:5",
  // "trickle_and_flip:5:daily", "cache_routed:20"
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty strategy");
  auto arg = [&](std::size_t i) -> Tick {
    if (parts.size() <= i) throw ConfigError("strategy '" + text + "' needs a period");
    return static_cast<Tick>(std::stoll(parts[i]));
  };
  const std::string& kind = parts[0];
  if (kind == "batch") return etl::LoadStrategy::batch(arg(1));
  if (kind == "micro_batch") return etl::LoadStrategy::micro_batch(arg(1));
  if (kind == "trickle") return etl::LoadStrategy::trickle_direct();
  if (kind == "trickle_and_flip") {
    const bool daily = parts.size() > 2 && parts[2] == "daily";
    return etl::LoadStrategy::trickle_and_flip(arg(1), daily);
  }
  if (kind == "cache_routed") return etl::LoadStrategy::cache_routed(arg(1));
  throw ConfigError("unknown strategy '" + text + "'");
}

namespace {

etl::LoadStrategy strategy_from_json(const json& j) {
  if (j.is_string()) return parse_strategy(j.get<std::string>());
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "batch") return etl::LoadStrategy::batch(j.at("interval").get<Tick>());
  if (kind == "micro_batch") {
    return etl::LoadStrategy::micro_batch(j.at("interval").get<Tick>());
  }
  if (kind == "trickle") return etl::LoadStrategy::trickle_direct();
  if (kind == "trickle_and_flip") {
    return etl::LoadStrategy::trickle_and_flip(j.at("cycle").get<Tick>(),
                                               j.value("consolidate_daily", false));
  }
  if (kind == "cache_routed") {
    return etl::LoadStrategy::cache_routed(j.at("drain_interval").get<Tick>());
  }
  throw ConfigError("unknown strategy kind '" + kind + "'");
}

etl::CleanRule clean_rule_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "not_null") return etl::CleanRule::not_null(j.at("field"));
  if (kind == "type_conforms") {
    return etl::CleanRule::type_conforms(j.at("field"),
                                         scalar_kind_from_name(j.at("scalar")));
  }
  if (kind == "range") {
    return etl::CleanRule::range(j.at("field"), j.at("lo").get<double>(),
                                 j.at("hi").get<double>());
  }
  if (kind == "referential") {
    return etl::CleanRule::referential(j.at("field"), j.at("dimension"));
  }
  throw ConfigError("unknown clean rule kind '" + kind + "'");
}

Value value_from_json(const json& j) {
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_number_float()) return Value(j.get<double>());
  return Value(j.get<std::string>());
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute()) return p;
  return (fs::path(base_dir) / path).string();
}

}  // namespace

ScenarioConfig ScenarioConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SourceUnreadable("scenario file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario parse: ") + e.what());
  }
  const std::string base_dir = fs::path(path).parent_path().string();

  ScenarioConfig cfg;
  try {
    cfg.schema_path = resolve_path(base_dir, j.at("schema").get<std::string>());
    cfg.schema = model::load_schema_file(cfg.schema_path);
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.ticks = j.value("ticks", Tick{100});
    cfg.wall_clock = j.value("clock", std::string("simulated")) == "wall";
    cfg.cache_capacity = j.value("cache_capacity", std::size_t{0});
    cfg.ticks_per_day = j.value("ticks_per_day", Tick{1440});
    if (j.contains("wal") && !j["wal"].is_null()) {
      cfg.wal_path = resolve_path(base_dir, j["wal"].get<std::string>());
    }
    cfg.result_memo = j.value("result_memo", false);
    for (const auto& js : j.value("sources", json::array())) {
      SourceConfig src;
      src.fact = js.at("fact").get<std::string>();
      src.generator = js.value("generator", std::string());
      if (js.contains("file")) {
        src.file_kind = js["file"].value("kind", std::string("delimited"));
        src.file_path = resolve_path(base_dir, js["file"].at("path").get<std::string>());
      }
      src.rate = js.value("rate", 1.0);
      src.dirty_fraction = js.value("dirty_fraction", 0.0);
      src.members = js.value("members", 20);
      if (js.contains("strategy")) src.strategy = strategy_from_json(js["strategy"]);
      if (js.contains("clean_rules")) {
        src.default_clean_rules = false;
        for (const auto& jr : js["clean_rules"]) {
          src.clean_rules.push_back(clean_rule_from_json(jr));
        }
      }
      if (js.contains("transform")) {
        src.has_transform = true;
        const auto& jt = js["transform"];
        const json jd = jt.value("dim_fields", json::object());
        for (const auto& item : jd.items()) {
          src.dim_fields.emplace_back(item.key(), item.value().get<std::string>());
        }
        const json jm = jt.value("measure_fields", json::object());
        for (const auto& item : jm.items()) {
          src.measure_fields.emplace_back(item.key(), item.value().get<std::string>());
        }
        src.event_time_field = jt.value("event_time_field", std::string());
      }
      cfg.sources.push_back(std::move(src));
    }
    for (const auto& jq : j.value("queries", json::array())) {
      QueryScript q;
      q.at = jq.value("at", Tick{-1});
      q.every = jq.value("every", Tick{0});
      q.expr = jq.at("expr").get<std::string>();
      q.fact_hint = jq.value("fact", std::string());
      cfg.queries.push_back(std::move(q));
    }
    for (const auto& ju : j.value("scd_updates", json::array())) {
      ScdScript s;
      s.at = ju.at("at").get<Tick>();
      s.dimension = ju.at("dimension").get<std::string>();
      s.key = ju.at("key").get<std::string>();
      for (auto it = ju.at("set").begin(); it != ju.at("set").end(); ++it) {
        s.attrs.emplace_back(it.key(), value_from_json(it.value()));
      }
      cfg.scd_updates.push_back(std::move(s));
    }
    if (j.contains("alerts") && !j["alerts"].is_null()) {
      cfg.alerts_path = resolve_path(base_dir, j["alerts"].get<std::string>());
    }
    for (const auto& s : j.value("compare_strategies", json::array())) {
      cfg.compare_strategies.push_back(s.get<std::string>());
    }
    cfg.oracle_self_test = j.value("oracle_self_test", false);
    if (j.contains("report")) {
      const auto& jr = j["report"];
      if (jr.contains("formats")) {
        cfg.report_formats.clear();
        for (const auto& f : jr["formats"]) cfg.report_formats.push_back(f);
      }
      if (jr.contains("dir") && !jr["dir"].is_null()) {
        cfg.report_dir = resolve_path(base_dir, jr["dir"].get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario fields: ") + e.what());
  }
  return cfg;
}

namespace {

struct PreparedSource {
  SourceConfig config;
  std::vector<etl::SourceRecord> records;
  std::vector<etl::CleanRule> rules;
  etl::TransformSpec transform;
};

struct SourceOutcome {
  etl::CleanReport clean_report;
  std::size_t dead_letters = 0;
  etl::LoaderStats loader;
};

double mean_ms(const std::vector<double>& seconds) {
  if (seconds.empty()) return 0;
  double s = 0;
  for (double v : seconds) s += v;
  return s / static_cast<double>(seconds.size()) * 1e3;
}

double p95_ms(std::vector<double> seconds) {
  if (seconds.empty()) return 0;
  std::sort(seconds.begin(), seconds.end());
  const auto idx = std::min(seconds.size() - 1,
                            static_cast<std::size_t>(std::ceil(
                                0.95 * static_cast<double>(seconds.size())) - 1));
  return seconds[idx] * 1e3;
}

double max_ms(const std::vector<double>& seconds) {
  double m = 0;
  for (double v : seconds) m = std::max(m, v);
  return m * 1e3;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// One full pass of the scenario with every source forced to `strategy`
// (or its configured one when strategy is empty). Queries and alerts only
// run when `primary`.
struct PassResult {
  std::vector<StrategyReport> strategies;
  std::uint64_t queries_executed = 0;
  std::uint64_t oracle_mismatches = 0;
  std::vector<std::string> violations;
  std::vector<double> query_latencies;
  std::uint64_t alerts_fired = 0;
  std::string alert_digest;
  Epoch final_epoch = 0;
  std::uint64_t rows_ingested_total = 0;
};

PassResult run_pass(const ScenarioConfig& cfg,
                    const std::optional<etl::LoadStrategy>& forced_strategy,
                    bool primary) {
  PassResult out;

  Engine engine(cfg.schema, EngineOptions{cfg.cache_capacity, cfg.wal_path,
                                          cfg.ticks_per_day, cfg.result_memo});
  SimulatedClock clock;

  // Prepare sources: generate/extract, clean, transform.
  std::vector<PreparedSource> prepared;
  std::vector<SourceOutcome> outcomes(cfg.sources.size());
  for (const auto& src : cfg.sources) {
    PreparedSource p;
    p.config = src;
    if (forced_strategy) p.config.strategy = *forced_strategy;
    if (!src.generator.empty()) {
      seed_workload_dimensions(src.generator, engine.dimensions(), src.members,
                               cfg.seed);
      WorkloadParams params;
      params.generator = src.generator;
      params.rate = src.rate;
      params.duration = cfg.ticks;
      params.seed = cfg.seed;
      params.dirty_fraction = src.dirty_fraction;
      params.members = src.members;
      p.records = generate_workload(params);
      p.rules = src.default_clean_rules ? workload_clean_rules(src.generator)
                                        : src.clean_rules;
      p.transform = workload_transform(src.generator, cfg.schema);
    } else {
      p.records = src.file_kind == "jsonl"
                      ? etl::extract_jsonl(src.file_path, src.fact)
                      : etl::extract_delimited(src.file_path, src.fact);
      p.rules = src.clean_rules;
      p.transform = etl::TransformSpec::defaults(cfg.schema.fact(src.fact));
      if (src.has_transform) {
        for (const auto& [dim, field] : src.dim_fields) {
          for (auto& [d, f] : p.transform.dim_fields) {
            if (d == dim) f = field;
          }
        }
        const auto& fact_def = cfg.schema.fact(src.fact);
        for (const auto& [measure, field] : src.measure_fields) {
          const int mi = fact_def.measure_index(measure);
          if (mi >= 0) p.transform.measure_fields[static_cast<std::size_t>(mi)] = field;
        }
        if (!src.event_time_field.empty()) {
          p.transform.event_time_field = src.event_time_field;
        }
      }
    }
    prepared.push_back(std::move(p));
  }

  // Parse query scripts against the schema once.
  struct ActiveQuery {
    QueryScript script;
    query::QuerySpec spec;
  };
  std::vector<ActiveQuery> queries;
  if (primary) {
    for (const auto& q : cfg.queries) {
      queries.push_back({q, query::parse_query(q.expr, cfg.schema, q.fact_hint)});
    }
  }

  // Alerts.
  std::unique_ptr<alerting::AlertEngine> alerts;
  alerting::CollectingSink alert_sink;
  if (primary && !cfg.alerts_path.empty()) {
    alerts = std::make_unique<alerting::AlertEngine>(
        [&engine](const query::QuerySpec& spec) {
          return engine.queries().execute(spec);
        },
        std::vector<Tick>{1, 5, 15, 30});
    for (const auto& parsed :
         alerting::parse_alert_rules_file(cfg.alerts_path, cfg.schema)) {
      alerting::AlertRule rule;
      rule.rule_id = parsed.rule_id;
      rule.spec = parsed.spec;
      rule.predicate = alerting::AlertPredicate::from_op(parsed.predicate_op,
                                                         parsed.threshold);
      if (parsed.on_event) {
        rule.trigger = alerting::OnEventTrigger{rule.spec.fact, parsed.period};
      } else {
        rule.trigger = alerting::CycleTrigger{parsed.period};
      }
      alerts->register_rule(std::move(rule));
    }
    engine.warehouse().register_commit_observer(
        [&](const std::string& fact, Epoch epoch, storage::WalOp) {
          alerts->on_event(fact, epoch, clock.now());
        });
  }

  // Clean + transform, then build per-source loaders and arrival queues.
  struct SourceRun {
    std::vector<etl::TimedRow> stream;
    std::size_t next = 0;
    std::unique_ptr<etl::Loader> loader;
  };
  std::vector<SourceRun> runs(prepared.size());
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    auto& p = prepared[i];
    auto& run = runs[i];
    outcomes[i].clean_report.accepted = 0;
    auto [accepted, report] = etl::clean(p.records, p.rules, engine.dimensions());
    outcomes[i].clean_report = report;
    etl::TransformResult tr =
        etl::transform(accepted, cfg.schema, p.transform, engine.dimensions());
    outcomes[i].dead_letters = tr.dead.size();
    run.stream.reserve(tr.rows.size());
    for (auto& row : tr.rows) {
      // arrival = load stamp from extraction; loaders restamp on ingest
      run.stream.push_back({row.load_time, std::move(row)});
    }
    std::stable_sort(run.stream.begin(), run.stream.end(),
                     [](const etl::TimedRow& a, const etl::TimedRow& b) {
                       return a.arrival < b.arrival;
                     });
    run.loader = std::make_unique<etl::Loader>(engine.warehouse(), p.config.fact,
                                               p.config.strategy, clock);
    run.loader->start();
  }

  std::size_t next_scd = 0;
  auto scd_sorted = cfg.scd_updates;
  std::stable_sort(scd_sorted.begin(), scd_sorted.end(),
                   [](const ScdScript& a, const ScdScript& b) { return a.at < b.at; });

  const auto wall0 = std::chrono::steady_clock::now();

  // The tick loop.
  for (Tick t = 0; t <= cfg.ticks; ++t) {
    clock.advance_to(t);
    while (next_scd < scd_sorted.size() && scd_sorted[next_scd].at <= t) {
      const ScdScript& s = scd_sorted[next_scd];
      engine.dimensions().at(s.dimension).apply_scd_update(Value(s.key), s.attrs, t);
      ++next_scd;
    }
    for (auto& run : runs) {
      while (run.next < run.stream.size() && run.stream[run.next].arrival <= t) {
        run.loader->ingest(std::move(run.stream[run.next].row));
        ++run.next;
      }
      run.loader->on_tick(t);
    }
    if (alerts) alerts->tick(t);
    if (primary) {
      for (auto& q : queries) {
        const bool due = (q.script.at == t) ||
                         (q.script.every > 0 && t > 0 && t % q.script.every == 0);
        if (!due) continue;
        storage::Snapshot snap = engine.warehouse().open_snapshot();
        const auto q0 = std::chrono::steady_clock::now();
        query::ResultSet actual = engine.queries().execute_on(snap, q.spec);
        out.query_latencies.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - q0)
                .count());
        query::ResultSet expected = oracle_aggregate(
            snapshot_rows(snap, q.spec.fact, q.spec.freshness), q.spec, cfg.schema,
            engine.dimensions());
        if (cfg.oracle_self_test && !expected.rows.empty() &&
            !expected.rows[0].values.empty()) {
          expected.rows[0].values[0] += 1.0;  // deliberate fault: must be caught
        }
        ++out.queries_executed;
        std::string why;
        if (!results_equal(actual, expected, q.spec, 1e-9, &why)) {
          ++out.oracle_mismatches;
        }
      }
    }
  }

  for (auto& run : runs) run.loader->finish(cfg.ticks);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

  // Per-source reports + invariant checks.
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const auto& p = prepared[i];
    const auto& oc = outcomes[i];
    const etl::LoaderStats& ls = runs[i].loader->stats();
    StrategyReport rep;
    rep.fact = p.config.fact;
    rep.strategy = p.config.strategy.name();
    rep.records_in = p.records.size();
    rep.accepted = oc.clean_report.accepted;
    rep.rejected = oc.clean_report.rejected;
    rep.snr = oc.clean_report.snr;
    rep.dead_letters = oc.dead_letters;
    rep.rows_ingested = ls.rows;
    rep.batches = ls.batches;
    rep.flips = ls.flips;
    rep.cache_overflows = ls.cache_overflows;
    rep.overflow_rejected = ls.rejected;
    rep.freshness_mean = ls.mean_freshness();
    rep.freshness_p95 = ls.p95_freshness();
    rep.freshness_max = ls.max_freshness();
    rep.flip_pause_mean_ms = mean_ms(ls.flip_pauses);
    rep.flip_pause_p95_ms = p95_ms(ls.flip_pauses);
    rep.flip_pause_max_ms = max_ms(ls.flip_pauses);
    out.rows_ingested_total += ls.rows;

    // Pipeline conservation: in = accepted + rejected; accepted = ingested +
    // dead-lettered + overflow-rejected.
    if (rep.records_in != rep.accepted + rep.rejected) {
      out.violations.push_back(rep.fact + ": clean conservation broken");
    }
    if (rep.accepted != rep.rows_ingested + rep.dead_letters + rep.overflow_rejected) {
      out.violations.push_back(rep.fact + ": load conservation broken");
    }

    // At-rest totals over the first measure (queries verified by the oracle).
    const model::FactTableDef& fact = cfg.schema.fact(p.config.fact);
    if (!fact.measures.empty()) {
      query::QuerySpec total;
      total.fact = p.config.fact;
      total.aggregates = {{fact.measures[0].name, model::Aggregator::Sum},
                          {fact.measures[0].name, model::Aggregator::Count}};
      total.freshness = query::Freshness::RealTime;
      storage::Snapshot snap = engine.warehouse().open_snapshot();
      query::ResultSet rs = engine.queries().execute_on(snap, total);
      query::ResultSet expect = oracle_aggregate(
          snapshot_rows(snap, total.fact, total.freshness), total, cfg.schema,
          engine.dimensions());
      std::string why;
      if (!results_equal(rs, expect, total, 1e-9, &why)) {
        out.violations.push_back(p.config.fact + ": at-rest totals " + why);
      }
      if (!rs.rows.empty()) {
        rep.final_sum = rs.rows[0].values[0];
        rep.final_count = static_cast<std::uint64_t>(rs.rows[0].values[1]);
      }
    }
    out.strategies.push_back(std::move(rep));
  }

  if (engine.warehouse().cache_configured() &&
      engine.warehouse().cache_used_total() > engine.warehouse().cache_capacity()) {
    out.violations.push_back("cache bound exceeded");
  }

  if (alerts) {
    alerts->drain_outbox(alert_sink);
    out.alerts_fired = alert_sink.events.size();
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& ev : alert_sink.events) {
      h = fnv1a(ev.rule_id + "/" + std::to_string(ev.cycle_index) + ";", h);
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    out.alert_digest = buf;
  }

  out.final_epoch = engine.warehouse().epoch();
  (void)wall;
  return out;
}

}  // namespace

RunReport run_scenario(const ScenarioConfig& cfg) {
  model::ValidationReport schema_report = model::validate_schema(cfg.schema);
  if (!schema_report.valid()) {
    throw ConfigError("scenario schema invalid:\n" + schema_report.to_string());
  }
  for (const auto& src : cfg.sources) {
    if (!cfg.schema.find_fact(src.fact)) throw ConfigError("unknown fact " + src.fact);
    src.strategy.validate();
    if (src.rate <= 0) throw ConfigError("source rate must be positive");
  }

  RunReport report;
  report.seed = cfg.seed;
  const auto wall0 = std::chrono::steady_clock::now();

  if (cfg.compare_strategies.empty()) {
    PassResult pass = run_pass(cfg, std::nullopt, true);
    report.strategies = std::move(pass.strategies);
    report.queries_executed = pass.queries_executed;
    report.oracle_mismatches = pass.oracle_mismatches;
    report.violation_notes = std::move(pass.violations);
    report.query_latency_mean_ms = mean_ms(pass.query_latencies);
    report.query_latency_p95_ms = p95_ms(pass.query_latencies);
    report.query_latency_max_ms = max_ms(pass.query_latencies);
    report.alerts_fired = pass.alerts_fired;
    report.alert_digest = pass.alert_digest;
    report.final_epoch = pass.final_epoch;
    const double wall = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - wall0)
                            .count();
    report.run_wall_seconds = wall;
    std::uint64_t rows = pass.rows_ingested_total;
    report.insert_throughput = wall > 0 ? static_cast<double>(rows) / wall : 0;
  } else {
    // Comparative mode: same scenario once per strategy; first is primary.
    bool first = true;
    std::uint64_t rows_total = 0;
    for (const auto& sname : cfg.compare_strategies) {
      etl::LoadStrategy strategy = parse_strategy(sname);
      PassResult pass = run_pass(cfg, strategy, first);
      for (auto& rep : pass.strategies) report.strategies.push_back(rep);
      if (first) {
        report.queries_executed = pass.queries_executed;
        report.oracle_mismatches = pass.oracle_mismatches;
        report.query_latency_mean_ms = mean_ms(pass.query_latencies);
        report.query_latency_p95_ms = p95_ms(pass.query_latencies);
        report.query_latency_max_ms = max_ms(pass.query_latencies);
        report.alerts_fired = pass.alerts_fired;
        report.alert_digest = pass.alert_digest;
        report.final_epoch = pass.final_epoch;
      }
      for (auto& v : pass.violations) report.violation_notes.push_back(v);
      rows_total += pass.rows_ingested_total;
      first = false;
    }
    // Strategy at-rest equivalence: identical final multiset => identical
    // SUM/COUNT per fact across every strategy.
    for (const auto& src : cfg.sources) {
      std::optional<std::pair<double, std::uint64_t>> expect;
      for (const auto& rep : report.strategies) {
        if (rep.fact != src.fact) continue;
        if (!expect) {
          expect = {rep.final_sum, rep.final_count};
        } else if (expect->first != rep.final_sum ||
                   expect->second != rep.final_count) {
          report.violation_notes.push_back(src.fact +
                                           ": at-rest totals differ across strategies");
        }
      }
    }
    const double wall = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - wall0)
                            .count();
    report.run_wall_seconds = wall;
    report.insert_throughput = wall > 0 ? static_cast<double>(rows_total) / wall : 0;
  }
  report.invariant_violations = report.violation_notes.size();
  return report;
}

}  // namespace rtdw::harness
