#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rtdw/engine.hpp"
#include "rtdw/errors.hpp"
#include "rtdw/query_text.hpp"
#include "rtdw/scenario.hpp"
#include "rtdw/workload.hpp"
#include "rtdw/wal.hpp"

namespace {

int cmd_validate(const std::string& schema_path) {
  rtdw::model::SchemaDef schema = rtdw::model::load_schema_file(schema_path);
  rtdw::model::ValidationReport report = rtdw::model::validate_schema(schema);
  if (report.valid()) {
    std::cout << "OK: " << schema.dimensions.size() << " dimensions, "
              << schema.fact_tables.size() << " fact tables\n";
    return 0;
  }
  std::cout << report.to_string();
  return 1;
}

int cmd_query(const std::string& schema_path, const std::string& expr,
              const std::string& wal_path, const std::string& fact_hint,
              const std::string& route_name, std::size_t cache_capacity,
              const std::string& workload) {
  rtdw::Engine engine(rtdw::model::load_schema_file(schema_path),
                      rtdw::EngineOptions{cache_capacity, "", 1440, false});
  if (!workload.empty()) {
    // <generator>:<members>:<seed> re-seeds dimensions the way the scenario
    // harness does, so attribute queries resolve after a WAL replay
    std::string gen = workload;
    int members = 20;
    std::uint64_t seed = 0;
    if (auto c1 = workload.find(':'); c1 != std::string::npos) {
      gen = workload.substr(0, c1);
      auto rest = workload.substr(c1 + 1);
      if (auto c2 = rest.find(':'); c2 != std::string::npos) {
        members = std::stoi(rest.substr(0, c2));
        seed = std::stoull(rest.substr(c2 + 1));
      } else {
        members = std::stoi(rest);
      }
    }
    rtdw::harness::seed_workload_dimensions(gen, engine.dimensions(), members, seed);
  }
  if (!wal_path.empty()) {
    const std::size_t applied = rtdw::storage::replay_wal(wal_path, engine.warehouse());
    std::cerr << "replayed " << applied << " wal records, epoch "
              << engine.warehouse().epoch() << "\n";
  }
  rtdw::query::QuerySpec spec =
      rtdw::query::parse_query(expr, engine.schema(), fact_hint);
  std::optional<rtdw::query::Route> forced;
  if (route_name == "direct") forced = rtdw::query::Route::Direct;
  if (route_name == "jim") forced = rtdw::query::Route::JIM;
  if (route_name == "reverse_jim") forced = rtdw::query::Route::ReverseJIM;
  rtdw::query::ResultSet rs = engine.queries().execute(spec, forced);

  for (std::size_t i = 0; i < rs.key_names.size(); ++i) {
    std::cout << rs.key_names[i] << "\t";
  }
  for (std::size_t i = 0; i < rs.agg_names.size(); ++i) {
    std::cout << rs.agg_names[i] << (i + 1 < rs.agg_names.size() ? "\t" : "");
  }
  std::cout << "\n";
  for (const auto& row : rs.rows) {
    for (const auto& k : row.keys) std::cout << rtdw::to_string(k) << "\t";
    for (std::size_t i = 0; i < row.values.size(); ++i) {
      std::cout << row.values[i] << (i + 1 < row.values.size() ? "\t" : "");
    }
    std::cout << "\n";
  }
  std::cout << "-- epoch " << rs.meta.epoch << ", route "
            << rtdw::query::route_name(rs.meta.route) << ", scanned "
            << rs.meta.rows_scanned << ", staleness bound "
            << rs.meta.staleness_bound << "\n";
  return 0;
}

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed,
            const std::string& report_dir, const std::string& format,
            const std::string& alerts_path) {
  rtdw::harness::ScenarioConfig cfg = rtdw::harness::ScenarioConfig::load(scenario_path);
  if (seed) cfg.seed = *seed;
  if (!report_dir.empty()) cfg.report_dir = report_dir;
  if (!alerts_path.empty()) cfg.alerts_path = alerts_path;
  if (!format.empty()) cfg.report_formats = {format};
  rtdw::harness::RunReport report = rtdw::harness::run_scenario(cfg);
  if (!cfg.report_dir.empty()) {
    auto files = rtdw::harness::write_report_files(report, cfg.report_formats,
                                                   cfg.report_dir);
    for (const auto& f : files) std::cerr << "wrote " << f << "\n";
    rtdw::harness::emit_report(report, "table", std::cout);
  } else {
    for (const auto& f : cfg.report_formats) {
      rtdw::harness::emit_report(report, f, std::cout);
    }
  }
  return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rtdw: embedded real-time data warehouse"};
  app.require_subcommand(1);

  std::string schema_path, expr, wal_path, fact_hint, route, scenario_path;
  std::string report_dir, format, workload, alerts;
  std::size_t cache_capacity = 100000;
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto* validate = app.add_subcommand("validate", "validate a schema file");
  validate->add_option("--schema", schema_path, "schema file")->required();

  auto* query = app.add_subcommand("query", "run an ad hoc query");
  query->add_option("--schema", schema_path, "schema file")->required();
  query->add_option("--expr", expr, "query text")->required();
  query->add_option("--wal", wal_path, "load the store from a write-ahead log");
  query->add_option("--fact", fact_hint, "fact table when measures are ambiguous");
  query->add_option("--route", route, "force a route: direct|jim|reverse_jim");
  query->add_option("--cache-capacity", cache_capacity, "external cache row capacity");
  query->add_option("--workload", workload,
                    "seed generator dimensions: <generator>[:<members>[:<seed>]]");

  auto* run = app.add_subcommand("run", "run a scenario");
  run->add_option("--scenario", scenario_path, "scenario file")->required();
  run->add_option("--seed", seed, "override the scenario seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--report-dir", report_dir, "write report files here");
  run->add_option("--format", format, "table|csv|json-lines");
  run->add_option("--alerts", alerts, "alert rules file (overrides the scenario)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(schema_path);
    if (query->parsed()) {
      return cmd_query(schema_path, expr, wal_path, fact_hint, route, cache_capacity, workload);
    }
    if (run->parsed()) {
      return cmd_run(scenario_path,
                     seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
                     report_dir, format, alerts);
    }
  } catch (const rtdw::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
