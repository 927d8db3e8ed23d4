#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <variant>

#include "rtdw/engine.hpp"
#include "rtdw/errors.hpp"
#include "rtdw/query_text.hpp"
#include "rtdw/scenario.hpp"
#include "rtdw/wal.hpp"
#include "rtdw/workload.hpp"

namespace py = pybind11;
using namespace rtdw;

namespace {

Value value_from_py(const py::handle& h) {
  if (py::isinstance<py::int_>(h)) return Value(h.cast<std::int64_t>());
  if (py::isinstance<py::float_>(h)) return Value(h.cast<double>());
  return Value(h.cast<std::string>());
}

py::object value_to_py(const Value& v) {
  switch (v.index()) {
    case 0: return py::int_(std::get<0>(v));
    case 1: return py::float_(std::get<1>(v));
    default: return py::str(std::get<2>(v));
  }
}

py::dict result_to_dict(const query::ResultSet& rs) {
  py::dict out;
  py::list cols;
  for (const auto& k : rs.key_names) cols.append(k);
  for (const auto& a : rs.agg_names) cols.append(a);
  out["columns"] = cols;
  py::list rows;
  for (const auto& row : rs.rows) {
    py::list r;
    for (const auto& k : row.keys) r.append(value_to_py(k));
    for (double v : row.values) r.append(v);
    rows.append(r);
  }
  out["rows"] = rows;
  py::dict meta;
  meta["epoch"] = rs.meta.epoch;
  meta["route"] = query::route_name(rs.meta.route);
  meta["rows_scanned"] = rs.meta.rows_scanned;
  meta["staleness_bound"] = rs.meta.staleness_bound;
  meta["from_memo"] = rs.meta.from_memo;
  out["meta"] = meta;
  return out;
}

std::optional<query::Route> route_from_name(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name == "direct") return query::Route::Direct;
  if (name == "jim") return query::Route::JIM;
  if (name == "reverse_jim") return query::Route::ReverseJIM;
  throw ConfigError("unknown route '" + name + "' (direct|jim|reverse_jim)");
}

// Python-facing engine handle: schema + warehouse + queries in one object.
class PyEngine {
 public:
  PyEngine(const std::string& schema_path, std::size_t cache_capacity,
           const std::string& wal_path, Tick ticks_per_day, bool result_memo)
      : engine_(model::load_schema_file(schema_path),
                EngineOptions{cache_capacity, wal_path, ticks_per_day, result_memo}) {}

  void seed_dimension(const std::string& dimension, const py::object& key,
                      const py::dict& attrs, Tick at) {
    std::vector<std::pair<std::string, Value>> pairs;
    for (auto item : attrs) {
      pairs.emplace_back(item.first.cast<std::string>(), value_from_py(item.second));
    }
    engine_.dimensions().at(dimension).apply_scd_update(value_from_py(key), pairs, at);
  }

  FactRow make_row(const std::string& fact, const py::list& natural_keys,
                   const py::list& measures, Tick event_time, Tick load_time) {
    const model::FactTableDef& def = engine_.schema().fact(fact);
    if (natural_keys.size() != def.grain.size()) {
      throw SchemaMismatch(fact + ": expected " + std::to_string(def.grain.size()) +
                           " dimension keys");
    }
    FactRow row;
    for (std::size_t i = 0; i < def.grain.size(); ++i) {
      row.dim_keys.push_back(engine_.dimensions()
                                 .at(def.grain[i])
                                 .resolve_surrogate(value_from_py(natural_keys[i]),
                                                    event_time));
    }
    for (auto m : measures) row.measures.push_back(m.cast<double>());
    row.event_time = event_time;
    row.load_time = load_time;
    return row;
  }

  Epoch trickle(const std::string& fact, const py::list& keys, const py::list& measures,
                Tick event_time, Tick load_time) {
    return engine_.warehouse().trickle_insert(
        fact, make_row(fact, keys, measures, event_time, load_time));
  }

  Epoch load_batch(const std::string& fact, const py::list& rows) {
    std::vector<FactRow> batch;
    for (auto r : rows) {
      auto t = r.cast<py::tuple>();
      batch.push_back(make_row(fact, t[0].cast<py::list>(), t[1].cast<py::list>(),
                               t[2].cast<Tick>(), t[3].cast<Tick>()));
    }
    return engine_.warehouse().load_batch(fact, std::move(batch));
  }

  void begin_staging_cycle(const std::string& fact, Tick start) {
    engine_.warehouse().begin_staging_cycle(fact, start);
  }

  void stage(const std::string& fact, const py::list& keys, const py::list& measures,
             Tick event_time, Tick load_time) {
    engine_.warehouse().stage_insert(
        fact, make_row(fact, keys, measures, event_time, load_time));
  }

  py::dict flip(const std::string& fact, Tick next_cycle_start) {
    storage::FlipReport rep = engine_.warehouse().flip(fact, next_cycle_start);
    py::dict out;
    out["rows_moved"] = rep.rows_moved;
    out["pause_seconds"] = rep.pause_seconds;
    out["epoch"] = rep.epoch;
    return out;
  }

  Epoch cache_insert(const std::string& fact, const py::list& keys,
                     const py::list& measures, Tick event_time, Tick load_time) {
    return engine_.warehouse().cache_insert(
        fact, make_row(fact, keys, measures, event_time, load_time));
  }

  std::size_t cache_drain(const std::string& fact, Tick upto) {
    return engine_.warehouse().cache_drain(fact, upto).size();
  }

  py::dict consolidate(const std::string& fact, Tick older_than) {
    auto rep = engine_.warehouse().consolidate(fact, older_than);
    py::dict out;
    out["rows_moved"] = rep.rows_moved;
    out["epoch"] = rep.epoch;
    return out;
  }

  std::size_t enforce_retention(const std::string& fact, Tick now) {
    return engine_.warehouse().enforce_retention(fact, now);
  }

  py::dict query(const std::string& expr, const std::string& fact,
                 const std::string& route) {
    query::QuerySpec spec = query::parse_query(expr, engine_.schema(), fact);
    return result_to_dict(engine_.queries().execute(spec, route_from_name(route)));
  }

  py::dict plan(const std::string& expr, const std::string& fact) {
    query::QuerySpec spec = query::parse_query(expr, engine_.schema(), fact);
    query::MergePlan p = engine_.queries().plan(spec);
    py::dict out;
    out["route"] = query::route_name(p.route);
    out["estimated_rt_rows"] = p.estimated_rt_rows;
    out["estimated_hist_rows"] = p.estimated_hist_rows;
    out["overflow_avoided"] = p.overflow_avoided;
    return out;
  }

  std::size_t replay_wal_file(const std::string& path) {
    return storage::replay_wal(path, engine_.warehouse());
  }

  Epoch epoch() const { return engine_.warehouse().epoch(); }
  std::size_t cache_free() const { return engine_.warehouse().cache_free(); }
  std::size_t segment_count(const std::string& fact) const {
    return engine_.warehouse().segment_count(fact);
  }

 private:
  Engine engine_;
};

}  // namespace

PYBIND11_MODULE(_rtdw, m) {
  m.doc() = "Embedded real-time data warehouse engine";

  py::register_exception<Error>(m, "EngineError");

  m.def(
      "validate_schema",
      [](const std::string& path) {
        auto report = model::validate_schema(model::load_schema_file(path));
        py::list out;
        for (const auto& v : report.violations) {
          py::dict d;
          d["code"] = v.code;
          d["element"] = v.element;
          d["detail"] = v.detail;
          out.append(d);
        }
        return out;
      },
      py::arg("schema_path"),
      "Validate a schema file; returns the list of violations (empty = valid).");

  m.def(
      "run_scenario",
      [](const std::string& path, std::optional<std::uint64_t> seed,
         const std::string& report_dir) {
        harness::ScenarioConfig cfg = harness::ScenarioConfig::load(path);
        if (seed) cfg.seed = *seed;
        if (!report_dir.empty()) cfg.report_dir = report_dir;
        harness::RunReport report = harness::run_scenario(cfg);
        if (!cfg.report_dir.empty()) {
          harness::write_report_files(report, cfg.report_formats, cfg.report_dir);
        }
        py::dict out;
        out["seed"] = report.seed;
        out["queries_executed"] = report.queries_executed;
        out["oracle_mismatches"] = report.oracle_mismatches;
        out["invariant_violations"] = report.invariant_violations;
        out["alerts_fired"] = report.alerts_fired;
        out["alert_digest"] = report.alert_digest;
        out["final_epoch"] = report.final_epoch;
        out["passed"] = report.passed();
        py::list strategies;
        for (const auto& s : report.strategies) {
          py::dict d;
          d["fact"] = s.fact;
          d["strategy"] = s.strategy;
          d["rows_ingested"] = s.rows_ingested;
          d["snr"] = s.snr;
          d["freshness_mean"] = s.freshness_mean;
          d["flips"] = s.flips;
          d["final_sum"] = s.final_sum;
          d["final_count"] = s.final_count;
          strategies.append(d);
        }
        out["strategies"] = strategies;
        return out;
      },
      py::arg("scenario_path"), py::arg("seed") = std::nullopt,
      py::arg("report_dir") = std::string(),
      "Run a scenario file and return its report as a dict.");

  m.def(
      "generate_workload",
      [](const std::string& generator, double rate, Tick duration, std::uint64_t seed,
         double dirty_fraction, int members) {
        harness::WorkloadParams params{generator, rate, duration, seed,
                                       dirty_fraction, members};
        py::list out;
        for (const auto& rec : harness::generate_workload(params)) {
          py::dict d;
          for (const auto& [k, v] : rec.fields) d[py::str(k)] = v;
          d["_extracted_at"] = rec.extracted_at;
          out.append(d);
        }
        return out;
      },
      py::arg("generator"), py::arg("rate"), py::arg("duration"), py::arg("seed"),
      py::arg("dirty_fraction") = 0.0, py::arg("members") = 20,
      "Deterministic ticketing/stocks source-record stream.");

  py::class_<PyEngine>(m, "Engine")
      .def(py::init<const std::string&, std::size_t, const std::string&, Tick, bool>(),
           py::arg("schema_path"), py::arg("cache_capacity") = 0,
           py::arg("wal_path") = std::string(), py::arg("ticks_per_day") = 1440,
           py::arg("result_memo") = false)
      .def("seed_dimension", &PyEngine::seed_dimension, py::arg("dimension"),
           py::arg("key"), py::arg("attrs") = py::dict(), py::arg("at") = 0)
      .def("trickle", &PyEngine::trickle, py::arg("fact"), py::arg("keys"),
           py::arg("measures"), py::arg("event_time"), py::arg("load_time"))
      .def("load_batch", &PyEngine::load_batch, py::arg("fact"), py::arg("rows"))
      .def("begin_staging_cycle", &PyEngine::begin_staging_cycle, py::arg("fact"),
           py::arg("cycle_start") = 0)
      .def("stage", &PyEngine::stage, py::arg("fact"), py::arg("keys"),
           py::arg("measures"), py::arg("event_time"), py::arg("load_time"))
      .def("flip", &PyEngine::flip, py::arg("fact"), py::arg("next_cycle_start"))
      .def("cache_insert", &PyEngine::cache_insert, py::arg("fact"), py::arg("keys"),
           py::arg("measures"), py::arg("event_time"), py::arg("load_time"))
      .def("cache_drain", &PyEngine::cache_drain, py::arg("fact"), py::arg("upto"))
      .def("consolidate", &PyEngine::consolidate, py::arg("fact"), py::arg("older_than"))
      .def("enforce_retention", &PyEngine::enforce_retention, py::arg("fact"),
           py::arg("now"))
      .def("query", &PyEngine::query, py::arg("expr"), py::arg("fact") = std::string(),
           py::arg("route") = std::string())
      .def("plan", &PyEngine::plan, py::arg("expr"), py::arg("fact") = std::string())
      .def("replay_wal", &PyEngine::replay_wal_file, py::arg("path"))
      .def("epoch", &PyEngine::epoch)
      .def("cache_free", &PyEngine::cache_free)
      .def("segment_count", &PyEngine::segment_count, py::arg("fact"));
}
