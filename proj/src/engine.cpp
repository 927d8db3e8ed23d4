#include "rtdw/engine.hpp"

#include "rtdw/errors.hpp"

namespace rtdw {

Engine::Engine(model::SchemaDef schema, EngineOptions opts)
    : schema_(std::move(schema)) {
  model::ValidationReport report = model::validate_schema(schema_);
  if (!report.valid()) {
    throw ConfigError("schema invalid:\n" + report.to_string());
  }
  dims_ = std::make_unique<model::DimensionCatalog>(schema_);
  storage::WarehouseOptions wopts;
  wopts.cache_capacity = opts.cache_capacity;
  wopts.wal_path = opts.wal_path;
  wopts.ticks_per_day = opts.ticks_per_day;
  wh_ = std::make_unique<storage::Warehouse>(schema_, wopts);
  query::QueryEngineOptions qopts;
  qopts.result_memo = opts.result_memo;
  queries_ = std::make_unique<query::QueryEngine>(schema_, *wh_, *dims_, qopts);
}

}  // namespace rtdw
