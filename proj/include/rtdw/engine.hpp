#pragma once

#include <memory>
#include <string>

#include "rtdw/dimension.hpp"
#include "rtdw/query.hpp"
#include "rtdw/schema.hpp"
#include "rtdw/storage.hpp"

namespace rtdw {

struct EngineOptions {
  std::size_t cache_capacity = 0;
  std::string wal_path;
  Tick ticks_per_day = 1440;
  bool result_memo = false;
};

// Owns the pieces one warehouse instance needs: the validated schema, the
// dimension catalog, the physical store and the query engine.
class Engine {
 public:
  explicit Engine(model::SchemaDef schema, EngineOptions opts = {});

  const model::SchemaDef& schema() const { return schema_; }
  model::DimensionCatalog& dimensions() { return *dims_; }
  const model::DimensionCatalog& dimensions() const { return *dims_; }
  storage::Warehouse& warehouse() { return *wh_; }
  const storage::Warehouse& warehouse() const { return *wh_; }
  query::QueryEngine& queries() { return *queries_; }

 private:
  model::SchemaDef schema_;
  std::unique_ptr<model::DimensionCatalog> dims_;
  std::unique_ptr<storage::Warehouse> wh_;
  std::unique_ptr<query::QueryEngine> queries_;
};

}  // namespace rtdw
