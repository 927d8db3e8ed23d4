#pragma once

#include <vector>

#include "rtdw/dimension.hpp"
#include "rtdw/query.hpp"
#include "rtdw/schema.hpp"
#include "rtdw/storage.hpp"
#include "rtdw/types.hpp"

namespace rtdw::harness {

// Intentionally naive full-scan grouping/aggregation used as ground truth for
// the query engine across all routes. Shares the data types but none of the
// scan/filter/merge machinery.
query::ResultSet oracle_aggregate(const std::vector<FactRow>& visible_rows,
                                  const query::QuerySpec& spec,
                                  const model::SchemaDef& schema,
                                  const model::DimensionCatalog& dims);

// Materializes the rows a query at this freshness level should see.
std::vector<FactRow> snapshot_rows(const storage::Snapshot& snap,
                                   const std::string& fact,
                                   query::Freshness freshness);

// Exact for Sum/Count/Min/Max; Avg within avg_rel_tol relative.
bool results_equal(const query::ResultSet& a, const query::ResultSet& b,
                   const query::QuerySpec& spec, double avg_rel_tol = 1e-9,
                   std::string* why = nullptr);

}  // namespace rtdw::harness
