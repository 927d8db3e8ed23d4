#include "rtdw/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "rtdw/errors.hpp"

namespace rtdw::harness {

namespace {

// Its own predicate evaluation, kept independent of the query engine's.
bool oracle_pred(const query::FilterPred& p, const Value& v) {
  using query::PredOp;
  switch (p.op) {
    case PredOp::Eq: return compare_values(v, p.lo) == 0;
    case PredOp::Lt: return compare_values(v, p.lo) < 0;
    case PredOp::Le: return compare_values(v, p.lo) <= 0;
    case PredOp::Gt: return compare_values(v, p.lo) > 0;
    case PredOp::Ge: return compare_values(v, p.lo) >= 0;
    case PredOp::Between:
      return compare_values(v, p.lo) >= 0 && compare_values(v, p.hi) <= 0;
    case PredOp::InSet: {
      for (const auto& s : p.set) {
        if (compare_values(v, s) == 0) return true;
      }
      return false;
    }
  }
  return false;
}

struct OracleGroup {
  std::vector<Value> keys;
  // one slot per aggregate: raw values collected, reduced at the end
  std::vector<std::vector<double>> values;
};

struct KeyLess {
  bool operator()(const std::vector<Value>& a, const std::vector<Value>& b) const {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
      const int c = compare_values(a[i], b[i]);
      if (c != 0) return c < 0;
    }
    return a.size() < b.size();
  }
};

}  // namespace

query::ResultSet oracle_aggregate(const std::vector<FactRow>& visible_rows,
                                  const query::QuerySpec& spec,
                                  const model::SchemaDef& schema,
                                  const model::DimensionCatalog& dims) {
  const model::FactTableDef& fact = schema.fact(spec.fact);

  std::map<std::vector<Value>, OracleGroup, KeyLess> groups;

  for (const FactRow& row : visible_rows) {
    bool pass = true;
    for (const auto& f : spec.filters) {
      Value v;
      if (f.on_event_time) {
        v = Value(row.event_time);
      } else {
        const int gi = fact.grain_index(f.dimension);
        if (gi < 0) throw UnknownAttribute(f.dimension + "." + f.attribute);
        v = dims.at(f.dimension)
                .attribute_of(row.dim_keys[static_cast<std::size_t>(gi)], f.attribute);
      }
      if (!oracle_pred(f, v)) {
        pass = false;
        break;
      }
    }
    if (!pass) continue;

    std::vector<Value> keys;
    for (const auto& [dim, attr] : spec.group_by) {
      const int gi = fact.grain_index(dim);
      if (gi < 0) throw UnknownAttribute(dim + "." + attr);
      keys.push_back(
          dims.at(dim).attribute_of(row.dim_keys[static_cast<std::size_t>(gi)], attr));
    }
    OracleGroup& g = groups[keys];
    if (g.values.empty()) {
      g.keys = keys;
      g.values.resize(spec.aggregates.size());
    }
    for (std::size_t i = 0; i < spec.aggregates.size(); ++i) {
      const int mi = fact.measure_index(spec.aggregates[i].measure);
      if (mi < 0) throw UnknownMeasure(spec.aggregates[i].measure);
      g.values[i].push_back(row.measures[static_cast<std::size_t>(mi)]);
    }
  }

  query::ResultSet rs;
  for (const auto& [d, a] : spec.group_by) rs.key_names.push_back(d + "." + a);
  for (const auto& a : spec.aggregates) {
    std::string n = model::aggregator_name(a.agg);
    for (auto& c : n) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    rs.agg_names.push_back(n + "(" + a.measure + ")");
  }
  for (const auto& [keys, g] : groups) {
    query::ResultRow row;
    row.keys = g.keys;
    for (std::size_t i = 0; i < spec.aggregates.size(); ++i) {
      const auto& vals = g.values[i];
      double out = 0;
      switch (spec.aggregates[i].agg) {
        case model::Aggregator::Sum:
          for (double v : vals) out += v;
          break;
        case model::Aggregator::Count:
          out = static_cast<double>(vals.size());
          break;
        case model::Aggregator::Min:
          out = *std::min_element(vals.begin(), vals.end());
          break;
        case model::Aggregator::Max:
          out = *std::max_element(vals.begin(), vals.end());
          break;
        case model::Aggregator::Avg: {
          double sum = 0;
          for (double v : vals) sum += v;
          out = sum / static_cast<double>(vals.size());
          break;
        }
      }
      row.values.push_back(out);
    }
    rs.rows.push_back(std::move(row));
  }
  return rs;
}

std::vector<FactRow> snapshot_rows(const storage::Snapshot& snap,
                                   const std::string& fact,
                                   query::Freshness freshness) {
  std::vector<FactRow> rows;
  const storage::FactVisible& vis = snap.fact(fact);
  for (const auto& seg : *vis.segments) {
    rows.insert(rows.end(), seg->rows.begin(), seg->rows.end());
  }
  if (freshness != query::Freshness::AsOfHistorical) {
    vis.realtime.for_each([&](const FactRow& r) { rows.push_back(r); });
  }
  if (freshness == query::Freshness::RealTime) {
    vis.cache.for_each([&](const FactRow& r) { rows.push_back(r); });
  }
  return rows;
}

bool results_equal(const query::ResultSet& a, const query::ResultSet& b,
                   const query::QuerySpec& spec, double avg_rel_tol,
                   std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (a.rows.size() != b.rows.size()) {
    return fail("group count " + std::to_string(a.rows.size()) + " vs " +
                std::to_string(b.rows.size()));
  }
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& ra = a.rows[i];
    const auto& rb = b.rows[i];
    if (ra.keys.size() != rb.keys.size()) return fail("key arity mismatch");
    for (std::size_t k = 0; k < ra.keys.size(); ++k) {
      if (compare_values(ra.keys[k], rb.keys[k]) != 0) {
        return fail("group key mismatch at row " + std::to_string(i));
      }
    }
    if (ra.values.size() != rb.values.size()) return fail("aggregate arity mismatch");
    for (std::size_t v = 0; v < ra.values.size(); ++v) {
      const double va = ra.values[v], vb = rb.values[v];
      if (spec.aggregates[v].agg == model::Aggregator::Avg) {
        const double denom = std::max(std::abs(va), std::abs(vb));
        if (denom > 0 && std::abs(va - vb) / denom > avg_rel_tol) {
          std::ostringstream os;
          os << "avg mismatch row " << i << ": " << va << " vs " << vb;
          return fail(os.str());
        }
      } else if (va != vb) {
        std::ostringstream os;
        os << a.agg_names[v] << " mismatch row " << i << ": " << va << " vs " << vb;
        return fail(os.str());
      }
    }
  }
  return true;
}

}  // namespace rtdw::harness
