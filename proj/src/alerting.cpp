#include "rtdw/alerting.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "rtdw/errors.hpp"

namespace rtdw::alerting {

AlertPredicate AlertPredicate::from_op(const std::string& op, double threshold) {
  AlertPredicate p;
  p.threshold = threshold;
  if (op == ">") {
    p.kind = Kind::Gt;
  } else if (op == "<") {
    p.kind = Kind::Lt;
  } else if (op == ">=") {
    p.kind = Kind::Ge;
  } else if (op == "<=") {
    p.kind = Kind::Le;
  } else if (op == "crosses") {
    p.kind = Kind::Crosses;
  } else {
    throw ParseError("unknown alert predicate '" + op + "'");
  }
  return p;
}

std::string AlertPredicate::op_text() const {
  switch (kind) {
    case Kind::Gt: return ">";
    case Kind::Lt: return "<";
    case Kind::Ge: return ">=";
    case Kind::Le: return "<=";
    case Kind::Crosses: return "crosses";
  }
  return "?";
}

Tick AlertRule::window() const {
  if (const auto* c = std::get_if<CycleTrigger>(&trigger)) return c->period;
  return std::get<OnEventTrigger>(trigger).window;
}

bool FileSink::deliver(const AlertEvent& event) {
  std::ofstream out(path_, std::ios::app);
  if (!out) return false;
  nlohmann::json j;
  j["rule_id"] = event.rule_id;
  j["fired_at"] = event.fired_at;
  j["observed_value"] = event.observed_value;
  j["threshold"] = event.threshold;
  j["epoch"] = event.epoch;
  j["dedup_key"] = event.rule_id + "/" + std::to_string(event.cycle_index);
  out << j.dump() << "\n";
  return static_cast<bool>(out);
}

AlertEngine::AlertEngine(Executor executor, std::vector<Tick> ladder)
    : executor_(std::move(executor)), ladder_(std::move(ladder)) {}

std::string AlertEngine::register_rule(AlertRule rule) {
  if (!rule.spec.group_by.empty()) {
    throw GroupedSpecNotScalar(rule.rule_id);
  }
  if (std::find(ladder_.begin(), ladder_.end(), rule.window()) == ladder_.end()) {
    throw PeriodNotInLadder(rule.rule_id + ": period " +
                            std::to_string(rule.window()));
  }
  // Threshold comparison needs real-time data.
  rule.spec.freshness = query::Freshness::RealTime;
  std::lock_guard lk(mu_);
  if (rules_.count(rule.rule_id)) throw DuplicateRuleId(rule.rule_id);
  auto rs = std::make_shared<RuleState>();
  std::string id = rule.rule_id;
  rs->rule = std::move(rule);
  rules_.emplace(id, std::move(rs));
  return id;
}

void AlertEngine::remove_rule(const std::string& rule_id) {
  std::lock_guard lk(mu_);
  if (rules_.erase(rule_id) == 0) throw UnknownRule(rule_id);
}

std::size_t AlertEngine::rule_count() const {
  std::lock_guard lk(mu_);
  return rules_.size();
}

bool AlertEngine::predicate_holds(RuleState& rs, double value) const {
  const AlertPredicate& p = rs.rule.predicate;
  switch (p.kind) {
    case AlertPredicate::Kind::Gt: return value > p.threshold;
    case AlertPredicate::Kind::Lt: return value < p.threshold;
    case AlertPredicate::Kind::Ge: return value >= p.threshold;
    case AlertPredicate::Kind::Le: return value <= p.threshold;
    case AlertPredicate::Kind::Crosses: {
      // fires only on a below->above transition between consecutive
      // evaluations; the first evaluation establishes the baseline
      const bool above = value > p.threshold;
      const bool fired = rs.last_above.has_value() && !*rs.last_above && above;
      rs.last_above = above;
      return fired;
    }
  }
  return false;
}

std::optional<AlertEvent> AlertEngine::evaluate(RuleState& rs, Tick now) {
  query::ResultSet result;
  try {
    result = executor_(rs.rule.spec);
  } catch (const std::exception&) {
    std::lock_guard lk(mu_);
    ++rs.stats.evaluation_failures;
    return std::nullopt;
  }
  auto value = result.scalar();
  bool holds;
  {
    std::lock_guard lk(mu_);
    if (!value) {
      // nothing visible: observation counts as below-threshold
      if (rs.rule.predicate.kind == AlertPredicate::Kind::Crosses) {
        rs.last_above = false;
      }
      return std::nullopt;
    }
    holds = predicate_holds(rs, *value);
    if (!holds) return std::nullopt;
    const std::int64_t cycle = now / rs.rule.window();
    if (rs.fired_cycles.count(cycle)) {
      ++rs.stats.deduped;  // same alert not sent again in the same cycle
      return std::nullopt;
    }
    rs.fired_cycles.insert(cycle);
    ++rs.stats.fired;
    AlertEvent ev;
    ev.rule_id = rs.rule.rule_id;
    ev.fired_at = now;
    ev.observed_value = *value;
    ev.threshold = rs.rule.predicate.threshold;
    ev.epoch = result.meta.epoch;
    ev.cycle_index = cycle;
    outbox_.push_back({ev, seq_++});
    return ev;
  }
}

std::optional<AlertEvent> AlertEngine::run_cycle(const std::string& rule_id, Tick now) {
  std::shared_ptr<RuleState> rs;
  {
    std::lock_guard lk(mu_);
    auto it = rules_.find(rule_id);
    if (it == rules_.end()) throw UnknownRule(rule_id);
    rs = it->second;
  }
  if (rs->in_flight.exchange(true)) {
    // previous evaluation still running: skip, never queue a pile-up
    std::lock_guard lk(mu_);
    ++rs->stats.skipped_overlap;
    return std::nullopt;
  }
  std::optional<AlertEvent> ev;
  try {
    ev = evaluate(*rs, now);
  } catch (...) {
    rs->in_flight.store(false);
    throw;
  }
  rs->in_flight.store(false);
  return ev;
}

void AlertEngine::tick(Tick now) {
  std::vector<std::string> due;
  {
    std::lock_guard lk(mu_);
    for (const auto& [id, rs] : rules_) {
      if (const auto* c = std::get_if<CycleTrigger>(&rs->rule.trigger)) {
        if (now > 0 && now % c->period == 0) due.push_back(id);
      }
    }
  }
  for (const auto& id : due) run_cycle(id, now);
}

std::vector<AlertEvent> AlertEngine::on_event(const std::string& fact, Epoch epoch,
                                              Tick now) {
  (void)epoch;
  std::vector<std::shared_ptr<RuleState>> matching;
  {
    std::lock_guard lk(mu_);
    for (const auto& [id, rs] : rules_) {
      const auto* t = std::get_if<OnEventTrigger>(&rs->rule.trigger);
      if (t && t->fact == fact) matching.push_back(rs);
    }
  }
  std::vector<AlertEvent> fired;
  for (auto& rs : matching) {
    {
      // storm short-circuit: this window already fired
      std::lock_guard lk(mu_);
      const std::int64_t cycle = now / rs->rule.window();
      if (rs->fired_cycles.count(cycle)) continue;
    }
    if (rs->in_flight.exchange(true)) {
      std::lock_guard lk(mu_);
      ++rs->stats.skipped_overlap;
      continue;
    }
    std::optional<AlertEvent> ev;
    try {
      ev = evaluate(*rs, now);
    } catch (...) {
      rs->in_flight.store(false);
      throw;
    }
    rs->in_flight.store(false);
    if (ev) fired.push_back(*ev);
  }
  return fired;
}

std::size_t AlertEngine::drain_outbox(AlertSink& sink) {
  std::lock_guard lk(mu_);
  std::stable_sort(outbox_.begin(), outbox_.end(),
                   [](const Pending& a, const Pending& b) {
                     if (a.event.fired_at != b.event.fired_at) {
                       return a.event.fired_at < b.event.fired_at;
                     }
                     return a.seq < b.seq;
                   });
  std::size_t delivered = 0;
  std::size_t i = 0;
  for (; i < outbox_.size(); ++i) {
    const auto key = std::make_pair(outbox_[i].event.rule_id,
                                    outbox_[i].event.cycle_index);
    if (delivered_.count(key)) continue;  // exactly once per dedup key
    if (!sink.deliver(outbox_[i].event)) break;
    delivered_.insert(key);
    ++delivered;
  }
  outbox_.erase(outbox_.begin(), outbox_.begin() + static_cast<std::ptrdiff_t>(i));
  return delivered;
}

std::size_t AlertEngine::outbox_size() const {
  std::lock_guard lk(mu_);
  return outbox_.size();
}

AlertStats AlertEngine::stats(const std::string& rule_id) const {
  std::lock_guard lk(mu_);
  auto it = rules_.find(rule_id);
  if (it == rules_.end()) throw UnknownRule(rule_id);
  return it->second->stats;
}

AlertStats AlertEngine::total_stats() const {
  std::lock_guard lk(mu_);
  AlertStats total;
  for (const auto& [id, rs] : rules_) {
    total.fired += rs->stats.fired;
    total.deduped += rs->stats.deduped;
    total.skipped_overlap += rs->stats.skipped_overlap;
    total.evaluation_failures += rs->stats.evaluation_failures;
  }
  return total;
}

}  // namespace rtdw::alerting
