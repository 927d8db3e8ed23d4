#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "rtdw/query.hpp"
#include "rtdw/types.hpp"

namespace rtdw::alerting {

struct AlertPredicate {
  enum class Kind { Gt, Lt, Ge, Le, Crosses };
  Kind kind = Kind::Gt;
  double threshold = 0;

  static AlertPredicate from_op(const std::string& op, double threshold);
  std::string op_text() const;
};

struct CycleTrigger {
  Tick period = 1;  // from the configured ladder
};

struct OnEventTrigger {
  std::string fact;
  Tick window = 1;  // dedup window, same ladder
};

struct AlertRule {
  std::string rule_id;
  query::QuerySpec spec;  // scalar aggregate: no group_by
  AlertPredicate predicate;
  std::variant<CycleTrigger, OnEventTrigger> trigger;

  Tick window() const;
};

struct AlertEvent {
  std::string rule_id;
  Tick fired_at = 0;
  double observed_value = 0;
  double threshold = 0;
  Epoch epoch = 0;
  std::int64_t cycle_index = 0;  // dedup key = (rule_id, cycle_index)
};

struct AlertStats {
  std::uint64_t fired = 0;
  std::uint64_t deduped = 0;
  std::uint64_t skipped_overlap = 0;
  std::uint64_t evaluation_failures = 0;
};

class AlertSink {
 public:
  virtual ~AlertSink() = default;
  // false = sink unavailable; the event stays queued.
  virtual bool deliver(const AlertEvent& event) = 0;
};

class CollectingSink final : public AlertSink {
 public:
  bool deliver(const AlertEvent& event) override {
    events.push_back(event);
    return true;
  }
  std::vector<AlertEvent> events;
};

// Record-per-line structured text sink.
class FileSink final : public AlertSink {
 public:
  explicit FileSink(std::string path) : path_(std::move(path)) {}
  bool deliver(const AlertEvent& event) override;

 private:
  std::string path_;
};

// Evaluates threshold rules over scalar aggregate queries on a cycle schedule
// or on commit events, with one-alert-per-cycle dedup and skip-and-count
// overlap protection.
class AlertEngine {
 public:
  using Executor = std::function<query::ResultSet(const query::QuerySpec&)>;

  explicit AlertEngine(Executor executor,
                       std::vector<Tick> ladder = {1, 5, 15, 30});

  // Throws DuplicateRuleId / GroupedSpecNotScalar / PeriodNotInLadder.
  std::string register_rule(AlertRule rule);
  void remove_rule(const std::string& rule_id);  // UnknownRule
  std::size_t rule_count() const;

  // Evaluates one cycle rule at `now`. Fires iff the predicate holds and no
  // event exists for this (rule, cycle) key. A still-running previous
  // evaluation skips this run and bumps skipped_overlap.
  std::optional<AlertEvent> run_cycle(const std::string& rule_id, Tick now);

  // Runs every cycle rule whose period divides `now`.
  void tick(Tick now);

  // Evaluates OnEvent rules for a committing fact; dedup over the rule's
  // current cycle window collapses event storms to at most one alert.
  std::vector<AlertEvent> on_event(const std::string& fact, Epoch epoch, Tick now);

  // Delivers queued events in firing order, exactly once per dedup key.
  // Stops early when the sink reports unavailability; remaining events stay
  // queued for the next drain.
  std::size_t drain_outbox(AlertSink& sink);
  std::size_t outbox_size() const;

  AlertStats stats(const std::string& rule_id) const;
  AlertStats total_stats() const;

 private:
  struct RuleState {
    AlertRule rule;
    std::atomic<bool> in_flight{false};
    std::optional<bool> last_above;  // crosses transition state
    std::set<std::int64_t> fired_cycles;
    AlertStats stats;
  };

  std::optional<AlertEvent> evaluate(RuleState& rs, Tick now);
  bool predicate_holds(RuleState& rs, double value) const;

  Executor executor_;
  std::vector<Tick> ladder_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<RuleState>> rules_;

  struct Pending {
    AlertEvent event;
    std::uint64_t seq = 0;
  };
  std::vector<Pending> outbox_;
  std::set<std::pair<std::string, std::int64_t>> delivered_;
  std::uint64_t seq_ = 0;
};

}  // namespace rtdw::alerting
