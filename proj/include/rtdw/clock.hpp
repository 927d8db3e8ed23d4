#pragma once

#include <atomic>
#include <chrono>

#include "rtdw/types.hpp"

namespace rtdw {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Tick now() const = 0;
};

// Deterministic clock advanced explicitly by the driver. Never goes backwards.
class SimulatedClock final : public Clock {
 public:
  Tick now() const override { return t_.load(std::memory_order_acquire); }

  void advance_to(Tick t) {
    Tick cur = t_.load(std::memory_order_relaxed);
    while (t > cur &&
           !t_.compare_exchange_weak(cur, t, std::memory_order_release)) {
    }
  }

  void advance(Tick d) { advance_to(now() + d); }

 private:
  std::atomic<Tick> t_{0};
};

// Microseconds since construction.
class WallClock final : public Clock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}

  Tick now() const override {
    auto d = std::chrono::steady_clock::now() - start_;
    return std::chrono::duration_cast<std::chrono::microseconds>(d).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace rtdw
