#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

#include "vssd/sim/time.hh"

namespace vssd::sim {

using EventId = std::uint64_t;
using Callback = std::function<void()>;

struct FiredEvent {
  EventId id = 0;
  SimTime at = 0;
  Callback payload;
};

/// Deterministic discrete-event core. One global virtual clock, one
/// priority queue ordered by (fire_at, insertion sequence). Everything
/// else in the simulator schedules against this; nothing reads wall
/// clock time. Strictly single-threaded.
class Engine {
 public:
  SimTime now() const { return now_; }

  /// Enqueue an event. Scheduling in the past or beyond the 2^63 guard
  /// is a logic fault.
  EventId schedule_at(SimTime fire_at, Callback payload);

  EventId schedule_after(SimTime delay, Callback payload) {
    return schedule_at(now_ + delay, std::move(payload));
  }

  /// Remove a pending event. Returns false if the id is unknown,
  /// already fired, or already cancelled.
  bool cancel(EventId id);

  /// Pop the minimal (fire_at, sequence) event and advance the clock to
  /// its fire time. Does not invoke the payload. Empty when exhausted.
  std::optional<FiredEvent> advance();

  /// advance() + invoke. Returns false when the queue is empty.
  bool step();

  /// Drain the queue.
  void run();

  /// Drain until the clock would pass `limit` (events at exactly `limit`
  /// still fire).
  void run_until(SimTime limit);

  bool empty() const { return pending_ == 0; }
  std::uint64_t pending() const { return pending_; }
  std::uint64_t scheduled_total() const { return next_id_ - 1; }
  std::uint64_t fired_total() const { return fired_; }
  std::uint64_t cancelled_total() const { return cancelled_; }

 private:
  struct Entry {
    SimTime fire_at;
    std::uint64_t sequence;
    EventId id;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.fire_at != b.fire_at) {
        return a.fire_at > b.fire_at;
      }
      return a.sequence > b.sequence;
    }
  };

  SimTime now_ = 0;
  EventId next_id_ = 1;
  std::uint64_t next_sequence_ = 1;
  std::uint64_t pending_ = 0;
  std::uint64_t fired_ = 0;
  std::uint64_t cancelled_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  // Payloads are kept out of the heap so cancel() can release them early.
  std::unordered_map<EventId, Callback> payloads_;
};

}  // namespace vssd::sim
