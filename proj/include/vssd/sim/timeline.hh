#pragma once

#include <deque>
#include <functional>

#include "vssd/sim/engine.hh"
#include "vssd/sim/time.hh"

namespace vssd::sim {

/// A serialized resource (link direction, controller buffer, ISR path):
/// requests are granted FIFO, one occupancy at a time.
class Timeline {
 public:
  explicit Timeline(Engine& engine) : engine_(engine) {}

  void request(SimTime duration, std::function<void(SimTime, SimTime)> cb) {
    if (busy_) {
      waiting_.emplace_back(duration, std::move(cb));
      return;
    }
    grant(duration, std::move(cb));
  }

  /// Hold the resource for `duration`; `on_end` runs when the occupancy
  /// completes.
  void occupy(SimTime duration, std::function<void()> on_end) {
    request(duration, [this, on_end = std::move(on_end)](SimTime,
                                                         SimTime end) mutable {
      engine_.schedule_at(end, std::move(on_end));
    });
  }

  std::uint64_t grants() const { return grants_; }
  SimTime busy_total() const { return busy_total_; }

 private:
  void grant(SimTime duration, std::function<void(SimTime, SimTime)> cb) {
    busy_ = true;
    const SimTime start = engine_.now();
    const SimTime end = start + duration;
    busy_total_ += duration;
    ++grants_;
    engine_.schedule_at(end, [this] { release(); });
    cb(start, end);
  }

  void release() {
    if (waiting_.empty()) {
      busy_ = false;
      return;
    }
    auto [duration, cb] = std::move(waiting_.front());
    waiting_.pop_front();
    grant(duration, std::move(cb));
  }

  Engine& engine_;
  bool busy_ = false;
  std::deque<std::pair<SimTime, std::function<void(SimTime, SimTime)>>> waiting_;
  std::uint64_t grants_ = 0;
  SimTime busy_total_ = 0;
};

/// Link/bus occupancy of `bytes` at `bytes_per_sec`, floor-rounded ps.
inline SimTime transfer_time(std::uint64_t bytes, std::uint64_t bytes_per_sec) {
  if (bytes == 0 || bytes_per_sec == 0) {
    return 0;
  }
  const unsigned __int128 ps =
      static_cast<unsigned __int128>(bytes) * 1'000'000'000'000ull /
      bytes_per_sec;
  return static_cast<SimTime>(ps);
}

}  // namespace vssd::sim
