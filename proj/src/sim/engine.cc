#include "vssd/sim/engine.hh"

#include <unordered_map>
#include <utility>

#include "vssd/util/fault.hh"

namespace vssd::sim {

EventId Engine::schedule_at(SimTime fire_at, Callback payload) {
  if (fire_at < now_) {
    sim_fault("schedule in the past: fire_at=", fire_at, " now=", now_);
  }
  if (fire_at >= kMaxSimTime) {
    sim_fault("SimTime overflow guard tripped: fire_at=", fire_at);
  }
  const EventId id = next_id_++;
  queue_.push(Entry{fire_at, next_sequence_++, id});
  payloads_.emplace(id, std::move(payload));
  ++pending_;
  return id;
}

bool Engine::cancel(EventId id) {
  auto it = payloads_.find(id);
  if (it == payloads_.end()) {
    return false;
  }
  // The heap entry stays behind as a tombstone; advance() skips it.
  payloads_.erase(it);
  --pending_;
  ++cancelled_;
  return true;
}

std::optional<FiredEvent> Engine::advance() {
  while (!queue_.empty()) {
    Entry top = queue_.top();
    queue_.pop();
    auto it = payloads_.find(top.id);
    if (it == payloads_.end()) {
      continue;  // cancelled
    }
    FiredEvent ev{top.id, top.fire_at, std::move(it->second)};
    payloads_.erase(it);
    now_ = top.fire_at;
    --pending_;
    ++fired_;
    return ev;
  }
  return std::nullopt;
}

bool Engine::step() {
  auto ev = advance();
  if (!ev) {
    return false;
  }
  ev->payload();
  return true;
}

void Engine::run() {
  while (step()) {
  }
}

void Engine::run_until(SimTime limit) {
  while (!queue_.empty()) {
    // Peek past tombstones without popping live events.
    Entry top = queue_.top();
    if (payloads_.find(top.id) == payloads_.end()) {
      queue_.pop();
      continue;
    }
    if (top.fire_at > limit) {
      return;
    }
    step();
  }
}

}  // namespace vssd::sim
