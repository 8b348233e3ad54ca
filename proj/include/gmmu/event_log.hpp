#pragma once

#include <cstdint>
#include <vector>

#include "gmmu/types.hpp"

namespace gmmu {

enum class LogKind : std::uint8_t {
  WalkLaunched,  // a = walker slot, flag = 1 if it waited in the queue
  WalkFinished,  // a = walker slot
  WalkQueued,
  CacheAccess,   // depth, flag = tag hit, a = 1 if bypassed
  DramService,   // depth, flag = queue, a = latency, b = completion
  MshrSample,    // a = stalled warps on one live shared-TLB miss
  SampleTick,    // a = live misses, b = active + queued walks
  L2TlbProbe,    // flag = hit
};

struct LoggedEvent {
  Cycle t = 0;
  LogKind kind = LogKind::WalkLaunched;
  std::uint8_t app = 0;
  std::uint8_t depth = 0;
  std::uint8_t flag = 0;
  std::uint32_t a = 0;
  std::uint64_t b = 0;
  bool operator==(const LoggedEvent&) const = default;
};

// Append-only record of what the engine did, for recomputing statistics in
// tests. Disabled unless SimConfig::record_events is set.
class EventLog {
 public:
  void enable(bool on) { on_ = on; }
  bool enabled() const { return on_; }
  void add(const LoggedEvent& e) {
    if (on_) events_.push_back(e);
  }
  const std::vector<LoggedEvent>& events() const { return events_; }

 private:
  bool on_ = false;
  std::vector<LoggedEvent> events_;
};

}  // namespace gmmu
