#include "gmmu/l2cache.hpp"

#include <algorithm>
#include <stdexcept>

namespace gmmu {

CacheArray::CacheArray(const CacheGeometry& geometry)
    : sets_(geometry.sets()), store_(geometry.sets(), geometry.ways) {}

std::optional<std::uint64_t> CacheArray::fill(std::uint64_t line, std::size_t way_begin,
                                              std::size_t way_end) {
  auto evicted = store_.insert(set_of(line), line, 0, way_begin, way_end);
  if (!evicted) return std::nullopt;
  return evicted->key;
}

std::vector<std::uint64_t> CacheArray::contents() const {
  std::vector<std::uint64_t> out;
  store_.for_each([&out](const auto& way) { out.push_back(way.key); });
  std::sort(out.begin(), out.end());
  return out;
}

void BypassPolicy::refresh(const BypassStats& epoch) {
  if (!enabled_) return;
  const ClassCounters& data = epoch.classes[0];
  if (data.accesses < min_samples_) return;
  const double data_rate = data.hit_rate();
  for (std::size_t d = 1; d < kRequestClasses; ++d) {
    const ClassCounters& c = epoch.classes[d];
    if (c.accesses < min_samples_) continue;
    decisions_[d] = c.hit_rate() < data_rate;
  }
}

bool should_bypass(const MemoryRequest& req, const BypassStats& previous_epoch,
                   std::uint64_t min_samples, bool prior_decision) {
  if (req.walk_depth == 0) return false;
  const ClassCounters& data = previous_epoch.classes[0];
  const ClassCounters& mine = previous_epoch.classes[req.walk_depth & 7];
  if (data.accesses < min_samples || mine.accesses < min_samples) return prior_decision;
  return mine.hit_rate() < data.hit_rate();
}

L2Cache::L2Cache(const CacheGeometry& geometry, BypassPolicy policy,
                 std::optional<WayPartition> partition)
    : geometry_(geometry),
      array_(geometry),
      policy_(policy),
      partition_(std::move(partition)),
      bank_free_(std::max<std::size_t>(1, geometry.banks), 0) {
  if (geometry.sets() == 0) throw std::invalid_argument("L2Cache: geometry yields no sets");
}

Cycle L2Cache::reserve_bank(std::uint64_t line, Cycle now) {
  Cycle& free_at = bank_free_[line % bank_free_.size()];
  const Cycle start = std::max(now, free_at);
  stats_.bank_stall_cycles += start - now;
  free_at = start + 1;
  return start;
}

CacheAccess L2Cache::access(std::uint32_t request_id, const MemoryRequest& req, std::size_t app,
                            Cycle now) {
  (void)app;
  const std::uint64_t line = line_of(*req.paddr);
  const Cycle ready = reserve_bank(line, now) + geometry_.hit_latency;
  const std::uint8_t cls = req.walk_depth & 7;

  if (policy_.should_bypass(req.walk_depth)) {
    // Shadow tag probe keeps the epoch sample alive without touching LRU.
    const bool present = array_.contains(line);
    epoch_.record(cls, present);
    ++stats_.bypassed[cls];
    return CacheAccess{CacheOutcome::BypassToDram, ready, present};
  }

  const bool hit = array_.access(line);
  epoch_.record(cls, hit);
  ++stats_.classes[cls].accesses;
  stats_.classes[cls].hits += hit ? 1 : 0;

  if (req.is_write) return CacheAccess{CacheOutcome::WriteThrough, ready, hit};
  if (hit) return CacheAccess{CacheOutcome::Hit, ready, true};
  auto [it, fresh] = inflight_.try_emplace(line);
  if (!fresh) {
    it->second.push_back(request_id);
    ++stats_.merged;
    return CacheAccess{CacheOutcome::MergedMiss, ready, false};
  }
  return CacheAccess{CacheOutcome::MissToDram, ready, false};
}

std::vector<std::uint32_t> L2Cache::complete_fill(std::uint64_t line, std::size_t app) {
  std::size_t begin = 0;
  std::size_t end = SIZE_MAX;
  if (partition_ && app < partition_->ranges.size()) {
    std::tie(begin, end) = partition_->ranges[app];
  }
  array_.fill(line, begin, end);
  std::vector<std::uint32_t> waiters;
  if (auto it = inflight_.find(line); it != inflight_.end()) {
    waiters = std::move(it->second);
    inflight_.erase(it);
  }
  return waiters;
}

void L2Cache::epoch_refresh() {
  policy_.refresh(epoch_);
  epoch_.reset();
}

}  // namespace gmmu
