#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gmmu/lru_array.hpp"
#include "gmmu/types.hpp"

namespace gmmu {

inline constexpr std::size_t kRequestClasses = 8;  // walk_depth 0..7

struct CacheGeometry {
  std::uint64_t bytes = 2ULL << 20;
  std::size_t ways = 16;
  std::uint64_t line_bytes = 128;
  std::size_t banks = 16;  // 2 per memory partition
  Cycle hit_latency = 10;

  std::size_t sets() const {
    return static_cast<std::size_t>(bytes / line_bytes / static_cast<std::uint64_t>(ways));
  }
};

// Tag-only LRU store; data values are never modeled.
class CacheArray {
 public:
  explicit CacheArray(const CacheGeometry& geometry);

  std::size_t set_of(std::uint64_t line) const { return static_cast<std::size_t>(line % sets_); }
  // Refreshes LRU on hit.
  bool access(std::uint64_t line) { return store_.lookup(set_of(line), line) != nullptr; }
  bool contains(std::uint64_t line) const { return store_.find(set_of(line), line) != nullptr; }
  // Returns the evicted line, if any. Victims come from [way_begin, way_end).
  std::optional<std::uint64_t> fill(std::uint64_t line, std::size_t way_begin = 0,
                                    std::size_t way_end = SIZE_MAX);
  std::size_t ways() const { return store_.ways(); }
  std::size_t sets() const { return sets_; }
  // Sorted list of resident lines.
  std::vector<std::uint64_t> contents() const;

 private:
  std::size_t sets_;
  SetAssocLru<std::uint64_t, char> store_;
};

struct ClassCounters {
  std::uint64_t hits = 0;
  std::uint64_t accesses = 0;

  double hit_rate() const {
    return accesses ? static_cast<double>(hits) / static_cast<double>(accesses) : 0.0;
  }
  bool operator==(const ClassCounters&) const = default;
};

// Per-class hit/access counts gathered over one epoch.
struct BypassStats {
  std::array<ClassCounters, kRequestClasses> classes{};

  void record(std::uint8_t walk_depth, bool hit) {
    auto& c = classes[walk_depth & 7];
    ++c.accesses;
    c.hits += hit ? 1 : 0;
  }
  void reset() { classes = {}; }
};

// Decides which walk depths skip the cache, using the previous epoch's rates.
class BypassPolicy {
 public:
  explicit BypassPolicy(bool enabled = false, std::uint64_t min_samples = 32)
      : enabled_(enabled), min_samples_(min_samples) {}

  bool enabled() const { return enabled_; }
  bool should_bypass(std::uint8_t walk_depth) const {
    return enabled_ && walk_depth != 0 && decisions_[walk_depth & 7];
  }
  // Depth d bypasses iff its hit rate fell below the data-request rate.
  // Classes with too few samples keep their prior decision.
  void refresh(const BypassStats& epoch);
  const std::array<bool, kRequestClasses>& decisions() const { return decisions_; }

 private:
  bool enabled_;
  std::uint64_t min_samples_;
  std::array<bool, kRequestClasses> decisions_{};
};

// Stateless form of the rule, for callers holding their own stats.
bool should_bypass(const MemoryRequest& req, const BypassStats& previous_epoch,
                   std::uint64_t min_samples = 32, bool prior_decision = false);

enum class CacheOutcome {
  Hit,           // data ready at `ready`
  MissToDram,    // caller sends `req` to DRAM at `ready`; fills on return
  MergedMiss,    // piggybacks on an in-flight fill of the same line
  BypassToDram,  // walk request skipping the cache; never fills
  WriteThrough,  // writes go to DRAM without allocating
};

struct CacheAccess {
  CacheOutcome outcome = CacheOutcome::Hit;
  Cycle ready = 0;
  bool tag_hit = false;
};

struct CacheStats {
  std::array<ClassCounters, kRequestClasses> classes{};
  std::array<std::uint64_t, kRequestClasses> bypassed{};
  std::uint64_t merged = 0;
  std::uint64_t bank_stall_cycles = 0;
  bool operator==(const CacheStats&) const = default;
};

// Optional static split: application i may only allocate into its way range.
struct WayPartition {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
};

// Shared L2 data cache with banked single-ported access and MSHR merging.
class L2Cache {
 public:
  L2Cache(const CacheGeometry& geometry, BypassPolicy policy,
          std::optional<WayPartition> partition = std::nullopt);

  std::uint64_t line_of(PhysicalAddress pa) const { return pa.value / geometry_.line_bytes; }

  // Tag check happens at arrival; bank contention delays the response.
  CacheAccess access(std::uint32_t request_id, const MemoryRequest& req, std::size_t app,
                     Cycle now);
  // DRAM returned the line fetched by a MissToDram; fills (honoring the way
  // partition) and hands back every merged waiter.
  std::vector<std::uint32_t> complete_fill(std::uint64_t line, std::size_t app);

  // Epoch boundary: refresh bypass decisions and clear epoch stats.
  void epoch_refresh();

  const CacheArray& array() const { return array_; }
  const BypassPolicy& policy() const { return policy_; }
  const BypassStats& epoch_stats() const { return epoch_; }
  const CacheStats& stats() const { return stats_; }
  std::size_t inflight_lines() const { return inflight_.size(); }
  const CacheGeometry& geometry() const { return geometry_; }

 private:
  Cycle reserve_bank(std::uint64_t line, Cycle now);

  CacheGeometry geometry_;
  CacheArray array_;
  BypassPolicy policy_;
  std::optional<WayPartition> partition_;
  std::vector<Cycle> bank_free_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> inflight_;
  BypassStats epoch_;
  CacheStats stats_;
};

}  // namespace gmmu
