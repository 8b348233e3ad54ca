#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_set>
#include <variant>
#include <vector>

#include "gmmu/addressing.hpp"
#include "gmmu/counters.hpp"
#include "gmmu/lru_array.hpp"
#include "gmmu/types.hpp"

namespace gmmu {

// One dependent page-table read the walker wants performed.
struct LevelRequest {
  std::uint32_t slot = 0;
  int level = 1;
  std::uint8_t walk_depth = 1;
  Pfn table = 0;
  unsigned index = 0;
  PhysicalAddress entry;
};

struct WalkSlot {
  PageKey key;
  std::size_t app = 0;
  int current_level = 1;
  Pfn table = 0;
  bool active = false;
  Cycle started = 0;
};

struct WalkDone {
  PageKey key;
  std::size_t app = 0;
  Pfn pfn = 0;
  // A queued walk that took over the freed slot, if any.
  std::optional<LevelRequest> next_walk;
};

enum class WalkStart { Started, Backpressure, Joined };

struct WalkStartResult {
  WalkStart status = WalkStart::Started;
  std::optional<LevelRequest> request;
};

using ConcurrentWalkCounter = SaturatingCounter<6>;

// Shared multi-threaded walker. Slots advance strictly level 1 -> 4; misses
// beyond the thread limit wait in one global FIFO.
class PageWalker {
 public:
  // `tables[i]` is application i's page table; the walker only reads it.
  PageWalker(std::size_t threads, std::vector<const PageTable*> tables);

  WalkStartResult start_walk(PageKey key, std::size_t app, Cycle now);
  // Reads the entry the slot's pending request fetched. Throws Unmapped.
  std::variant<LevelRequest, WalkDone> on_level_complete(std::uint32_t slot, Cycle now);

  std::size_t threads() const { return slots_.size(); }
  std::size_t active() const { return active_; }
  std::size_t queued() const { return pending_.size(); }
  std::size_t active_for(std::size_t app) const { return app_active_[app]; }
  std::size_t queued_for(std::size_t app) const { return app_queued_[app]; }
  const WalkSlot& slot(std::uint32_t id) const { return slots_[id]; }
  bool in_progress(PageKey key) const { return keys_.count(key) != 0; }

  // Max of active + queued walks per application since the last reset.
  const ConcurrentWalkCounter& concurrent(std::size_t app) const { return app_max_[app]; }
  void reset_epoch_counters();
  std::size_t max_active_observed() const { return max_active_; }

 private:
  struct Pending {
    PageKey key;
    std::size_t app;
  };

  LevelRequest launch(std::uint32_t slot, PageKey key, std::size_t app, Cycle now);
  LevelRequest make_request(std::uint32_t slot) const;
  void note_occupancy(std::size_t app);

  std::vector<WalkSlot> slots_;
  std::vector<std::uint32_t> free_slots_;
  std::deque<Pending> pending_;
  std::unordered_set<PageKey> keys_;
  std::vector<const PageTable*> tables_;
  std::vector<std::size_t> app_active_;
  std::vector<std::size_t> app_queued_;
  std::vector<ConcurrentWalkCounter> app_max_;
  std::size_t active_ = 0;
  std::size_t max_active_ = 0;
};

struct PwcGeometry {
  std::size_t entries = 1024;
  std::size_t ways = 16;
};

// Caches intermediate (and leaf) page-table entries for the walker.
class PageWalkCache {
 public:
  explicit PageWalkCache(PwcGeometry geometry = {});

  std::optional<Pfn> probe(Asid asid, int level, Pfn table, unsigned index);
  void fill(Asid asid, int level, Pfn table, unsigned index, Pfn next);
  void flush_asid(Asid asid);

  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  struct Key {
    Asid asid;
    std::uint8_t level = 0;
    Pfn table = 0;
    unsigned index = 0;
    bool operator==(const Key&) const = default;
  };

  std::size_t set_of(Pfn table, unsigned index) const;

  SetAssocLru<Key, Pfn> store_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

}  // namespace gmmu
