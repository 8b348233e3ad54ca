#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "gmmu/counters.hpp"
#include "gmmu/lru_array.hpp"
#include "gmmu/types.hpp"

namespace gmmu {

struct TlbGeometry {
  std::size_t entries = 64;
  std::size_t ways = 64;

  std::size_t sets() const { return entries / ways; }
};

struct TlbEntry {
  Asid asid;
  Vpn vpn = 0;
  Pfn pfn = 0;
  std::uint64_t lru_stamp = 0;
};

using TlbCounter = SaturatingCounter<16>;

// ASID-tagged, set-associative translation store. Set index is vpn mod sets.
class TlbArray {
 public:
  explicit TlbArray(TlbGeometry geometry);

  const TlbGeometry& geometry() const { return geometry_; }

  // Counts a hit or miss and refreshes LRU on hit.
  std::optional<Pfn> probe(PageKey key);
  // Lookup without side effects.
  std::optional<Pfn> peek(PageKey key) const;
  bool contains(PageKey key) const { return peek(key).has_value(); }
  // Returns the entry displaced to make room, if any.
  std::optional<TlbEntry> fill(PageKey key, Pfn pfn);
  bool invalidate(PageKey key);
  std::size_t invalidate_asid(Asid asid);
  void clear() { store_.clear(); }
  std::size_t size() const { return store_.size(); }
  std::vector<TlbEntry> entries() const;

  const TlbCounter& hit_counter() const { return hits_; }
  const TlbCounter& miss_counter() const { return misses_; }
  void reset_counters() {
    hits_.reset();
    misses_.reset();
  }

 private:
  std::size_t set_of(Vpn vpn) const { return static_cast<std::size_t>(vpn % sets_); }

  TlbGeometry geometry_;
  std::size_t sets_;
  SetAssocLru<std::uint64_t, Pfn> store_;
  TlbCounter hits_;
  TlbCounter misses_;
};

using MaxWarpsCounter = SaturatingCounter<6>;

struct Mshr {
  PageKey key;
  std::vector<WarpId> stalled_warps;
  MaxWarpsCounter max_warps_observed;
  // Warp whose miss opened this entry; its token decides the L2 fill target.
  WarpId origin_warp = 0;
  // Shared-TLB entries remember which cores' L1 MSHRs wait on them.
  std::vector<CoreId> waiting_cores;
  Cycle allocated = 0;
  // L1 entries: the miss has reached a shared-TLB MSHR.
  bool forwarded = false;

  void add_warp(WarpId w) {
    stalled_warps.push_back(w);
    max_warps_observed.observe_max(stalled_warps.size());
  }
};

// One entry per in-flight (asid, vpn). Iteration order is insertion order.
class MshrTable {
 public:
  Mshr* find(PageKey key);
  const Mshr* find(PageKey key) const;
  // Returns the entry and whether it was created by this call.
  std::pair<Mshr*, bool> allocate_or_join(PageKey key, WarpId warp, Cycle now);
  std::optional<Mshr> release(PageKey key);
  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }
  std::size_t stalled_warps() const;

  template <class F>
  void for_each(F&& f) const {
    for (const auto& slot : slots_) {
      if (slot) f(*slot);
    }
  }

 private:
  std::vector<std::optional<Mshr>> slots_;
  std::vector<std::size_t> free_;
  std::unordered_map<PageKey, std::size_t> index_;
};

struct L1ProbeResult {
  bool hit = false;
  Pfn pfn = 0;
  // Miss opened a fresh MSHR, so a request must go to the shared TLB.
  bool new_mshr = false;
};

// Private per-core TLB (64-entry fully associative by default).
class L1Tlb {
 public:
  explicit L1Tlb(TlbGeometry geometry = {64, 64});

  L1ProbeResult probe(Asid asid, Vpn vpn, WarpId warp, Cycle now);
  // Installs the translation and releases the warps stalled on it.
  std::vector<WarpId> fill(Asid asid, Vpn vpn, Pfn pfn);
  // Requires every in-flight translation of this core to have drained.
  void flush();

  TlbArray& array() { return array_; }
  const TlbArray& array() const { return array_; }
  MshrTable& mshrs() { return mshrs_; }
  const MshrTable& mshrs() const { return mshrs_; }

 private:
  TlbArray array_;
  MshrTable mshrs_;
};

enum class HitSource { Main, BypassCache };
enum class FillTarget { Main, BypassCache, Dropped };

struct L2ProbeResult {
  bool hit = false;
  Pfn pfn = 0;
  HitSource source = HitSource::Main;
};

struct SharedTlbConfig {
  TlbGeometry main{512, 16};
  std::size_t bypass_entries = 32;
  bool bypass_cache_enabled = false;
  std::size_t num_cores = 30;
};

// Shared L2 TLB with its fill-bypass cache and MSHRs.
class SharedTlb {
 public:
  explicit SharedTlb(const SharedTlbConfig& cfg);

  // Tags of the main array and bypass cache are probed in parallel; a hit in
  // either counts as an L2 hit for `core`.
  L2ProbeResult probe(Asid asid, Vpn vpn, CoreId core);
  // Token holders fill the main array; everyone else fills the bypass cache
  // (or nothing if it is disabled).
  FillTarget fill(Asid asid, Vpn vpn, Pfn pfn, bool warp_has_token);
  void flush_asid(Asid asid);

  bool bypass_cache_enabled() const { return bypass_enabled_; }
  const TlbArray& main() const { return main_; }
  const TlbArray& bypass_cache() const { return bypass_; }
  MshrTable& mshrs() { return mshrs_; }
  const MshrTable& mshrs() const { return mshrs_; }

  const TlbCounter& core_hits(CoreId core) const { return core_hits_[core]; }
  const TlbCounter& core_misses(CoreId core) const { return core_misses_[core]; }
  void reset_core_counters();

 private:
  TlbArray main_;
  TlbArray bypass_;
  bool bypass_enabled_;
  MshrTable mshrs_;
  std::vector<TlbCounter> core_hits_;
  std::vector<TlbCounter> core_misses_;
};

// Flushes on an address-space switch: the core's L1 TLB, then every shared
// entry tagged with the outgoing ASID (bypass cache included). Throws
// std::logic_error while the core still has translations in flight.
void flush_core(L1Tlb& l1, SharedTlb& shared, Asid outgoing);

using TokenCount = SaturatingCounter<15>;

struct TokenParams {
  double initial_tokens = 0.8;
  // Hill-climb step as a fraction of an application's warps (0 freezes the
  // count after the first epoch).
  double step_fraction = 1.0 / 16.0;
  int initial_direction = -1;
};

struct AppTokenState {
  Asid asid;
  // Warps in (core id, warp id) order; token hand-out walks this list.
  std::vector<WarpId> warps;
  TokenCount token_count;
  int direction = -1;
  std::uint64_t epoch_hits = 0;
  std::uint64_t epoch_misses = 0;
  double previous_miss_rate = 0.0;
  std::size_t cursor = 0;
  std::size_t step = 0;
};

class TokenController {
 public:
  // `app_warps[i]` lists application i's warps in (core, warp) order;
  // `total_warps` bounds the global warp id space.
  TokenController(const TokenParams& params, std::vector<std::vector<WarpId>> app_warps,
                  std::vector<Asid> asids, std::size_t total_warps);

  void add_epoch_counts(std::size_t app, std::uint64_t hits, std::uint64_t misses);
  // End-of-epoch adjustment followed by reassignment. `epoch_index` is the
  // epoch that just ended (0 = first).
  void epoch_update(std::uint64_t epoch_index);
  void assign_tokens();

  bool has_token(WarpId warp) const { return holds_[warp] != 0; }
  const AppTokenState& app(std::size_t i) const { return apps_[i]; }
  std::size_t num_apps() const { return apps_.size(); }
  std::size_t holders(std::size_t app) const;

  // Test hooks for driving the hill-climb directly.
  AppTokenState& mutable_app(std::size_t i) { return apps_[i]; }

 private:
  TokenParams params_;
  std::vector<AppTokenState> apps_;
  std::vector<std::uint8_t> holds_;
};

}  // namespace gmmu
