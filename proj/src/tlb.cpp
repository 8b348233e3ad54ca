#include "gmmu/tlb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gmmu/errors.hpp"

namespace gmmu {

namespace {

PageKey unpack(std::uint64_t packed) {
  return PageKey{Asid{static_cast<std::uint8_t>(packed >> 56)}, packed & ((1ULL << 56) - 1)};
}

}  // namespace

TlbArray::TlbArray(TlbGeometry geometry)
    : geometry_(geometry),
      sets_(geometry.ways ? geometry.entries / geometry.ways : 0),
      store_(sets_, geometry.ways) {
  if (geometry.ways == 0 || geometry.entries % geometry.ways != 0) {
    throw std::invalid_argument("TlbArray: entries must be a multiple of ways");
  }
}

std::optional<Pfn> TlbArray::probe(PageKey key) {
  if (Pfn* pfn = store_.lookup(set_of(key.vpn), key.packed())) {
    hits_.increment();
    return *pfn;
  }
  misses_.increment();
  return std::nullopt;
}

std::optional<Pfn> TlbArray::peek(PageKey key) const {
  if (const auto* way = store_.find(set_of(key.vpn), key.packed())) return way->value;
  return std::nullopt;
}

std::optional<TlbEntry> TlbArray::fill(PageKey key, Pfn pfn) {
  auto evicted = store_.insert(set_of(key.vpn), key.packed(), pfn);
  if (!evicted) return std::nullopt;
  const PageKey old = unpack(evicted->key);
  return TlbEntry{old.asid, old.vpn, evicted->value, 0};
}

bool TlbArray::invalidate(PageKey key) { return store_.erase(set_of(key.vpn), key.packed()); }

std::size_t TlbArray::invalidate_asid(Asid asid) {
  return store_.erase_if(
      [asid](std::uint64_t packed, Pfn) { return unpack(packed).asid == asid; });
}

std::vector<TlbEntry> TlbArray::entries() const {
  std::vector<TlbEntry> out;
  store_.for_each([&out](const auto& way) {
    const PageKey k = unpack(way.key);
    out.push_back(TlbEntry{k.asid, k.vpn, way.value, way.stamp});
  });
  return out;
}

Mshr* MshrTable::find(PageKey key) {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &*slots_[it->second];
}

const Mshr* MshrTable::find(PageKey key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &*slots_[it->second];
}

std::pair<Mshr*, bool> MshrTable::allocate_or_join(PageKey key, WarpId warp, Cycle now) {
  if (Mshr* m = find(key)) {
    m->add_warp(warp);
    return {m, false};
  }
  std::size_t slot;
  if (!free_.empty()) {
    slot = free_.back();
    free_.pop_back();
  } else {
    slot = slots_.size();
    slots_.emplace_back();
  }
  Mshr& m = slots_[slot].emplace();
  m.key = key;
  m.origin_warp = warp;
  m.allocated = now;
  m.add_warp(warp);
  index_.emplace(key, slot);
  return {&m, true};
}

std::optional<Mshr> MshrTable::release(PageKey key) {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  const std::size_t slot = it->second;
  index_.erase(it);
  Mshr out = std::move(*slots_[slot]);
  slots_[slot].reset();
  free_.push_back(slot);
  return std::optional<Mshr>(std::move(out));
}

std::size_t MshrTable::stalled_warps() const {
  std::size_t n = 0;
  for_each([&n](const Mshr& m) { n += m.stalled_warps.size(); });
  return n;
}

L1Tlb::L1Tlb(TlbGeometry geometry) : array_(geometry) {}

L1ProbeResult L1Tlb::probe(Asid asid, Vpn vpn, WarpId warp, Cycle now) {
  const PageKey key{asid, vpn};
  if (auto pfn = array_.probe(key)) return L1ProbeResult{true, *pfn, false};
  auto [mshr, created] = mshrs_.allocate_or_join(key, warp, now);
  (void)mshr;
  return L1ProbeResult{false, 0, created};
}

std::vector<WarpId> L1Tlb::fill(Asid asid, Vpn vpn, Pfn pfn) {
  const PageKey key{asid, vpn};
  array_.fill(key, pfn);
  auto mshr = mshrs_.release(key);
  if (!mshr) return {};
  return std::move(mshr->stalled_warps);
}

void L1Tlb::flush() {
  if (!mshrs_.empty()) throw std::logic_error("L1 TLB flush with translations in flight");
  array_.clear();
}

SharedTlb::SharedTlb(const SharedTlbConfig& cfg)
    : main_(cfg.main),
      bypass_(TlbGeometry{std::max<std::size_t>(1, cfg.bypass_entries),
                          std::max<std::size_t>(1, cfg.bypass_entries)}),
      bypass_enabled_(cfg.bypass_cache_enabled && cfg.bypass_entries > 0),
      core_hits_(cfg.num_cores),
      core_misses_(cfg.num_cores) {}

L2ProbeResult SharedTlb::probe(Asid asid, Vpn vpn, CoreId core) {
  const PageKey key{asid, vpn};
  L2ProbeResult result;
  if (auto pfn = main_.probe(key)) {
    result = L2ProbeResult{true, *pfn, HitSource::Main};
  } else if (bypass_enabled_) {
    if (auto bp = bypass_.probe(key)) result = L2ProbeResult{true, *bp, HitSource::BypassCache};
  }
  if (result.hit) {
    core_hits_[core].increment();
  } else {
    core_misses_[core].increment();
  }
  return result;
}

FillTarget SharedTlb::fill(Asid asid, Vpn vpn, Pfn pfn, bool warp_has_token) {
  const PageKey key{asid, vpn};
  if (warp_has_token) {
    bypass_.invalidate(key);
    main_.fill(key, pfn);
    return FillTarget::Main;
  }
  if (!bypass_enabled_) return FillTarget::Dropped;
  main_.invalidate(key);
  bypass_.fill(key, pfn);
  return FillTarget::BypassCache;
}

void SharedTlb::flush_asid(Asid asid) {
  main_.invalidate_asid(asid);
  bypass_.invalidate_asid(asid);
}

void SharedTlb::reset_core_counters() {
  for (auto& c : core_hits_) c.reset();
  for (auto& c : core_misses_) c.reset();
}

void flush_core(L1Tlb& l1, SharedTlb& shared, Asid outgoing) {
  l1.flush();
  shared.flush_asid(outgoing);
}

TokenController::TokenController(const TokenParams& params,
                                 std::vector<std::vector<WarpId>> app_warps,
                                 std::vector<Asid> asids, std::size_t total_warps)
    : params_(params), holds_(total_warps, 0) {
  if (app_warps.size() != asids.size()) {
    throw std::invalid_argument("TokenController: one warp list per asid required");
  }
  if (params.initial_tokens < 0.0 || params.initial_tokens > 1.0) {
    throw std::invalid_argument("TokenController: initial_tokens outside [0, 1]");
  }
  apps_.resize(app_warps.size());
  for (std::size_t i = 0; i < apps_.size(); ++i) {
    auto& app = apps_[i];
    app.asid = asids[i];
    app.warps = std::move(app_warps[i]);
    if (app.warps.size() > TokenCount::kMax) {
      throw std::invalid_argument("TokenController: token counter is 15 bits wide");
    }
    app.direction = params.initial_direction >= 0 ? 1 : -1;
    const double raw = params.step_fraction * static_cast<double>(app.warps.size());
    app.step = params.step_fraction > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(raw))
                                          : 0;
    // The first epoch performs no bypassing: everyone may fill.
    app.token_count.set(app.warps.size());
    for (WarpId w : app.warps) holds_.at(w) = 1;
  }
}

void TokenController::add_epoch_counts(std::size_t app, std::uint64_t hits,
                                       std::uint64_t misses) {
  apps_[app].epoch_hits += hits;
  apps_[app].epoch_misses += misses;
}

void TokenController::epoch_update(std::uint64_t epoch_index) {
  for (auto& app : apps_) {
    const std::uint64_t total = app.epoch_hits + app.epoch_misses;
    const double miss_rate =
        total ? static_cast<double>(app.epoch_misses) / static_cast<double>(total) : 0.0;
    const auto warps = static_cast<std::int64_t>(app.warps.size());
    if (epoch_index == 0) {
      app.token_count.set(static_cast<std::uint64_t>(
          std::floor(params_.initial_tokens * static_cast<double>(warps))));
    } else {
      // Keep climbing while the miss rate improves; a tie counts as no
      // improvement.
      if (!(miss_rate < app.previous_miss_rate)) app.direction = -app.direction;
      std::int64_t next = static_cast<std::int64_t>(app.token_count.value()) +
                          app.direction * static_cast<std::int64_t>(app.step);
      next = std::clamp<std::int64_t>(next, std::min<std::int64_t>(1, warps), warps);
      app.token_count.set(static_cast<std::uint64_t>(next));
    }
    app.previous_miss_rate = miss_rate;
    app.epoch_hits = 0;
    app.epoch_misses = 0;
  }
  assign_tokens();
}

void TokenController::assign_tokens() {
  for (auto& app : apps_) {
    const std::size_t n = app.warps.size();
    if (n == 0) continue;
    const std::size_t count = std::min<std::size_t>(app.token_count.value(), n);
    const std::size_t start = app.cursor;
    std::vector<std::uint8_t> next(n, 0);
    // Prior holders keep their token first, scanning from the cursor.
    std::size_t granted = 0;
    for (std::size_t i = 0; i < n && granted < count; ++i) {
      const std::size_t idx = (start + i) % n;
      if (holds_[app.warps[idx]]) {
        next[idx] = 1;
        ++granted;
      }
    }
    // Remainder round-robin; the cursor resumes after the last new holder.
    for (std::size_t i = 0; i < n && granted < count; ++i) {
      const std::size_t idx = (start + i) % n;
      if (!next[idx]) {
        next[idx] = 1;
        ++granted;
        app.cursor = (idx + 1) % n;
      }
    }
    for (std::size_t i = 0; i < n; ++i) holds_[app.warps[i]] = next[i];
  }
}

std::size_t TokenController::holders(std::size_t app) const {
  std::size_t n = 0;
  for (WarpId w : apps_[app].warps) n += holds_[w];
  return n;
}

}  // namespace gmmu
