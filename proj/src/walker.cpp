#include "gmmu/walker.hpp"

#include <sstream>
#include <stdexcept>

#include "gmmu/errors.hpp"

namespace gmmu {

PageWalker::PageWalker(std::size_t threads, std::vector<const PageTable*> tables)
    : slots_(threads),
      tables_(std::move(tables)),
      app_active_(tables_.size(), 0),
      app_queued_(tables_.size(), 0),
      app_max_(tables_.size()) {
  if (threads == 0) throw std::invalid_argument("PageWalker: needs at least one thread");
  free_slots_.reserve(threads);
  for (std::size_t i = threads; i-- > 0;) free_slots_.push_back(static_cast<std::uint32_t>(i));
}

void PageWalker::note_occupancy(std::size_t app) {
  app_max_[app].observe_max(app_active_[app] + app_queued_[app]);
  max_active_ = std::max(max_active_, active_);
}

LevelRequest PageWalker::make_request(std::uint32_t id) const {
  const WalkSlot& s = slots_[id];
  LevelRequest req;
  req.slot = id;
  req.level = s.current_level;
  req.walk_depth = walk_depth_tag(s.current_level);
  req.table = s.table;
  req.index = level_index(s.key.vpn, s.current_level);
  req.entry = entry_address(req.table, req.index);
  return req;
}

LevelRequest PageWalker::launch(std::uint32_t id, PageKey key, std::size_t app, Cycle now) {
  WalkSlot& s = slots_[id];
  s.key = key;
  s.app = app;
  s.current_level = 1;
  s.table = tables_[app]->root();
  s.active = true;
  s.started = now;
  ++active_;
  ++app_active_[app];
  note_occupancy(app);
  return make_request(id);
}

WalkStartResult PageWalker::start_walk(PageKey key, std::size_t app, Cycle now) {
  if (!keys_.insert(key).second) return WalkStartResult{WalkStart::Joined, std::nullopt};
  if (free_slots_.empty()) {
    pending_.push_back(Pending{key, app});
    ++app_queued_[app];
    note_occupancy(app);
    return WalkStartResult{WalkStart::Backpressure, std::nullopt};
  }
  const std::uint32_t id = free_slots_.back();
  free_slots_.pop_back();
  return WalkStartResult{WalkStart::Started, launch(id, key, app, now)};
}

std::variant<LevelRequest, WalkDone> PageWalker::on_level_complete(std::uint32_t id, Cycle now) {
  WalkSlot& s = slots_.at(id);
  if (!s.active) throw std::logic_error("PageWalker: completion for an idle slot");
  const unsigned idx = level_index(s.key.vpn, s.current_level);
  auto next = tables_[s.app]->entry(s.current_level, s.table, idx);
  if (!next) {
    std::ostringstream os;
    os << "asid " << int(s.key.asid.value) << " vpn 0x" << std::hex << s.key.vpn
       << " unmapped at level " << std::dec << s.current_level;
    throw Unmapped(os.str(), s.current_level);
  }
  if (s.current_level < kWalkLevels) {
    ++s.current_level;
    s.table = *next;
    return make_request(id);
  }

  WalkDone done{s.key, s.app, *next, std::nullopt};
  s.active = false;
  --active_;
  --app_active_[s.app];
  keys_.erase(s.key);
  if (!pending_.empty()) {
    const Pending p = pending_.front();
    pending_.pop_front();
    --app_queued_[p.app];
    done.next_walk = launch(id, p.key, p.app, now);
  } else {
    free_slots_.push_back(id);
  }
  return done;
}

void PageWalker::reset_epoch_counters() {
  for (std::size_t app = 0; app < app_max_.size(); ++app) {
    app_max_[app].set(app_active_[app] + app_queued_[app]);
  }
}

PageWalkCache::PageWalkCache(PwcGeometry geometry)
    : store_(geometry.entries / geometry.ways, geometry.ways) {}

std::size_t PageWalkCache::set_of(Pfn table, unsigned index) const {
  return static_cast<std::size_t>(((table << kLevelIndexBits) | index) % store_.sets());
}

std::optional<Pfn> PageWalkCache::probe(Asid asid, int level, Pfn table, unsigned index) {
  const Key key{asid, static_cast<std::uint8_t>(level), table, index};
  if (Pfn* next = store_.lookup(set_of(table, index), key)) {
    ++hits_;
    return *next;
  }
  ++misses_;
  return std::nullopt;
}

void PageWalkCache::fill(Asid asid, int level, Pfn table, unsigned index, Pfn next) {
  const Key key{asid, static_cast<std::uint8_t>(level), table, index};
  store_.insert(set_of(table, index), key, next);
}

void PageWalkCache::flush_asid(Asid asid) {
  store_.erase_if([asid](const Key& k, Pfn) { return k.asid == asid; });
}

}  // namespace gmmu
