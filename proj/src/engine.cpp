#include "gmmu/engine.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <map>
#include <stdexcept>

#include "gmmu/errors.hpp"
#include "gmmu/metrics.hpp"

namespace gmmu {

namespace {

constexpr Cycle kNever = std::numeric_limits<Cycle>::max();

struct DesignInfo {
  Design design;
  const char* name;
};

constexpr DesignInfo kDesigns[] = {
    {Design::Static, "static"},         {Design::GpuMmu, "gpu-mmu"},
    {Design::MaskTlb, "mask-tlb"},      {Design::MaskCache, "mask-cache"},
    {Design::MaskDram, "mask-dram"},    {Design::MaskFull, "mask"},
    {Design::Ideal, "ideal"},           {Design::PwcBaseline, "pwc"},
};

void fail(const std::string& what) { throw std::logic_error("invariant violated: " + what); }

}  // namespace

const char* design_name(Design d) {
  for (const auto& info : kDesigns) {
    if (info.design == d) return info.name;
  }
  return "?";
}

std::optional<Design> parse_design(const std::string& name) {
  for (const auto& info : kDesigns) {
    if (name == info.name) return info.design;
  }
  if (name == "mask-full") return Design::MaskFull;
  return std::nullopt;
}

const std::vector<Design>& all_designs() {
  static const std::vector<Design> v = [] {
    std::vector<Design> out;
    for (const auto& info : kDesigns) out.push_back(info.design);
    return out;
  }();
  return v;
}

DesignFlags design_flags(Design d) {
  DesignFlags f;
  switch (d) {
    case Design::Static:
      f.static_partition = true;
      break;
    case Design::GpuMmu:
      break;
    case Design::MaskTlb:
      f.tlb_tokens = true;
      f.bypass_cache = true;
      break;
    case Design::MaskCache:
      f.cache_bypass = true;
      break;
    case Design::MaskDram:
      f.dram_scheduler = SchedulerKind::Mask;
      break;
    case Design::MaskFull:
      f.tlb_tokens = true;
      f.bypass_cache = true;
      f.cache_bypass = true;
      f.dram_scheduler = SchedulerKind::Mask;
      break;
    case Design::Ideal:
      f.ideal = true;
      break;
    case Design::PwcBaseline:
      f.shared_l2_tlb = false;
      f.page_walk_cache = true;
      break;
  }
  return f;
}

std::vector<AppSetup> contiguous_partition(const std::vector<const AppTrace*>& traces,
                                           const std::vector<std::uint32_t>& counts,
                                           std::uint32_t total_cores) {
  if (traces.size() != counts.size()) {
    throw ConfigInvalid("partition lists " + std::to_string(counts.size()) + " core counts for " +
                        std::to_string(traces.size()) + " applications");
  }
  std::vector<AppSetup> out;
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (counts[i] == 0) throw ConfigInvalid("application " + std::to_string(i) + " has no cores");
    if (next + counts[i] > total_cores) {
      throw ConfigInvalid("partition needs more than " + std::to_string(total_cores) + " cores");
    }
    AppSetup s;
    s.trace = traces[i];
    for (std::uint32_t c = 0; c < counts[i]; ++c) s.cores.push_back(next + c);
    next += counts[i];
    out.push_back(std::move(s));
  }
  return out;
}

Simulator::~Simulator() = default;

Simulator::Simulator(const SimConfig& cfg, std::vector<AppSetup> setups) : cfg_(cfg) {
  const auto& hw = cfg_.hw;
  const std::size_t n = setups.size();
  if (n == 0) throw ConfigInvalid("no applications to run");
  if (n > kMaxApps) throw ConfigInvalid("at most " + std::to_string(kMaxApps) + " applications");
  if (hw.max_warps_per_core == 0 || hw.max_warps_per_core > 64) {
    throw ConfigInvalid("max_warps_per_core must be in [1, 64]");
  }
  if (hw.l2_tlb_ports == 0) throw ConfigInvalid("l2_tlb_ports must be positive");
  if (cfg_.mask.epoch_length == 0) throw ConfigInvalid("epoch_length must be positive");

  cores_.resize(hw.cores);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = setups[i];
    if (!s.trace) throw ConfigInvalid("application " + std::to_string(i) + " has no trace");
    if (s.trace->records.empty()) {
      throw ConfigInvalid("trace of " + s.trace->name + " has no records");
    }
    if (s.cores.empty()) throw ConfigInvalid("application " + s.trace->name + " has no cores");
    for (CoreId c : s.cores) {
      if (c >= hw.cores) throw ConfigInvalid("core " + std::to_string(c) + " does not exist");
      if (cores_[c].used) throw ConfigInvalid("core " + std::to_string(c) + " assigned twice");
      cores_[c].used = true;
    }
  }
  if (cfg_.design.static_partition &&
      (n > hw.l2_cache.ways || n > hw.dram.channels)) {
    throw ConfigInvalid("static partitioning needs a cache way and a channel per application");
  }

  std::vector<AppPages> pages;
  for (std::size_t i = 0; i < n; ++i) {
    pages.push_back(AppPages{Asid{static_cast<std::uint8_t>(i)}, setups[i].trace->pages});
  }
  tables_ = build_page_tables(pages, cfg_.seed, hw.memory);

  std::vector<std::vector<WarpId>> token_lists(n);
  std::vector<Asid> asids;
  apps_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& app = apps_[i];
    const auto& s = setups[i];
    app.asid = Asid{static_cast<std::uint8_t>(i)};
    asids.push_back(app.asid);
    app.cores = s.cores;
    app.streams = s.trace->per_warp();
    app.stats.name = s.trace->name;
    app.stats.cores = static_cast<std::uint32_t>(s.cores.size());
    app.stats.warps = s.trace->warps;
    for (CoreId c : s.cores) {
      auto& core = cores_[c];
      core.app = static_cast<std::uint32_t>(i);
      core.asid = app.asid;
      core.slots.assign(hw.max_warps_per_core, kNoWarp);
      core.l1 = std::make_unique<L1Tlb>(hw.l1_tlb);
    }
    for (std::uint32_t w = 0; w < s.trace->warps; ++w) {
      Warp warp;
      warp.app = static_cast<std::uint32_t>(i);
      warp.local = w;
      warp.core = s.cores[w % s.cores.size()];
      warp.stream = app.streams[w].data();
      warp.length = static_cast<std::uint32_t>(app.streams[w].size());
      app.warps.push_back(static_cast<WarpId>(warps_.size()));
      warps_.push_back(warp);
    }
    std::vector<WarpId> ordered = app.warps;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [&](WarpId a, WarpId b) { return warps_[a].core < warps_[b].core; });
    token_lists[i] = std::move(ordered);
  }

  TokenParams tp = cfg_.mask.tokens;
  if (!cfg_.design.tlb_tokens) tp = TokenParams{1.0, 0.0, -1};
  tokens_ = std::make_unique<TokenController>(tp, std::move(token_lists), asids, warps_.size());

  shared_ = std::make_unique<SharedTlb>(
      SharedTlbConfig{hw.l2_tlb, hw.bypass_cache_entries, cfg_.design.bypass_cache, hw.cores});
  std::vector<const PageTable*> tptrs;
  for (const auto& t : tables_) tptrs.push_back(&t);
  walker_ = std::make_unique<PageWalker>(hw.walker_threads, tptrs);
  if (cfg_.design.page_walk_cache) pwc_ = std::make_unique<PageWalkCache>(hw.pwc);

  std::optional<WayPartition> ways;
  std::optional<ChannelPartition> channels;
  if (cfg_.design.static_partition) {
    WayPartition wp;
    ChannelPartition cp;
    std::size_t wbase = 0;
    std::uint32_t cbase = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t wn = hw.l2_cache.ways / n + (i < hw.l2_cache.ways % n ? 1 : 0);
      const std::uint32_t cn =
          hw.dram.channels / static_cast<std::uint32_t>(n) + (i < hw.dram.channels % n ? 1 : 0);
      wp.ranges.emplace_back(wbase, wbase + wn);
      cp.ranges.emplace_back(cbase, cn);
      wbase += wn;
      cbase += cn;
    }
    ways = std::move(wp);
    channels = std::move(cp);
  }
  cache_ = std::make_unique<L2Cache>(
      hw.l2_cache, BypassPolicy(cfg_.design.cache_bypass, cfg_.mask.bypass_min_samples), ways);
  DramConfig dc;
  dc.geometry = hw.dram;
  dc.geometry.line_bytes = hw.l2_cache.line_bytes;
  dc.timing = hw.dram_timing;
  dc.queues = hw.dram_queues;
  dc.scheduler = cfg_.design.dram_scheduler;
  dc.thres_max = cfg_.mask.thres_max;
  dc.silver_idle_window = cfg_.mask.silver_idle_window;
  dram_ = std::make_unique<DramController>(dc, n, channels);

  port_free_.assign(hw.l2_tlb_ports, 0);
  app_max_concurrent_.assign(n, 0);
  app_max_stalled_.assign(n, 0);
  log_.enable(cfg_.record_events);
  for (std::size_t i = 0; i < n; ++i) seat_app(static_cast<std::uint32_t>(i));
}

void Simulator::schedule(Cycle t, Ev type, std::uint32_t a, std::uint64_t b, std::uint64_t c) {
  events_.push(Event{t, seq_++, type, a, b, c});
}

void Simulator::seat_app(std::uint32_t ai) {
  auto& app = apps_[ai];
  for (CoreId c : app.cores) {
    auto& core = cores_[c];
    std::fill(core.slots.begin(), core.slots.end(), kNoWarp);
    core.ready = 0;
    core.last = -1;
    core.waiting.clear();
    core.unfinished = 0;
  }
  app.unfinished = 0;
  for (WarpId w : app.warps) {
    auto& warp = warps_[w];
    warp.cursor = 0;
    warp.slot = -1;
    if (warp.length == 0) {
      warp.status = WarpStatus::Finished;
      continue;
    }
    auto& core = cores_[warp.core];
    ++core.unfinished;
    ++app.unfinished;
    warp.status = WarpStatus::Ready;
    const auto hole = std::find(core.slots.begin(), core.slots.end(), kNoWarp);
    if (hole == core.slots.end()) {
      core.waiting.push_back(w);
    } else {
      warp.slot = static_cast<int>(hole - core.slots.begin());
      *hole = w;
      core.ready |= 1ULL << warp.slot;
    }
  }
}

void Simulator::make_ready(WarpId w) {
  auto& warp = warps_[w];
  if (warp.cursor >= warp.length) {
    finish_warp(w);
    return;
  }
  warp.status = WarpStatus::Ready;
  if (warp.slot >= 0) cores_[warp.core].ready |= 1ULL << warp.slot;
}

void Simulator::finish_warp(WarpId w) {
  auto& warp = warps_[w];
  auto& core = cores_[warp.core];
  auto& app = apps_[warp.app];
  warp.status = WarpStatus::Finished;
  --core.unfinished;
  const int slot = warp.slot;
  warp.slot = -1;
  core.slots[slot] = kNoWarp;
  core.ready &= ~(1ULL << slot);
  if (core.last == slot) core.last = -1;
  if (!core.waiting.empty()) {
    const WarpId next = core.waiting.front();
    core.waiting.pop_front();
    warps_[next].slot = slot;
    core.slots[slot] = next;
    make_ready(next);
  }
  if (--app.unfinished > 0) return;
  ++app.stats.passes;
  if (!measuring_) return;
  const bool all = std::all_of(apps_.begin(), apps_.end(),
                               [](const App& a) { return a.stats.passes > 0; });
  if (all) {
    end_measurement();
    return;
  }
  seat_app(warp.app);
}

void Simulator::end_measurement() {
  if (!measuring_) return;
  measuring_ = false;
  measure_end_ = now_;
  stats_.cycles = now_ + 1;
}

void Simulator::retire(WarpId w, std::uint64_t weight) {
  if (measuring_) apps_[warps_[w].app].stats.retired += weight;
}

void Simulator::issue_cores() {
  for (auto& core : cores_) {
    if (!core.used) continue;
    if (core.ready == 0) {
      if (core.unfinished > 0) ++stats_.core_stall_cycles;
      continue;
    }
    int slot = core.last;
    if (slot < 0 || !(core.ready & (1ULL << slot))) slot = std::countr_zero(core.ready);
    issue(core, core.slots[slot]);
  }
}

void Simulator::issue(Core& core, WarpId w) {
  auto& warp = warps_[w];
  auto& app = apps_[warp.app];
  const TraceRecord& rec = warp.stream[warp.cursor++];
  ++stats_.issued_records;
  core.last = warp.slot;
  core.ready &= ~(1ULL << warp.slot);
  if (!rec.is_memory()) {
    retire(w, rec.payload);
    warp.status = WarpStatus::StalledData;
    schedule(now_ + std::max<std::uint64_t>(rec.payload, 1), Ev::Wake, w);
    return;
  }
  warp.pending_va = rec.payload;
  warp.pending_write = rec.kind == RecordKind::Write;
  const VirtualAddress va{rec.payload};
  ++app.stats.l1_probes;
  if (cfg_.design.ideal) {
    ++app.stats.l1_hits;
    warp.status = WarpStatus::StalledData;
    schedule(now_ + cfg_.hw.l1_tlb_latency, Ev::DataStart, w,
             translate(tables_[warp.app], va).pfn());
    return;
  }
  const auto r = core.l1->probe(app.asid, va.vpn(), w, now_);
  if (r.hit) {
    ++app.stats.l1_hits;
    warp.status = WarpStatus::StalledData;
    schedule(now_ + cfg_.hw.l1_tlb_latency, Ev::DataStart, w, r.pfn);
    return;
  }
  warp.status = WarpStatus::StalledTranslation;
  const PageKey key{app.asid, va.vpn()};
  if (r.new_mshr) {
    schedule(now_ + cfg_.hw.l1_tlb_latency, Ev::L2TlbArrive, warp.core, va.vpn());
    return;
  }
  const Mshr* l1m = core.l1->mshrs().find(key);
  if (l1m && l1m->forwarded) {
    if (Mshr* m = shared_->mshrs().find(key)) {
      m->add_warp(w);
      app.wrp_stalled.observe_max(m->stalled_warps.size());
    }
  }
}

void Simulator::l2_arrive(CoreId c, Vpn vpn) {
  if (!cfg_.design.shared_l2_tlb) {
    l2_miss(c, vpn);
    return;
  }
  const std::size_t port = static_cast<std::size_t>(vpn % port_free_.size());
  const Cycle start = std::max(now_, port_free_[port]);
  port_free_[port] = start + 1;
  stats_.l2_tlb_port_stall_cycles += start - now_;
  if (start == now_) {
    l2_probe(c, vpn);
  } else {
    schedule(start, Ev::L2TlbProbe, c, vpn);
  }
}

void Simulator::l2_probe(CoreId c, Vpn vpn) {
  auto& core = cores_[c];
  auto& app = apps_[core.app];
  const auto r = shared_->probe(app.asid, vpn, c);
  ++app.stats.l2_probes;
  log_.add(LoggedEvent{now_, LogKind::L2TlbProbe, static_cast<std::uint8_t>(core.app), 0,
                       static_cast<std::uint8_t>(r.hit), c, vpn});
  if (r.hit) {
    ++app.stats.l2_hits;
    if (r.source == HitSource::BypassCache) ++app.stats.l2_bypass_hits;
    schedule(now_ + cfg_.hw.l2_tlb_latency, Ev::L1Fill, c, vpn, r.pfn);
    return;
  }
  l2_miss(c, vpn);
}

void Simulator::l2_miss(CoreId c, Vpn vpn) {
  auto& core = cores_[c];
  auto& app = apps_[core.app];
  const PageKey key{app.asid, vpn};
  Mshr* l1m = core.l1->mshrs().find(key);
  if (!l1m || l1m->stalled_warps.empty()) fail("shared-TLB miss without an L1 MSHR");
  auto [m, created] = shared_->mshrs().allocate_or_join(key, l1m->stalled_warps[0], now_);
  for (std::size_t i = 1; i < l1m->stalled_warps.size(); ++i) m->add_warp(l1m->stalled_warps[i]);
  m->waiting_cores.push_back(c);
  l1m->forwarded = true;
  app.wrp_stalled.observe_max(m->stalled_warps.size());
  if (!created) ++stats_.l2_mshr_merges;
  if (created) {
    const Cycle lat = cfg_.design.shared_l2_tlb ? cfg_.hw.l2_tlb_latency : 0;
    if (lat == 0) {
      begin_walk(core.app, vpn);
    } else {
      schedule(now_ + lat, Ev::WalkBegin, core.app, vpn);
    }
  }
}

void Simulator::l1_fill(CoreId c, Vpn vpn, Pfn pfn) {
  auto& core = cores_[c];
  for (WarpId w : core.l1->fill(core.asid, vpn, pfn)) {
    warps_[w].status = WarpStatus::StalledData;
    begin_data(w, pfn);
  }
}

void Simulator::begin_data(WarpId w, Pfn pfn) {
  const auto& warp = warps_[w];
  const std::uint32_t id = alloc_req();
  auto& r = reqs_[id];
  r.kind = ReqKind::Data;
  r.depth = 0;
  r.write = warp.pending_write;
  r.app = warp.app;
  r.owner = w;
  r.paddr = make_paddr(pfn, VirtualAddress{warp.pending_va}.offset()).value;
  cache_access(id);
}

void Simulator::begin_walk(std::uint32_t ai, Vpn vpn) {
  auto& app = apps_[ai];
  ++stats_.walks_started;
  ++app.stats.walks;
  const auto r = walker_->start_walk(PageKey{app.asid, vpn}, ai, now_);
  if (r.status == WalkStart::Started) {
    log_.add(LoggedEvent{now_, LogKind::WalkLaunched, static_cast<std::uint8_t>(ai), 0, 0,
                         r.request->slot, vpn});
    issue_level(*r.request, ai);
  } else if (r.status == WalkStart::Backpressure) {
    log_.add(LoggedEvent{now_, LogKind::WalkQueued, static_cast<std::uint8_t>(ai), 0, 0, 0, vpn});
  } else {
    fail("walk started twice for one shared-TLB MSHR");
  }
  stats_.max_concurrent_walks = std::max<std::uint64_t>(stats_.max_concurrent_walks,
                                                        walker_->active() + walker_->queued());
}

void Simulator::issue_level(const LevelRequest& lr, std::uint32_t ai) {
  const Asid asid = apps_[ai].asid;
  Cycle at = now_;
  if (pwc_) {
    if (pwc_->probe(asid, lr.level, lr.table, lr.index)) {
      ++stats_.pwc_hits;
      schedule(now_ + cfg_.hw.pwc_latency, Ev::LevelDone, lr.slot, ai);
      return;
    }
    ++stats_.pwc_misses;
    at = now_ + cfg_.hw.pwc_latency;
  }
  const std::uint32_t id = alloc_req();
  auto& r = reqs_[id];
  r.kind = ReqKind::Walk;
  r.depth = lr.walk_depth;
  r.write = false;
  r.app = ai;
  r.owner = lr.slot;
  r.paddr = lr.entry.value;
  r.level = lr.level;
  r.table = lr.table;
  r.index = lr.index;
  ++stats_.walk_memory_requests;
  if (at == now_) {
    cache_access(id);
  } else {
    schedule(at, Ev::CacheAccess, id);
  }
}

void Simulator::level_done(std::uint32_t slot, std::uint32_t ai) {
  auto next = walker_->on_level_complete(slot, now_);
  if (auto* lr = std::get_if<LevelRequest>(&next)) {
    issue_level(*lr, ai);
  } else {
    walk_done(std::get<WalkDone>(next), slot);
  }
}

void Simulator::walk_done(const WalkDone& done, std::uint32_t slot) {
  ++stats_.walks_completed;
  log_.add(LoggedEvent{now_, LogKind::WalkFinished, static_cast<std::uint8_t>(done.app), 0, 0,
                       slot, done.key.vpn});
  auto m = shared_->mshrs().release(done.key);
  if (!m) fail("finished walk has no shared-TLB MSHR");
  if (cfg_.design.shared_l2_tlb) {
    switch (shared_->fill(done.key.asid, done.key.vpn, done.pfn,
                          tokens_->has_token(m->origin_warp))) {
      case FillTarget::Main: ++stats_.fills_main; break;
      case FillTarget::BypassCache: ++stats_.fills_bypass; break;
      case FillTarget::Dropped: ++stats_.fills_dropped; break;
    }
  }
  for (CoreId c : m->waiting_cores) l1_fill(c, done.key.vpn, done.pfn);
  if (done.next_walk) {
    const auto na = static_cast<std::uint32_t>(walker_->slot(done.next_walk->slot).app);
    log_.add(LoggedEvent{now_, LogKind::WalkLaunched, static_cast<std::uint8_t>(na), 0, 1,
                         done.next_walk->slot, walker_->slot(done.next_walk->slot).key.vpn});
    issue_level(*done.next_walk, na);
  }
}

void Simulator::cache_access(std::uint32_t id) {
  auto& r = reqs_[id];
  MemoryRequest mr;
  mr.asid = apps_[r.app].asid;
  mr.paddr = PhysicalAddress{r.paddr};
  mr.is_write = r.write;
  mr.walk_depth = r.depth;
  mr.issue_cycle = now_;
  if (r.kind == ReqKind::Data) {
    mr.vaddr = VirtualAddress{warps_[r.owner].pending_va};
    mr.issuing_core = warps_[r.owner].core;
  }
  const auto acc = cache_->access(id, mr, r.app, now_);
  log_.add(LoggedEvent{now_, LogKind::CacheAccess, static_cast<std::uint8_t>(r.app), r.depth,
                       static_cast<std::uint8_t>(acc.tag_hit),
                       acc.outcome == CacheOutcome::BypassToDram ? 1u : 0u, r.paddr});
  switch (acc.outcome) {
    case CacheOutcome::Hit:
      schedule(acc.ready, Ev::ReqDone, id);
      break;
    case CacheOutcome::MissToDram:
      r.fill = true;
      schedule(acc.ready, Ev::DramSubmit, id);
      break;
    case CacheOutcome::BypassToDram:
    case CacheOutcome::WriteThrough:
      schedule(acc.ready, Ev::DramSubmit, id);
      break;
    case CacheOutcome::MergedMiss:
      break;
  }
}

void Simulator::req_done(std::uint32_t id) {
  const Req r = reqs_[id];
  free_req(id);
  if (r.kind == ReqKind::Data) {
    retire(r.owner, 1);
    make_ready(r.owner);
    return;
  }
  if (pwc_) {
    if (auto next = tables_[r.app].entry(r.level, r.table, r.index)) {
      pwc_->fill(apps_[r.app].asid, r.level, r.table, r.index, *next);
    }
  }
  level_done(r.owner, r.app);
}

std::uint32_t Simulator::alloc_req() {
  std::uint32_t id;
  if (free_reqs_.empty()) {
    id = static_cast<std::uint32_t>(reqs_.size());
    reqs_.emplace_back();
  } else {
    id = free_reqs_.back();
    free_reqs_.pop_back();
    reqs_[id] = Req{};
  }
  reqs_[id].live = true;
  ++live_reqs_;
  return id;
}

void Simulator::free_req(std::uint32_t id) {
  if (!reqs_[id].live) fail("request " + std::to_string(id) + " completed twice");
  reqs_[id].live = false;
  free_reqs_.push_back(id);
  --live_reqs_;
}

void Simulator::dispatch(const Event& e) {
  switch (e.type) {
    case Ev::Wake:
      make_ready(e.a);
      break;
    case Ev::L2TlbArrive:
      l2_arrive(e.a, e.b);
      break;
    case Ev::L2TlbProbe:
      l2_probe(e.a, e.b);
      break;
    case Ev::L1Fill:
      l1_fill(e.a, e.b, e.c);
      break;
    case Ev::WalkBegin:
      begin_walk(e.a, e.b);
      break;
    case Ev::DataStart:
      begin_data(e.a, e.b);
      break;
    case Ev::LevelDone:
      level_done(e.a, static_cast<std::uint32_t>(e.b));
      break;
    case Ev::CacheAccess:
      cache_access(e.a);
      break;
    case Ev::DramSubmit: {
      const auto& r = reqs_[e.a];
      DramRequest dr;
      dr.id = e.a;
      dr.uid = dram_uid_++;
      dr.app = r.app;
      dr.walk_depth = r.depth;
      dr.is_write = r.write;
      dr.line = r.paddr / cfg_.hw.l2_cache.line_bytes;
      dram_->submit(dr, now_);
      break;
    }
    case Ev::DramDone: {
      const auto& r = reqs_[e.a];
      if (r.fill) {
        const auto waiters = cache_->complete_fill(r.paddr / cfg_.hw.l2_cache.line_bytes, r.app);
        req_done(e.a);
        for (std::uint32_t w : waiters) req_done(w);
      } else {
        req_done(e.a);
      }
      break;
    }
    case Ev::ReqDone:
      req_done(e.a);
      break;
  }
}

void Simulator::epoch_boundary() {
  const std::size_t n = apps_.size();
  if (cfg_.design.tlb_tokens) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t hits = 0, misses = 0;
      for (CoreId c : apps_[i].cores) {
        hits += shared_->core_hits(c).value();
        misses += shared_->core_misses(c).value();
      }
      tokens_->add_epoch_counts(i, hits, misses);
    }
    tokens_->epoch_update(epoch_index_);
  }
  shared_->reset_core_counters();
  cache_->epoch_refresh();

  std::vector<QuotaInput> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i].concurrent = walker_->concurrent(i).value();
    q[i].warps_stalled = apps_[i].wrp_stalled.value();
    app_max_concurrent_[i] = std::max(app_max_concurrent_[i], q[i].concurrent);
    app_max_stalled_[i] = std::max(app_max_stalled_[i], q[i].warps_stalled);
  }
  dram_->epoch_update(q, now_);
  walker_->reset_epoch_counters();
  std::vector<std::uint64_t> live(n, 0);
  shared_->mshrs().for_each([&](const Mshr& m) {
    auto& v = live[m.key.asid.value];
    v = std::max<std::uint64_t>(v, m.stalled_warps.size());
  });
  for (std::size_t i = 0; i < n; ++i) apps_[i].wrp_stalled.set(live[i]);
  ++epoch_index_;
  ++stats_.epochs;
}

void Simulator::sample() {
  ++stats_.samples;
  std::uint32_t live = 0;
  shared_->mshrs().for_each([&](const Mshr& m) {
    ++live;
    stats_.sampled_stalled_warps += m.stalled_warps.size();
    stats_.stalled_warps_per_miss.add(m.stalled_warps.size());
    log_.add(LoggedEvent{now_, LogKind::MshrSample, m.key.asid.value, 0, 0,
                         static_cast<std::uint32_t>(m.stalled_warps.size()), m.key.vpn});
  });
  stats_.sampled_misses += live;
  const std::uint64_t walks = walker_->active() + walker_->queued();
  stats_.concurrent_walks.add(walks);
  log_.add(LoggedEvent{now_, LogKind::SampleTick, 0, 0, 0, live, walks});
}

bool Simulator::step() {
  if (finished_) return false;
  if (measuring_ && cfg_.max_cycles && now_ >= cfg_.max_cycles) {
    stats_.truncated = true;
    measuring_ = false;
    measure_end_ = now_;
    stats_.cycles = now_;
  }
  if (measuring_) {
    if (now_ > 0 && now_ % cfg_.mask.epoch_length == 0) epoch_boundary();
    if (cfg_.sample_interval && now_ % cfg_.sample_interval == 0) sample();
  }
  dram_->tick(now_);
  while (!events_.empty() && events_.top().t <= now_) {
    const Event e = events_.top();
    events_.pop();
    dispatch(e);
  }
  if (measuring_) issue_cores();
  dram_->step(now_, issued_);
  for (const auto& is : issued_) {
    log_.add(LoggedEvent{now_, LogKind::DramService, static_cast<std::uint8_t>(is.req.app),
                         is.req.walk_depth, static_cast<std::uint8_t>(is.req.queue),
                         static_cast<std::uint32_t>(is.completion - is.req.arrival),
                         is.completion});
    schedule(is.completion, Ev::DramDone, is.req.id);
  }
  issued_.clear();
  if (cfg_.check_invariants_every && now_ % cfg_.check_invariants_every == 0) check_invariants();

  if (!measuring_ && events_.empty() && !dram_->busy()) {
    finished_ = true;
    stats_.drain_cycles = now_ - measure_end_;
    return false;
  }

  bool any_ready = false;
  std::uint64_t waiting_cores = 0;
  if (measuring_) {
    for (const auto& core : cores_) {
      any_ready = any_ready || core.ready != 0;
      waiting_cores += core.unfinished > 0 ? 1 : 0;
    }
  }
  Cycle next = now_ + 1;
  if (!any_ready) {
    Cycle cand = kNever;
    if (!events_.empty()) cand = events_.top().t;
    if (dram_->busy()) cand = std::min(cand, dram_->next_event(now_ + 1));
    if (measuring_) {
      const Cycle e = cfg_.mask.epoch_length;
      cand = std::min(cand, (now_ / e + 1) * e);
      if (cfg_.sample_interval) {
        cand = std::min(cand, (now_ / cfg_.sample_interval + 1) * cfg_.sample_interval);
      }
      if (cfg_.max_cycles) cand = std::min(cand, cfg_.max_cycles);
    }
    if (cand == kNever) throw std::logic_error("simulation deadlocked with no pending work");
    next = std::max(now_ + 1, cand);
    if (measuring_) {
      const Cycle target = cfg_.max_cycles ? std::min(next, cfg_.max_cycles) : next;
      if (target > now_ + 1) stats_.core_stall_cycles += (target - now_ - 1) * waiting_cores;
    }
  }
  now_ = next;
  return true;
}

RunStats Simulator::run() {
  while (step()) {
  }
  return stats();
}

WarpStatus Simulator::warp_status(WarpId w) const { return warps_.at(w).status; }

std::size_t Simulator::l1_stalled_warps() const {
  std::size_t n = 0;
  for (const auto& core : cores_) {
    if (core.l1) n += core.l1->mshrs().stalled_warps();
  }
  return n;
}

const SharedTlb& Simulator::shared_tlb() const { return *shared_; }
const PageWalker& Simulator::walker() const { return *walker_; }
const L2Cache& Simulator::l2_cache() const { return *cache_; }
const DramController& Simulator::dram() const { return *dram_; }
const TokenController& Simulator::tokens() const { return *tokens_; }

void Simulator::check_invariants() const {
  // Every translation-stalled warp sits on exactly one L1 MSHR of its core.
  std::vector<std::uint8_t> on_l1(warps_.size(), 0);
  for (CoreId c = 0; c < cores_.size(); ++c) {
    const auto& core = cores_[c];
    if (!core.l1) continue;
    core.l1->mshrs().for_each([&](const Mshr& m) {
      for (WarpId w : m.stalled_warps) {
        if (w >= warps_.size() || warps_[w].core != c) fail("L1 MSHR holds a foreign warp");
        if (on_l1[w]++) fail("warp " + std::to_string(w) + " on two L1 MSHRs");
      }
    });
  }
  std::size_t stalled = 0;
  for (WarpId w = 0; w < warps_.size(); ++w) {
    const auto& warp = warps_[w];
    const bool st = warp.status == WarpStatus::StalledTranslation;
    stalled += st ? 1 : 0;
    if (st != (on_l1[w] != 0)) {
      fail("warp " + std::to_string(w) + " translation status disagrees with L1 MSHRs");
    }
    if (warp.slot >= 0) {
      const auto& core = cores_[warp.core];
      if (core.slots[warp.slot] != w) fail("warp slot table out of sync");
      const bool bit = (core.ready >> warp.slot) & 1;
      if (bit != (warp.status == WarpStatus::Ready)) fail("ready mask disagrees with warp state");
    }
    if (warp.cursor > warp.length) fail("warp cursor past end of stream");
  }
  std::size_t shared_stalled = 0;
  shared_->mshrs().for_each([&](const Mshr& m) {
    shared_stalled += m.stalled_warps.size();
    if (m.max_warps_observed.value() < std::min<std::size_t>(m.stalled_warps.size(), 63)) {
      fail("MSHR max-warps counter below its occupancy");
    }
    for (WarpId w : m.stalled_warps) {
      if (warps_[w].status != WarpStatus::StalledTranslation) {
        fail("shared MSHR holds a warp that is not waiting for translation");
      }
    }
  });
  if (shared_stalled > stalled) fail("shared MSHRs hold more warps than are stalled");
  if (walker_->active() > walker_->threads()) fail("walker exceeds its thread count");
  // A new shared miss waits out the L2 TLB latency before its walk starts.
  if (walker_->active() + walker_->queued() > shared_->mshrs().size()) {
    fail("more walks in progress than outstanding shared misses");
  }
  for (const auto& e : shared_->bypass_cache().entries()) {
    if (shared_->main().contains(PageKey{e.asid, e.vpn})) {
      fail("translation resident in both the L2 TLB and the bypass cache");
    }
  }
  for (std::size_t i = 0; i < apps_.size(); ++i) {
    if (tokens_->holders(i) != tokens_->app(i).token_count.value()) {
      fail("token holders differ from the token count");
    }
  }
  std::size_t live = 0;
  for (const auto& r : reqs_) live += r.live ? 1 : 0;
  if (live != live_reqs_) fail("request pool live count drifted");
  if (!dram_->audit().ok()) fail("DRAM request audit failed");
}

RunStats Simulator::stats() const {
  RunStats s = stats_;
  if (measuring_) s.cycles = now_ + 1;
  s.apps.clear();
  for (std::size_t i = 0; i < apps_.size(); ++i) {
    AppStats a = apps_[i].stats;
    a.token_count = tokens_->app(i).token_count.value();
    a.max_concurrent_walks = std::max(app_max_concurrent_[i], walker_->concurrent(i).value());
    a.max_warps_stalled = std::max(app_max_stalled_[i], apps_[i].wrp_stalled.value());
    a.ipc = rate(a.retired, s.cycles);
    s.apps.push_back(std::move(a));
  }
  s.cache = cache_->stats();
  s.dram = dram_->stats();
  s.audit = dram_->audit();
  s.requests_live_at_end = live_reqs_;
  std::uint64_t mshrs = shared_->mshrs().size();
  for (const auto& core : cores_) {
    if (core.l1) mshrs += core.l1->mshrs().size();
  }
  s.mshrs_live_at_end = mshrs;
  return s;
}

RunStats run_pair(const SimConfig& cfg, const std::vector<const AppTrace*>& traces,
                  const std::vector<std::uint32_t>& cores_per_app) {
  Simulator sim(cfg, contiguous_partition(traces, cores_per_app, cfg.hw.cores));
  return sim.run();
}

std::size_t best_split(const std::vector<SweepPoint>& points) {
  auto imbalance = [](const SweepPoint& p) {
    const auto [lo, hi] = std::minmax_element(p.cores.begin(), p.cores.end());
    return lo == p.cores.end() ? 0u : *hi - *lo;
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& cur = points[i];
    const auto& b = points[best];
    if (cur.weighted_speedup > b.weighted_speedup ||
        (cur.weighted_speedup == b.weighted_speedup && imbalance(cur) < imbalance(b))) {
      best = i;
    }
  }
  return best;
}

PartitionSweep partition_sweep(const SimConfig& cfg, const SimConfig& alone, const AppTrace& a,
                               const AppTrace& b) {
  const std::uint32_t n = cfg.hw.cores;
  if (n < 2) throw ConfigInvalid("a partition sweep needs at least two cores");
  std::map<std::pair<int, std::uint32_t>, double> memo;
  auto solo = [&](int which, const AppTrace& t, std::uint32_t k) {
    const auto key = std::make_pair(which, k);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const double ipc = run_pair(alone, {&t}, {k}).apps[0].ipc;
    memo.emplace(key, ipc);
    return ipc;
  };
  PartitionSweep out;
  for (std::uint32_t k = 1; k < n; ++k) {
    SweepPoint p;
    p.cores = {k, n - k};
    p.shared = run_pair(cfg, {&a, &b}, p.cores);
    p.ipc_alone = {solo(0, a, k), solo(1, b, n - k)};
    const double sh[2] = {p.shared.apps[0].ipc, p.shared.apps[1].ipc};
    p.weighted_speedup = weighted_speedup(sh, p.ipc_alone);
    out.points.push_back(std::move(p));
  }
  out.best = best_split(out.points);
  return out;
}

}  // namespace gmmu
