#include <map>
#include <random>

#include "doctest.h"
#include "gmmu/errors.hpp"
#include "gmmu/walker.hpp"

using namespace gmmu;

namespace {

std::vector<PageTable> tables_for(std::vector<std::vector<Vpn>> per_app) {
  std::vector<AppPages> apps;
  for (std::size_t i = 0; i < per_app.size(); ++i) {
    apps.push_back(AppPages{Asid{static_cast<std::uint8_t>(i)}, per_app[i]});
  }
  return build_page_tables(apps, 17);
}

std::vector<Vpn> range(Vpn base, Vpn n) {
  std::vector<Vpn> v;
  for (Vpn i = 0; i < n; ++i) v.push_back(base + i);
  return v;
}

// Runs a walk to completion and counts the memory reads that reach the cache,
// consulting the page-walk cache the way the engine does.
int memory_reads(PageWalker& w, PageWalkCache& pwc, const PageTable& pt, PageKey key) {
  auto start = w.start_walk(key, 0, 0);
  REQUIRE(start.status == WalkStart::Started);
  LevelRequest req = *start.request;
  int reads = 0;
  for (;;) {
    if (!pwc.probe(key.asid, req.level, req.table, req.index)) {
      ++reads;
      pwc.fill(key.asid, req.level, req.table, req.index, *pt.entry(req.level, req.table, req.index));
    }
    auto next = w.on_level_complete(req.slot, 0);
    if (std::holds_alternative<WalkDone>(next)) return reads;
    req = std::get<LevelRequest>(next);
  }
}

}  // namespace

TEST_CASE("fresh miss with a free slot starts at level 1") {
  auto pts = tables_for({{5}});
  PageWalker w(64, {&pts[0]});
  auto r = w.start_walk(PageKey{Asid{0}, 5}, 0, 0);
  CHECK(r.status == WalkStart::Started);
  REQUIRE(r.request);
  CHECK(r.request->walk_depth == 1);
  CHECK(r.request->entry == walk_addresses(pts[0], VirtualAddress{5 << 12})[0].entry);
  CHECK(w.active() == 1);
}

TEST_CASE("65th concurrent miss is queued behind 64 active walks") {
  auto pts = tables_for({range(0, 65)});
  PageWalker w(64, {&pts[0]});
  std::vector<LevelRequest> reqs;
  for (Vpn v = 0; v < 64; ++v) {
    auto r = w.start_walk(PageKey{Asid{0}, v}, 0, 0);
    REQUIRE(r.status == WalkStart::Started);
    reqs.push_back(*r.request);
  }
  auto r = w.start_walk(PageKey{Asid{0}, 64}, 0, 0);
  CHECK(r.status == WalkStart::Backpressure);
  CHECK(w.queued() == 1);
  CHECK(w.active() == 64);
  // Finishing one walk hands its slot to the queued miss.
  LevelRequest cur = reqs[0];
  for (int l = 0; l < 3; ++l) cur = std::get<LevelRequest>(w.on_level_complete(cur.slot, 1));
  auto done = std::get<WalkDone>(w.on_level_complete(cur.slot, 2));
  REQUIRE(done.next_walk);
  CHECK(done.next_walk->walk_depth == 1);
  CHECK(w.slot(done.next_walk->slot).key.vpn == 64);
  CHECK(w.queued() == 0);
  CHECK(w.active() == 64);
}

TEST_CASE("duplicate miss joins the in-flight walk") {
  auto pts = tables_for({{7}});
  PageWalker w(64, {&pts[0]});
  w.start_walk(PageKey{Asid{0}, 7}, 0, 0);
  auto r = w.start_walk(PageKey{Asid{0}, 7}, 0, 1);
  CHECK(r.status == WalkStart::Joined);
  CHECK_FALSE(r.request);
  CHECK(w.active() == 1);
}

TEST_CASE("level completions advance depth and level 4 finishes the walk") {
  auto pts = tables_for({{0x123456}});
  PageWalker w(64, {&pts[0]});
  const PageKey key{Asid{0}, 0x123456};
  auto r = w.start_walk(key, 0, 0);
  const auto want = walk_addresses(pts[0], VirtualAddress{key.vpn << 12});
  LevelRequest req = *r.request;
  int requests = 1;
  for (int level = 1; level <= 3; ++level) {
    CHECK(req.entry == want[level - 1].entry);
    req = std::get<LevelRequest>(w.on_level_complete(req.slot, level));
    CHECK(req.walk_depth == level + 1);
    ++requests;
  }
  CHECK(req.entry == want[3].entry);
  auto done = std::get<WalkDone>(w.on_level_complete(req.slot, 9));
  CHECK(done.pfn == translate(pts[0], VirtualAddress{key.vpn << 12}).pfn());
  CHECK(w.active() == 0);
  CHECK(requests == 4);
  CHECK_FALSE(w.in_progress(key));
}

TEST_CASE("walk of an unmapped page aborts with Unmapped") {
  auto pts = tables_for({{1}});
  PageWalker w(4, {&pts[0]});
  auto r = w.start_walk(PageKey{Asid{0}, 1ULL << 20}, 0, 0);
  const std::uint32_t slot = r.request->slot;
  auto step = [&] {
    for (int level = 1; level <= 4; ++level) w.on_level_complete(slot, level);
  };
  CHECK_THROWS_AS(step(), Unmapped);
}

TEST_CASE("page-walk cache: cold, repeated and sibling walks") {
  auto pts = tables_for({{0x5000, 0x5001}});
  PageWalker w(64, {&pts[0]});
  PageWalkCache pwc;
  CHECK(memory_reads(w, pwc, pts[0], PageKey{Asid{0}, 0x5000}) == 4);
  CHECK(pwc.misses() == 4);
  CHECK(memory_reads(w, pwc, pts[0], PageKey{Asid{0}, 0x5000}) == 0);
  CHECK(pwc.hits() == 4);
  CHECK(memory_reads(w, pwc, pts[0], PageKey{Asid{0}, 0x5001}) == 1);
  pwc.flush_asid(Asid{0});
  CHECK(memory_reads(w, pwc, pts[0], PageKey{Asid{0}, 0x5001}) == 4);
}

TEST_CASE("sibling walk count against radix sharing over random pages") {
  std::mt19937_64 rng(4);
  std::vector<Vpn> vpns;
  for (int i = 0; i < 200; ++i) vpns.push_back(rng() % (1ULL << 30));
  auto pts = tables_for({vpns});
  for (int trial = 0; trial < 100; ++trial) {
    const Vpn a = vpns[rng() % vpns.size()];
    const Vpn b = vpns[rng() % vpns.size()];
    PageWalker w(64, {&pts[0]});
    PageWalkCache pwc;
    memory_reads(w, pwc, pts[0], PageKey{Asid{0}, a});
    int shared = 0;  // leading levels whose (table, index) coincide
    for (int l = 1; l <= 4; ++l) {
      if ((a >> (9 * (4 - l))) != (b >> (9 * (4 - l)))) break;
      ++shared;
    }
    CHECK(memory_reads(w, pwc, pts[0], PageKey{Asid{0}, b}) == 4 - shared);
  }
}

TEST_CASE("random interleaving: depth order, slot bound, concurrency counter") {
  std::mt19937_64 rng(12);
  auto pts = tables_for({range(0x1000, 300), range(0x9000, 300)});
  PageWalker w(16, {&pts[0], &pts[1]});
  std::map<std::uint32_t, LevelRequest> inflight;
  std::map<PageKey, std::vector<int>> depths;
  std::array<std::size_t, 2> ref_max{};
  std::array<std::size_t, 2> outstanding{};  // active + queued per app, tracked here
  std::size_t completed = 0;
  for (int step = 0; step < 20000; ++step) {
    if (rng() % 2 == 0) {
      const std::size_t app = rng() % 2;
      const PageKey key{Asid{static_cast<std::uint8_t>(app)}, (app ? 0x9000 : 0x1000) + rng() % 300};
      auto r = w.start_walk(key, app, step);
      if (r.status != WalkStart::Joined) {
        ++outstanding[app];
        depths[key].clear();
      }
      if (r.request) {
        inflight[r.request->slot] = *r.request;
        depths[key].push_back(r.request->walk_depth);
      }
    } else if (!inflight.empty()) {
      auto it = inflight.begin();
      std::advance(it, rng() % inflight.size());
      const std::uint32_t slot = it->first;
      const PageKey key = w.slot(slot).key;
      inflight.erase(it);
      auto next = w.on_level_complete(slot, step);
      if (auto* lr = std::get_if<LevelRequest>(&next)) {
        inflight[lr->slot] = *lr;
        depths[key].push_back(lr->walk_depth);
      } else {
        auto& done = std::get<WalkDone>(next);
        REQUIRE(depths[key] == std::vector<int>{1, 2, 3, 4});
        --outstanding[done.app];
        ++completed;
        if (done.next_walk) {
          inflight[done.next_walk->slot] = *done.next_walk;
          depths[w.slot(done.next_walk->slot).key].push_back(done.next_walk->walk_depth);
        }
      }
    }
    REQUIRE(w.active() <= 16);
    for (std::size_t a = 0; a < 2; ++a) {
      REQUIRE(outstanding[a] == w.active_for(a) + w.queued_for(a));
      ref_max[a] = std::max(ref_max[a], std::min<std::size_t>(outstanding[a], 63));
    }
    if (step % 1000 == 999) {
      for (std::size_t a = 0; a < 2; ++a) REQUIRE(w.concurrent(a).value() == ref_max[a]);
      w.reset_epoch_counters();
      for (std::size_t a = 0; a < 2; ++a) ref_max[a] = std::min<std::size_t>(outstanding[a], 63);
    }
  }
  CHECK(completed > 1000);
  CHECK(w.max_active_observed() == 16);
}
