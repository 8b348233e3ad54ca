#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "gmmu/addressing.hpp"
#include "gmmu/errors.hpp"

using namespace gmmu;

namespace {

// Independent radix-tree model: one map per level from the VPN prefix that
// selects a table to the frame that holds it, built with the same frame
// allocation discipline but none of the library code.
struct RefTree {
  Pfn root = 0;
  std::array<std::map<Vpn, Pfn>, kWalkLevels> frame_of_prefix;  // level -> prefix -> frame
  std::map<Vpn, Pfn> leaf;
};

struct RefPool {
  std::vector<std::uint64_t> order;
  std::uint64_t chunk;
  std::size_t next = 0;
  std::uint64_t left = 0;
  Pfn cur = 0;

  RefPool(std::uint64_t frames, std::uint64_t chunk_frames, std::uint64_t seed) : chunk(chunk_frames) {
    std::uint64_t n = frames / chunk;
    for (std::uint64_t i = 0; i < n; ++i) order.push_back(i);
    std::mt19937_64 rng(seed);
    for (std::uint64_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  }
  Pfn take() {
    if (left == 0) {
      cur = order.at(next++) * chunk;
      left = chunk;
    }
    --left;
    return cur++;
  }
};

RefTree ref_build(std::vector<Vpn> vpns, RefPool& pool) {
  std::sort(vpns.begin(), vpns.end());
  vpns.erase(std::unique(vpns.begin(), vpns.end()), vpns.end());
  pool.left = 0;
  RefTree t;
  t.root = pool.take();
  t.frame_of_prefix[0][0] = t.root;
  for (Vpn v : vpns) {
    for (int level = 2; level <= kWalkLevels; ++level) {
      const Vpn prefix = v >> (9 * (kWalkLevels - level + 1));
      if (!t.frame_of_prefix[level - 1].count(prefix)) t.frame_of_prefix[level - 1][prefix] = pool.take();
    }
    t.leaf[v] = pool.take();
  }
  return t;
}

std::vector<std::pair<int, std::uint64_t>> ref_walk(const RefTree& t, Vpn v) {
  std::vector<std::pair<int, std::uint64_t>> out;
  for (int level = 1; level <= kWalkLevels; ++level) {
    const Vpn prefix = level == 1 ? 0 : v >> (9 * (kWalkLevels - level + 1));
    const Pfn table = t.frame_of_prefix[level - 1].at(prefix);
    const unsigned idx = (v >> (9 * (kWalkLevels - level))) & 511;
    out.emplace_back(level, table * 4096 + idx * 8);
  }
  return out;
}

PhysicalMemoryConfig small_memory() { return PhysicalMemoryConfig{64ULL << 20, 64}; }

}  // namespace

TEST_CASE("single page builds the minimal four-node walk path") {
  auto pts = build_page_tables({AppPages{Asid{1}, {0x12345}}}, 7);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].table_frames().size() == 4);
  for (int level = 1; level <= 4; ++level) CHECK(pts[0].tables_at_level(level) == 1);
  CHECK(pts[0].mapped_pages() == 1);
}

TEST_CASE("same vpn in two address spaces maps to distinct frames") {
  auto pts = build_page_tables({AppPages{Asid{1}, {42}}, AppPages{Asid{2}, {42}}}, 3);
  const auto a = translate(pts[0], VirtualAddress{42 << 12});
  const auto b = translate(pts[1], VirtualAddress{42 << 12});
  CHECK(a.pfn() != b.pfn());
  std::set<Pfn> ta(pts[0].table_frames().begin(), pts[0].table_frames().end());
  for (Pfn f : pts[1].table_frames()) CHECK(ta.count(f) == 0);
}

TEST_CASE("513 pages under one level-3 subtree match the reference builder") {
  std::vector<Vpn> vpns;
  const Vpn base = (5ULL << 27) | (3ULL << 18);
  for (Vpn i = 0; i < 513; ++i) vpns.push_back(base + i);
  auto pts = build_page_tables({AppPages{Asid{0}, vpns}}, 11, small_memory());
  RefPool pool(small_memory().capacity_bytes >> 12, small_memory().chunk_frames, 11);
  RefTree ref = ref_build(vpns, pool);
  for (int level = 1; level <= 4; ++level) {
    CHECK(pts[0].tables_at_level(level) == ref.frame_of_prefix[level - 1].size());
  }
  CHECK(pts[0].tables_at_level(4) == 2);
  CHECK(pts[0].table_frames().size() == 5);
}

TEST_CASE("walk addresses match the reference walker over random pages") {
  std::mt19937_64 rng(99);
  std::vector<AppPages> apps;
  for (int a = 0; a < 3; ++a) {
    AppPages app{Asid{static_cast<std::uint8_t>(a)}, {}};
    for (int i = 0; i < 400; ++i) {
      // Mix dense runs and scattered pages so every level branches.
      const Vpn v = (i % 4 == 0) ? (rng() & ((1ULL << 36) - 1)) : (0x40000 + a * 0x1000 + (rng() % 2048));
      app.vpns.push_back(v);
    }
    apps.push_back(app);
  }
  const std::uint64_t seed = 1234;
  auto pts = build_page_tables(apps, seed, small_memory());
  RefPool pool(small_memory().capacity_bytes >> 12, small_memory().chunk_frames, seed);
  std::size_t checked = 0;
  for (std::size_t a = 0; a < apps.size(); ++a) {
    RefTree ref = ref_build(apps[a].vpns, pool);
    for (Vpn v : apps[a].vpns) {
      const auto path = walk_addresses(pts[a], VirtualAddress{(v << 12) | 0x7});
      const auto want = ref_walk(ref, v);
      for (int l = 0; l < 4; ++l) {
        CHECK(path[l].walk_depth == want[l].first);
        CHECK(path[l].entry.value == want[l].second);
      }
      CHECK(translate(pts[a], VirtualAddress{v << 12}).pfn() == ref.leaf.at(v));
      ++checked;
    }
  }
  CHECK(checked == 1200);
}

TEST_CASE("translate passes the page offset through") {
  auto pts = build_page_tables({AppPages{Asid{1}, {0x777}}}, 1);
  const auto pa = translate(pts[0], VirtualAddress{(0x777ULL << 12) | 0x123});
  CHECK((pa.value & 0xFFF) == 0x123);
  CHECK(pa.pfn() == walk(pts[0], VirtualAddress{0x777ULL << 12}).leaf);
}

TEST_CASE("unlisted page is Unmapped") {
  auto pts = build_page_tables({AppPages{Asid{1}, {0x777}}}, 1);
  CHECK_THROWS_AS(translate(pts[0], VirtualAddress{0x778ULL << 12}), Unmapped);
  try {
    translate(pts[0], VirtualAddress{0x778ULL << 12});
  } catch (const Unmapped& e) {
    CHECK(e.level() == 4);
  }
  CHECK_THROWS_AS(walk_addresses(pts[0], VirtualAddress{1ULL << 60}), Unmapped);
}

TEST_CASE("walk path has four strictly increasing depths") {
  auto pts = build_page_tables({AppPages{Asid{1}, {1, 2, 1ULL << 30}}}, 5);
  for (Vpn v : {1ULL, 2ULL, 1ULL << 30}) {
    const auto path = walk_addresses(pts[0], VirtualAddress{v << 12});
    REQUIRE(path.size() == 4);
    for (int l = 0; l < 4; ++l) CHECK(path[l].walk_depth == l + 1);
  }
}

TEST_CASE("pages sharing the top 27 index bits share the first three entries") {
  const Vpn a = 0xABCDE00ULL;
  const Vpn b = a + 5;
  auto pts = build_page_tables({AppPages{Asid{1}, {a, b}}}, 5);
  const auto pa = walk_addresses(pts[0], VirtualAddress{a << 12});
  const auto pb = walk_addresses(pts[0], VirtualAddress{b << 12});
  for (int l = 0; l < 3; ++l) CHECK(pa[l] == pb[l]);
  CHECK(pa[3] != pb[3]);
}

TEST_CASE("each level depends on the previous level's content") {
  auto pts = build_page_tables({AppPages{Asid{1}, {0x1234567}}}, 5);
  const PageTable& pt = pts[0];
  const VirtualAddress va{0x1234567ULL << 12};
  const auto full = walk_addresses(pt, va);
  for (int withheld = 1; withheld <= 4; ++withheld) {
    std::vector<int> seen;
    EntryReader mock = [&](int level, Pfn table, unsigned idx) -> std::optional<Pfn> {
      seen.push_back(level);
      if (level >= withheld) return std::nullopt;
      return pt.entry(level, table, idx);
    };
    try {
      walk_addresses(pt.root(), va, mock);
      FAIL("walk should not complete");
    } catch (const Unmapped& e) {
      CHECK(e.level() == withheld);
    }
    // Nothing past the withheld level was ever requested.
    CHECK(seen.size() == static_cast<std::size_t>(withheld));
    CHECK(seen.back() == withheld);
  }
  // Corrupting level 2 content changes the level 3 address.
  EntryReader skew = [&](int level, Pfn table, unsigned idx) -> std::optional<Pfn> {
    auto next = pt.entry(level, table, idx);
    if (level == 2 && next) return *next + 1;
    if (level >= 3) return Pfn{1};
    return next;
  };
  const auto skewed = walk_addresses(pt.root(), va, skew);
  CHECK(skewed[0] == full[0]);
  CHECK(skewed[1] == full[1]);
  CHECK(skewed[2] != full[2]);
}

TEST_CASE("frames of distinct address spaces never collide") {
  std::vector<AppPages> apps;
  for (int a = 0; a < 8; ++a) {
    AppPages app{Asid{static_cast<std::uint8_t>(a)}, {}};
    for (Vpn v = 0; v < 700; ++v) app.vpns.push_back(0x100000 + v * 3);
    apps.push_back(app);
  }
  auto pts = build_page_tables(apps, 77, small_memory());
  std::set<Pfn> all;
  std::size_t total = 0;
  for (const auto& pt : pts) {
    for (Pfn f : pt.table_frames()) all.insert(f);
    for (Pfn f : pt.data_frames()) all.insert(f);
    total += pt.table_frames().size() + pt.data_frames().size();
  }
  CHECK(all.size() == total);
}

TEST_CASE("allocation is deterministic per seed") {
  std::vector<AppPages> apps{AppPages{Asid{0}, {1, 2, 3, 900, 70000}}};
  auto a = build_page_tables(apps, 5);
  auto b = build_page_tables(apps, 5);
  auto c = build_page_tables(apps, 6);
  CHECK(a[0].data_frames() == b[0].data_frames());
  CHECK(a[0].table_frames() == b[0].table_frames());
  CHECK(a[0].data_frames() != c[0].data_frames());
}

TEST_CASE("frame exhaustion raises CapacityExceeded") {
  PhysicalMemoryConfig tiny{16 * 4096, 4};
  std::vector<Vpn> vpns;
  for (Vpn v = 0; v < 20; ++v) vpns.push_back(v);
  CHECK_THROWS_AS(build_page_tables({AppPages{Asid{0}, vpns}}, 1, tiny), CapacityExceeded);
  CHECK_THROWS_AS(build_page_tables({AppPages{Asid{0}, {}}}, 1), ConfigInvalid);
}
