#include "gmmu/addressing.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "gmmu/errors.hpp"

namespace gmmu {

std::optional<Pfn> PageTable::entry(int level, Pfn table, unsigned index) const {
  auto it = nodes_.find(node_key(level, table, index));
  if (it == nodes_.end()) return std::nullopt;
  return it->second;
}

std::size_t PageTable::tables_at_level(int level) const {
  if (level < 1 || level > kWalkLevels) return 0;
  return level_tables_[level - 1];
}

namespace {

// Chunked frame pool. Chunk order is a seeded Fisher-Yates shuffle driven by
// raw mt19937_64 output so the layout is identical on every standard library.
class FramePool {
 public:
  FramePool(const PhysicalMemoryConfig& cfg, std::uint64_t seed)
      : chunk_frames_(std::max<std::uint64_t>(1, cfg.chunk_frames)) {
    const std::uint64_t frames = cfg.capacity_bytes >> kPageShift;
    const std::uint64_t chunks = frames / chunk_frames_;
    order_.resize(chunks);
    for (std::uint64_t i = 0; i < chunks; ++i) order_[i] = i;
    std::mt19937_64 rng(seed);
    for (std::uint64_t i = chunks; i > 1; --i) {
      const std::uint64_t j = rng() % i;
      std::swap(order_[i - 1], order_[j]);
    }
  }

  // Each application draws from its own chunks, so no frame is ever shared.
  void start_app() { remaining_in_chunk_ = 0; }

  Pfn take() {
    if (remaining_in_chunk_ == 0) {
      if (next_chunk_ >= order_.size()) {
        throw CapacityExceeded("physical memory exhausted after " +
                               std::to_string(next_chunk_ * chunk_frames_) + " frames");
      }
      cursor_ = order_[next_chunk_++] * chunk_frames_;
      remaining_in_chunk_ = chunk_frames_;
    }
    --remaining_in_chunk_;
    return cursor_++;
  }

 private:
  std::uint64_t chunk_frames_;
  std::vector<std::uint64_t> order_;
  std::size_t next_chunk_ = 0;
  std::uint64_t remaining_in_chunk_ = 0;
  Pfn cursor_ = 0;
};

}  // namespace

class PageTableBuilder {
 public:
  static PageTable build(const AppPages& app, FramePool& pool) {
    if (app.vpns.empty()) {
      throw ConfigInvalid("asid " + std::to_string(app.asid.value) + " declares no pages");
    }
    std::vector<Vpn> vpns = app.vpns;
    std::sort(vpns.begin(), vpns.end());
    vpns.erase(std::unique(vpns.begin(), vpns.end()), vpns.end());
    if (vpns.back() >> kVpnBits) {
      std::ostringstream os;
      os << "vpn 0x" << std::hex << vpns.back() << " exceeds the 4-level address space";
      throw ConfigInvalid(os.str());
    }

    pool.start_app();
    PageTable pt(app.asid, pool.take());
    pt.table_frames_.push_back(pt.root_);
    pt.level_tables_[0] = 1;
    pt.data_frames_.reserve(vpns.size());
    for (Vpn vpn : vpns) {
      Pfn table = pt.root_;
      for (int level = 1; level <= kWalkLevels; ++level) {
        const unsigned idx = level_index(vpn, level);
        const auto key = PageTable::node_key(level, table, idx);
        auto it = pt.nodes_.find(key);
        if (it == pt.nodes_.end()) {
          const Pfn next = pool.take();
          it = pt.nodes_.emplace(key, next).first;
          if (level < kWalkLevels) {
            pt.table_frames_.push_back(next);
            ++pt.level_tables_[level];
          } else {
            pt.data_frames_.push_back(next);
          }
        }
        table = it->second;
      }
    }
    return pt;
  }
};

std::vector<PageTable> build_page_tables(const std::vector<AppPages>& apps,
                                         std::uint64_t allocator_seed,
                                         const PhysicalMemoryConfig& memory) {
  FramePool pool(memory, allocator_seed);
  std::vector<PageTable> out;
  out.reserve(apps.size());
  for (const auto& app : apps) out.push_back(PageTableBuilder::build(app, pool));
  return out;
}

WalkResult walk(Pfn root, VirtualAddress vaddr, const EntryReader& read) {
  WalkResult result;
  const Vpn vpn = vaddr.vpn();
  if (vpn >> kVpnBits) throw Unmapped("virtual address outside the 4-level space", 0);
  Pfn table = root;
  for (int level = 1; level <= kWalkLevels; ++level) {
    const unsigned idx = level_index(vpn, level);
    result.path[level - 1] = WalkStep{walk_depth_tag(level), entry_address(table, idx)};
    auto next = read(level, table, idx);
    if (!next) {
      std::ostringstream os;
      os << "vpn 0x" << std::hex << vpn << " unmapped at level " << std::dec << level;
      throw Unmapped(os.str(), level);
    }
    table = *next;
  }
  result.leaf = table;
  return result;
}

WalkResult walk(const PageTable& pt, VirtualAddress vaddr) {
  return walk(pt.root(), vaddr,
              [&pt](int level, Pfn table, unsigned idx) { return pt.entry(level, table, idx); });
}

WalkPath walk_addresses(Pfn root, VirtualAddress vaddr, const EntryReader& read) {
  return walk(root, vaddr, read).path;
}

WalkPath walk_addresses(const PageTable& pt, VirtualAddress vaddr) { return walk(pt, vaddr).path; }

PhysicalAddress translate(const PageTable& pt, VirtualAddress vaddr) {
  return make_paddr(walk(pt, vaddr).leaf, vaddr.offset());
}

}  // namespace gmmu
