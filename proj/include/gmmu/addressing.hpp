#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gmmu/types.hpp"

namespace gmmu {

inline constexpr unsigned kVpnBits = kWalkLevels * kLevelIndexBits;  // 36

// Index into the level-`level` table (1 = root) for this virtual page.
constexpr unsigned level_index(Vpn vpn, int level) {
  return static_cast<unsigned>((vpn >> (kLevelIndexBits * (kWalkLevels - level))) &
                               ((1U << kLevelIndexBits) - 1));
}

constexpr PhysicalAddress entry_address(Pfn table, unsigned index) {
  return PhysicalAddress{(table << kPageShift) + static_cast<std::uint64_t>(index) * kPteBytes};
}

struct PhysicalMemoryConfig {
  std::uint64_t capacity_bytes = 4ULL << 30;
  // Frames are handed out in contiguous chunks so an application's pages stay
  // physically adjacent (DRAM row locality survives translation).
  std::uint64_t chunk_frames = 512;
};

struct WalkStep {
  std::uint8_t walk_depth = 0;
  PhysicalAddress entry;
  auto operator<=>(const WalkStep&) const = default;
};

using WalkPath = std::array<WalkStep, kWalkLevels>;

struct WalkResult {
  WalkPath path;
  Pfn leaf = 0;
};

// Reads the next-level frame stored at (level, table frame, index). Returning
// nullopt means the entry is absent.
using EntryReader = std::function<std::optional<Pfn>(int level, Pfn table, unsigned index)>;

class PageTable {
 public:
  PageTable() = default;
  PageTable(Asid asid, Pfn root) : asid_(asid), root_(root) {}

  Asid asid() const { return asid_; }
  Pfn root() const { return root_; }

  std::optional<Pfn> entry(int level, Pfn table, unsigned index) const;

  // Frames holding page-table nodes (root first) and data pages, in
  // allocation order.
  const std::vector<Pfn>& table_frames() const { return table_frames_; }
  const std::vector<Pfn>& data_frames() const { return data_frames_; }
  // Number of table nodes that live at `level` (1 = root level).
  std::size_t tables_at_level(int level) const;
  std::size_t mapped_pages() const { return data_frames_.size(); }

 private:
  friend class PageTableBuilder;

  static std::uint64_t node_key(int level, Pfn table, unsigned index) {
    return (table << 12) | (static_cast<std::uint64_t>(level - 1) << 9) | index;
  }

  Asid asid_;
  Pfn root_ = 0;
  std::unordered_map<std::uint64_t, Pfn> nodes_;
  std::vector<Pfn> table_frames_;
  std::vector<Pfn> data_frames_;
  std::array<std::size_t, kWalkLevels> level_tables_{};
};

struct AppPages {
  Asid asid;
  std::vector<Vpn> vpns;  // any order, duplicates ignored
};

// Builds one page table per application over disjoint physical frames.
// Throws CapacityExceeded when the frame pool cannot hold everything.
std::vector<PageTable> build_page_tables(const std::vector<AppPages>& apps,
                                         std::uint64_t allocator_seed,
                                         const PhysicalMemoryConfig& memory = {});

WalkResult walk(Pfn root, VirtualAddress vaddr, const EntryReader& read);
WalkResult walk(const PageTable& pt, VirtualAddress vaddr);

// The four dependent entry reads, root level first. Throws Unmapped.
WalkPath walk_addresses(const PageTable& pt, VirtualAddress vaddr);
WalkPath walk_addresses(Pfn root, VirtualAddress vaddr, const EntryReader& read);

PhysicalAddress translate(const PageTable& pt, VirtualAddress vaddr);

}  // namespace gmmu
