#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace gmmu {

using Cycle = std::uint64_t;
using Vpn = std::uint64_t;
using Pfn = std::uint64_t;
using CoreId = std::uint32_t;
// Global warp index inside one simulation (unique across applications).
using WarpId = std::uint32_t;

inline constexpr unsigned kPageShift = 12;
inline constexpr std::uint64_t kPageBytes = 1ULL << kPageShift;
inline constexpr std::uint64_t kPageOffsetMask = kPageBytes - 1;
inline constexpr int kWalkLevels = 4;
inline constexpr unsigned kLevelIndexBits = 9;
inline constexpr unsigned kPteBytes = 8;
// Silver-queue counters are 6 bits wide, which caps concurrent applications.
inline constexpr unsigned kMaxApps = 64;

struct Asid {
  std::uint8_t value = 0;

  constexpr Asid() = default;
  constexpr explicit Asid(std::uint8_t v) : value(v) {}
  constexpr auto operator<=>(const Asid&) const = default;
};

struct VirtualAddress {
  std::uint64_t value = 0;

  constexpr VirtualAddress() = default;
  constexpr explicit VirtualAddress(std::uint64_t v) : value(v) {}
  constexpr Vpn vpn() const { return value >> kPageShift; }
  constexpr std::uint64_t offset() const { return value & kPageOffsetMask; }
  constexpr auto operator<=>(const VirtualAddress&) const = default;
};

struct PhysicalAddress {
  std::uint64_t value = 0;

  constexpr PhysicalAddress() = default;
  constexpr explicit PhysicalAddress(std::uint64_t v) : value(v) {}
  constexpr Pfn pfn() const { return value >> kPageShift; }
  constexpr std::uint64_t offset() const { return value & kPageOffsetMask; }
  constexpr auto operator<=>(const PhysicalAddress&) const = default;
};

constexpr PhysicalAddress make_paddr(Pfn pfn, std::uint64_t offset) {
  return PhysicalAddress{(pfn << kPageShift) | (offset & kPageOffsetMask)};
}

// Tag identifying a translation: one ASID-qualified virtual page.
struct PageKey {
  Asid asid;
  Vpn vpn = 0;

  constexpr auto operator<=>(const PageKey&) const = default;
  constexpr std::uint64_t packed() const {
    return (static_cast<std::uint64_t>(asid.value) << 56) | (vpn & ((1ULL << 56) - 1));
  }
};

// 3-bit request class: 0 = data, 1..6 = walk level, 7 = anything deeper.
constexpr std::uint8_t walk_depth_tag(int level) {
  if (level <= 0) return 0;
  return level > 6 ? 7 : static_cast<std::uint8_t>(level);
}

struct MemoryRequest {
  Asid asid;
  VirtualAddress vaddr;
  std::optional<PhysicalAddress> paddr;
  bool is_write = false;
  std::uint8_t walk_depth = 0;
  CoreId issuing_core = 0;
  std::vector<WarpId> stalled_warps;
  Cycle issue_cycle = 0;

  bool is_translation() const { return walk_depth != 0; }
};

}  // namespace gmmu

template <>
struct std::hash<gmmu::PageKey> {
  std::size_t operator()(const gmmu::PageKey& k) const noexcept {
    // splitmix64 finalizer; vpns are dense so identity hashing clusters badly.
    std::uint64_t x = k.packed() + 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return static_cast<std::size_t>(x ^ (x >> 31));
  }
};
