#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gmmu/types.hpp"

namespace gmmu {

enum class RecordKind : std::uint8_t { Read = 0, Write = 1, Delay = 2 };

struct TraceRecord {
  std::uint32_t warp = 0;
  RecordKind kind = RecordKind::Read;
  // Virtual address for Read/Write, cycle count for Delay.
  std::uint64_t payload = 0;

  bool is_memory() const { return kind != RecordKind::Delay; }
  bool operator==(const TraceRecord&) const = default;
};

inline constexpr std::size_t kTraceRecordBytes = 16;

// One application's trace. Records keep file order; per-warp streams are the
// subsequences with a given warp id.
struct AppTrace {
  std::string name;
  std::uint32_t warps = 0;
  std::vector<Vpn> pages;  // sorted, unique
  std::vector<TraceRecord> records;

  std::vector<std::vector<TraceRecord>> per_warp() const;
  // Throws UndeclaredPage / ParseError on the first bad record.
  void validate() const;
  bool operator==(const AppTrace&) const = default;
};

// Two-level reuse model: each warp revisits a small hot set with probability
// `locality` and otherwise advances a cold sweep through the working set.
struct SyntheticSpec {
  std::string name = "synthetic";
  std::uint32_t warps = 64;
  std::uint64_t working_set_pages = 256;
  double locality = 0.5;
  // 0: warps sweep disjoint stretches with private hot sets; 1: warps sweep in
  // lock step and share one hot set.
  double sharing = 0.0;
  // Mean non-memory cycles between consecutive memory records.
  double delay_per_mem = 4.0;
  std::uint64_t stream_length = 256;  // memory records per warp
  std::uint32_t hot_pages = 4;
  std::uint32_t accesses_per_page = 2;
  double write_fraction = 0.0;
  Vpn base_vpn = 0x10000;
  std::uint64_t seed = 1;

  // Throws SpecInvalid.
  void validate() const;
};

AppTrace generate(const SyntheticSpec& spec);

void write_trace(std::ostream& os, const AppTrace& trace);
void write_trace_file(const std::string& path, const AppTrace& trace);
AppTrace read_trace(std::istream& is);
AppTrace load_trace(const std::string& path);

}  // namespace gmmu
