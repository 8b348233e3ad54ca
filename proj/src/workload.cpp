#include "gmmu/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gmmu/errors.hpp"
#include "gmmu/rng.hpp"

namespace gmmu {

namespace {

constexpr const char* kMagic = "GMMUTRACE 1";
constexpr std::uint64_t kLinesPerPage = kPageBytes / 128;

void put_le(char* out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint64_t get_le(const unsigned char* in, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

}  // namespace

std::vector<std::vector<TraceRecord>> AppTrace::per_warp() const {
  std::vector<std::vector<TraceRecord>> out(warps);
  for (const auto& r : records) out.at(r.warp).push_back(r);
  return out;
}

void AppTrace::validate() const {
  if (warps == 0) throw ParseError("trace declares zero warps", 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.warp >= warps) {
      throw ParseError("record " + std::to_string(i) + ": warp " + std::to_string(r.warp) +
                           " outside declared " + std::to_string(warps),
                       i);
    }
    if (static_cast<std::uint8_t>(r.kind) > 2) {
      throw ParseError("record " + std::to_string(i) + ": unknown kind", i);
    }
    if (r.is_memory()) {
      const Vpn vpn = r.payload >> kPageShift;
      if (!std::binary_search(pages.begin(), pages.end(), vpn)) {
        throw UndeclaredPage("record " + std::to_string(i) + ": page " + hex(vpn) +
                                 " not in the declared page set",
                             i, vpn);
      }
    }
  }
}

void SyntheticSpec::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (warps == 0) throw SpecInvalid("warps must be positive");
  if (working_set_pages == 0) throw SpecInvalid("working_set_pages must be positive");
  if (!unit(locality)) throw SpecInvalid("locality must lie in [0, 1]");
  if (!unit(sharing)) throw SpecInvalid("sharing must lie in [0, 1]");
  if (!unit(write_fraction)) throw SpecInvalid("write_fraction must lie in [0, 1]");
  if (!(delay_per_mem >= 0.0) || !std::isfinite(delay_per_mem)) {
    throw SpecInvalid("delay_per_mem must be a finite non-negative number");
  }
  if (stream_length == 0) throw SpecInvalid("stream_length must be positive");
  if (hot_pages == 0) throw SpecInvalid("hot_pages must be positive");
  if (accesses_per_page == 0) throw SpecInvalid("accesses_per_page must be positive");
  if ((base_vpn + working_set_pages) >> 36) throw SpecInvalid("pages exceed the 48-bit space");
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw SpecInvalid("name must be a non-empty single word");
  }
}

AppTrace generate(const SyntheticSpec& spec) {
  spec.validate();
  const std::uint64_t ws = spec.working_set_pages;
  const std::uint64_t hot_n = std::min<std::uint64_t>(spec.hot_pages, ws);
  const double whole = std::floor(spec.delay_per_mem);
  const double frac = spec.delay_per_mem - whole;

  std::vector<std::vector<TraceRecord>> streams(spec.warps);
  for (std::uint32_t w = 0; w < spec.warps; ++w) {
    std::mt19937_64 rng(mix_seed(spec.seed, w));
    std::vector<std::uint64_t> hot(hot_n);
    for (std::uint64_t j = 0; j < hot_n; ++j) {
      hot[j] = uniform01(rng) < spec.sharing ? j : below(rng, ws);
    }
    const auto start = static_cast<std::uint64_t>(
        std::floor((1.0 - spec.sharing) * static_cast<double>(w) * static_cast<double>(ws) /
                   static_cast<double>(spec.warps)));
    std::uint64_t cold = 0;
    auto& out = streams[w];
    std::uint64_t emitted = 0;
    while (emitted < spec.stream_length) {
      std::uint64_t page;
      if (uniform01(rng) < spec.locality) {
        page = hot[below(rng, hot_n)];
      } else {
        page = (start + cold++) % ws;
      }
      const Vpn vpn = spec.base_vpn + page;
      const std::uint64_t first_line = below(rng, kLinesPerPage);
      for (std::uint32_t k = 0; k < spec.accesses_per_page && emitted < spec.stream_length; ++k) {
        const std::uint64_t line = (first_line + k) % kLinesPerPage;
        const bool write = spec.write_fraction > 0.0 && uniform01(rng) < spec.write_fraction;
        out.push_back(TraceRecord{w, write ? RecordKind::Write : RecordKind::Read,
                                  (vpn << kPageShift) | (line * 128)});
        ++emitted;
        auto delay = static_cast<std::uint64_t>(whole);
        if (frac > 0.0 && uniform01(rng) < frac) ++delay;
        if (delay) out.push_back(TraceRecord{w, RecordKind::Delay, delay});
      }
    }
  }

  AppTrace trace;
  trace.name = spec.name;
  trace.warps = spec.warps;
  // Interleave warps round-robin, the order a capture tool would see them.
  std::size_t longest = 0;
  for (const auto& s : streams) longest = std::max(longest, s.size());
  for (std::size_t i = 0; i < longest; ++i) {
    for (const auto& s : streams) {
      if (i < s.size()) trace.records.push_back(s[i]);
    }
  }
  for (const auto& r : trace.records) {
    if (r.is_memory()) trace.pages.push_back(r.payload >> kPageShift);
  }
  std::sort(trace.pages.begin(), trace.pages.end());
  trace.pages.erase(std::unique(trace.pages.begin(), trace.pages.end()), trace.pages.end());
  return trace;
}

void write_trace(std::ostream& os, const AppTrace& trace) {
  std::vector<std::pair<Vpn, std::uint64_t>> ranges;
  for (Vpn v : trace.pages) {
    if (!ranges.empty() && ranges.back().first + ranges.back().second == v) {
      ++ranges.back().second;
    } else {
      ranges.emplace_back(v, 1);
    }
  }
  os << kMagic << '\n';
  os << "app " << trace.name << '\n';
  os << "warps " << trace.warps << '\n';
  os << "pages " << ranges.size() << '\n';
  for (const auto& [start, count] : ranges) os << hex(start) << ' ' << count << '\n';
  os << "records " << trace.records.size() << '\n';
  os << "end-header\n";
  std::vector<char> buf(kTraceRecordBytes * 4096);
  std::size_t used = 0;
  for (const auto& r : trace.records) {
    char* p = buf.data() + used;
    put_le(p, r.warp, 4);
    p[4] = static_cast<char>(r.kind);
    p[5] = p[6] = p[7] = 0;
    put_le(p + 8, r.payload, 8);
    used += kTraceRecordBytes;
    if (used == buf.size()) {
      os.write(buf.data(), static_cast<std::streamsize>(used));
      used = 0;
    }
  }
  os.write(buf.data(), static_cast<std::streamsize>(used));
}

void write_trace_file(const std::string& path, const AppTrace& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_trace(os, trace);
  if (!os) throw Error("write to " + path + " failed");
}

AppTrace read_trace(std::istream& is) {
  std::uint64_t line_no = 0;
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) {
      throw ParseError("header line " + std::to_string(line_no + 1) + ": expected " + what +
                           ", got end of file",
                       line_no + 1);
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  auto field = [&](const char* key) {
    std::istringstream ls(line);
    std::string k, v, extra;
    if (!(ls >> k >> v) || k != key || (ls >> extra)) {
      throw ParseError("header line " + std::to_string(line_no) + ": expected '" + key +
                           " <value>', got '" + line + "'",
                       line_no);
    }
    return v;
  };
  auto number = [&](const std::string& text, int base) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(text, &used, base);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || text.empty() || text[0] == '-') {
      throw ParseError("header line " + std::to_string(line_no) + ": bad number '" + text + "'",
                       line_no);
    }
    return v;
  };

  next_line("trace magic");
  if (line != kMagic) {
    throw ParseError("header line 1: not a trace file (expected '" + std::string(kMagic) + "')", 1);
  }
  AppTrace trace;
  next_line("app");
  trace.name = field("app");
  next_line("warps");
  const std::uint64_t warps = number(field("warps"), 10);
  if (warps == 0 || warps > 0xFFFFFFFFULL) {
    throw ParseError("header line " + std::to_string(line_no) + ": warp count out of range", line_no);
  }
  trace.warps = static_cast<std::uint32_t>(warps);
  next_line("pages");
  const std::uint64_t ranges = number(field("pages"), 10);
  for (std::uint64_t i = 0; i < ranges; ++i) {
    next_line("page range");
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a >> b) || (ls >> extra)) {
      throw ParseError("header line " + std::to_string(line_no) + ": expected '<start> <count>'",
                       line_no);
    }
    const Vpn start = number(a, 16);
    const std::uint64_t count = number(b, 10);
    if (count == 0 || ((start + count - 1) >> 36)) {
      throw ParseError("header line " + std::to_string(line_no) + ": page range out of range",
                       line_no);
    }
    for (std::uint64_t k = 0; k < count; ++k) trace.pages.push_back(start + k);
  }
  std::sort(trace.pages.begin(), trace.pages.end());
  trace.pages.erase(std::unique(trace.pages.begin(), trace.pages.end()), trace.pages.end());
  next_line("records");
  const std::uint64_t n = number(field("records"), 10);
  next_line("end-header");
  if (line != "end-header") {
    throw ParseError("header line " + std::to_string(line_no) + ": expected 'end-header'", line_no);
  }

  trace.records.reserve(n);
  unsigned char rec[kTraceRecordBytes];
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!is.read(reinterpret_cast<char*>(rec), kTraceRecordBytes)) {
      throw ParseError("record " + std::to_string(i) + ": truncated (expected " +
                           std::to_string(n) + " records)",
                       i);
    }
    if (rec[4] > 2) {
      throw ParseError("record " + std::to_string(i) + ": unknown kind " + std::to_string(rec[4]), i);
    }
    trace.records.push_back(TraceRecord{static_cast<std::uint32_t>(get_le(rec, 4)),
                                        static_cast<RecordKind>(rec[4]), get_le(rec + 8, 8)});
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw ParseError("record " + std::to_string(n) + ": trailing bytes after the last record", n);
  }
  trace.validate();
  return trace;
}

AppTrace load_trace(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open trace " + path, 0);
  try {
    return read_trace(is);
  } catch (const UndeclaredPage& e) {
    throw UndeclaredPage(path + ": " + e.what(), e.record(), e.vpn());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.record());
  }
}

}  // namespace gmmu
