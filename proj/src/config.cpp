#include "gmmu/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gmmu/errors.hpp"

namespace gmmu {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Reads typed values out of one section and remembers which keys it touched,
// so leftovers can be reported as unknown.
class Section {
 public:
  Section(const ConfigFile& f, std::string name) : f_(f), name_(std::move(name)) {}

  std::string key_name(const std::string& key) const { return name_ + "." + key; }

  std::optional<std::string> raw(const std::string& key) {
    seen_.insert(key);
    return f_.get(name_, key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (auto v = raw(key)) out = convert<T>(key, *v);
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    if (auto v = raw(key)) out = convert<T>(key, *v);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(key_name(key), what);
  }

  void reject_unknown() const {
    for (const auto& k : f_.keys(name_)) {
      if (!seen_.count(k)) fail(k, "unknown key");
    }
  }

  template <class T>
  T convert(const std::string& key, const std::string& v) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      fail(key, "expected a boolean, got '" + v + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_floating_point_v<T>) {
      T x{};
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size()) fail(key, "expected a number, got '" + v + "'");
      return x;
    } else {
      T x{};
      int base = 10;
      const char* b = v.data();
      if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
        base = 16;
        b += 2;
      }
      auto [p, ec] = std::from_chars(b, v.data() + v.size(), x, base);
      if (ec != std::errc() || p != v.data() + v.size() || b == v.data() + v.size()) {
        fail(key, "expected an integer, got '" + v + "'");
      }
      return x;
    }
  }

 private:
  const ConfigFile& f_;
  std::string name_;
  std::set<std::string> seen_;
};

Design design_of(Section& s, const std::string& key, const std::string& v) {
  auto d = parse_design(v);
  if (!d) s.fail(key, "unknown design '" + v + "'");
  return *d;
}

void read_spec(Section& s, SyntheticSpec& spec) {
  s.get("warps", spec.warps);
  s.get("working_set_pages", spec.working_set_pages);
  s.get("locality", spec.locality);
  s.get("sharing", spec.sharing);
  s.get("delay_per_mem", spec.delay_per_mem);
  s.get("stream_length", spec.stream_length);
  s.get("hot_pages", spec.hot_pages);
  s.get("accesses_per_page", spec.accesses_per_page);
  s.get("write_fraction", spec.write_fraction);
  s.get("base_vpn", spec.base_vpn);
  s.get("seed", spec.seed);
}

void read_hardware(Section& s, HardwareConfig& hw) {
  s.get("cores", hw.cores);
  s.get("warps_per_core", hw.max_warps_per_core);
  s.get("l1_tlb_entries", hw.l1_tlb.entries);
  s.get("l1_tlb_ways", hw.l1_tlb.ways);
  s.get("l1_tlb_latency", hw.l1_tlb_latency);
  s.get("l2_tlb_entries", hw.l2_tlb.entries);
  s.get("l2_tlb_ways", hw.l2_tlb.ways);
  s.get("l2_tlb_latency", hw.l2_tlb_latency);
  s.get("l2_tlb_ports", hw.l2_tlb_ports);
  s.get("bypass_cache_entries", hw.bypass_cache_entries);
  s.get("walker_threads", hw.walker_threads);
  s.get("pwc_entries", hw.pwc.entries);
  s.get("pwc_ways", hw.pwc.ways);
  s.get("pwc_latency", hw.pwc_latency);
  s.get("l2_cache_bytes", hw.l2_cache.bytes);
  s.get("l2_cache_ways", hw.l2_cache.ways);
  s.get("l2_cache_line", hw.l2_cache.line_bytes);
  s.get("l2_cache_banks", hw.l2_cache.banks);
  s.get("l2_cache_latency", hw.l2_cache.hit_latency);
  s.get("dram_channels", hw.dram.channels);
  s.get("dram_banks", hw.dram.banks);
  s.get("dram_row_bytes", hw.dram.row_bytes);
  s.get("dram_row_hit", hw.dram_timing.row_hit);
  s.get("dram_row_miss", hw.dram_timing.row_miss);
  s.get("dram_row_closed", hw.dram_timing.row_closed);
  s.get("dram_burst", hw.dram_timing.burst);
  if (auto v = s.raw("dram_row_policy")) {
    if (*v == "open") hw.dram_timing.policy = RowPolicy::Open;
    else if (*v == "closed") hw.dram_timing.policy = RowPolicy::Closed;
    else s.fail("dram_row_policy", "expected open or closed, got '" + *v + "'");
  }
  s.get("golden_queue", hw.dram_queues.golden);
  s.get("silver_queue", hw.dram_queues.silver);
  s.get("normal_queue", hw.dram_queues.normal);
  s.get("single_queue", hw.dram_queues.single);
  s.get("memory_bytes", hw.memory.capacity_bytes);
  s.get("chunk_frames", hw.memory.chunk_frames);
  hw.dram.line_bytes = hw.l2_cache.line_bytes;

  auto positive = [&](const char* key, std::uint64_t v) {
    if (v == 0) s.fail(key, "must be positive");
  };
  positive("cores", hw.cores);
  positive("warps_per_core", hw.max_warps_per_core);
  if (hw.max_warps_per_core > 64) s.fail("warps_per_core", "at most 64 warps per core");
  positive("l1_tlb_ways", hw.l1_tlb.ways);
  positive("l2_tlb_ways", hw.l2_tlb.ways);
  positive("l2_tlb_ports", hw.l2_tlb_ports);
  positive("walker_threads", hw.walker_threads);
  positive("pwc_ways", hw.pwc.ways);
  positive("l2_cache_ways", hw.l2_cache.ways);
  positive("l2_cache_line", hw.l2_cache.line_bytes);
  positive("l2_cache_banks", hw.l2_cache.banks);
  positive("dram_channels", hw.dram.channels);
  positive("dram_banks", hw.dram.banks);
  positive("dram_row_bytes", hw.dram.row_bytes);
  positive("chunk_frames", hw.memory.chunk_frames);
  if (hw.l1_tlb.entries % hw.l1_tlb.ways) s.fail("l1_tlb_entries", "not a multiple of l1_tlb_ways");
  if (hw.l2_tlb.entries % hw.l2_tlb.ways) s.fail("l2_tlb_entries", "not a multiple of l2_tlb_ways");
  if (hw.pwc.entries % hw.pwc.ways) s.fail("pwc_entries", "not a multiple of pwc_ways");
  if (hw.l2_cache.bytes % (hw.l2_cache.line_bytes * hw.l2_cache.ways) || hw.l2_cache.sets() == 0) {
    s.fail("l2_cache_bytes", "not a whole number of sets");
  }
  if (hw.dram.row_bytes % hw.dram.line_bytes) s.fail("dram_row_bytes", "not a multiple of the line size");
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in, const std::string& origin) {
  ConfigFile f;
  f.origin_ = origin;
  std::string section, line;
  std::size_t lineno = 0;
  auto where = [&] { return origin + ":" + std::to_string(lineno); };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where(), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where(), "empty section name");
      if (f.values_.count(section)) throw ConfigError(section, "section repeated at " + where());
      f.values_[section];
      f.order_.push_back(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where(), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where(), "missing key");
    if (section.empty()) throw ConfigError(key, "key outside any section at " + where());
    auto& sec = f.values_[section];
    if (sec.count(key)) throw ConfigError(section + "." + key, "set twice");
    sec[key] = trim(line.substr(eq + 1));
  }
  return f;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  ConfigFile f = parse(in, path);
  const auto parent = std::filesystem::path(path).parent_path();
  f.base_dir_ = parent.empty() ? "." : parent.string();
  return f;
}

std::string ConfigFile::env_name(const std::string& section, const std::string& key) {
  std::string out = "GMMU_";
  auto add = [&out](const std::string& s) {
    for (char ch : s) {
      const auto u = static_cast<unsigned char>(ch);
      out += std::isalnum(u) ? static_cast<char>(std::toupper(u)) : '_';
    }
  };
  add(section);
  out += '_';
  add(key);
  return out;
}

std::optional<std::string> ConfigFile::get(const std::string& section, const std::string& key) const {
  if (const char* env = std::getenv(env_name(section, key).c_str())) return trim(env);
  auto s = values_.find(section);
  if (s == values_.end()) return std::nullopt;
  auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

bool ConfigFile::has_section(const std::string& section) const { return values_.count(section) > 0; }

std::vector<std::string> ConfigFile::sections() const { return order_; }

std::vector<std::string> ConfigFile::keys(const std::string& section) const {
  std::vector<std::string> out;
  auto s = values_.find(section);
  if (s != values_.end()) {
    for (const auto& [k, v] : s->second) out.push_back(k);
  }
  return out;
}

SimConfig ExperimentConfig::sim_for(Design d) const {
  SimConfig c = sim;
  c.design = design_flags(d);
  // Overrides only touch the MASK components; Static/Ideal keep their meaning.
  if (tlb_tokens) c.design.tlb_tokens = *tlb_tokens;
  if (bypass_cache) c.design.bypass_cache = *bypass_cache;
  if (cache_bypass) c.design.cache_bypass = *cache_bypass;
  if (page_walk_cache) c.design.page_walk_cache = *page_walk_cache;
  if (dram_scheduler) c.design.dram_scheduler = *dram_scheduler;
  return c;
}

std::vector<std::uint32_t> ExperimentConfig::core_split() const {
  if (!cores.empty()) return cores;
  const auto n = static_cast<std::uint32_t>(apps.size());
  std::vector<std::uint32_t> out(n, sim.hw.cores / n);
  for (std::uint32_t i = 0; i < sim.hw.cores % n; ++i) ++out[i];
  return out;
}

ExperimentConfig parse_experiment(const ConfigFile& file) {
  ExperimentConfig cfg;
  std::set<std::string> known{"hardware", "design", "experiment", "workload", "output"};

  Section hw(file, "hardware");
  read_hardware(hw, cfg.sim.hw);
  hw.reject_unknown();

  Section ds(file, "design");
  if (auto v = ds.raw("designs")) {
    cfg.designs.clear();
    for (const auto& name : split_list(*v)) cfg.designs.push_back(design_of(ds, "designs", name));
    if (cfg.designs.empty()) ds.fail("designs", "empty design list");
  }
  ds.get("epoch", cfg.sim.mask.epoch_length);
  ds.get("initial_tokens", cfg.sim.mask.tokens.initial_tokens);
  ds.get("token_step", cfg.sim.mask.tokens.step_fraction);
  ds.get("thres_max", cfg.sim.mask.thres_max);
  ds.get("silver_idle_window", cfg.sim.mask.silver_idle_window);
  ds.get("bypass_min_samples", cfg.sim.mask.bypass_min_samples);
  ds.get("tlb_tokens", cfg.tlb_tokens);
  ds.get("bypass_cache", cfg.bypass_cache);
  ds.get("cache_bypass", cfg.cache_bypass);
  ds.get("page_walk_cache", cfg.page_walk_cache);
  if (auto v = ds.raw("dram_scheduler")) {
    if (*v == "frfcfs") cfg.dram_scheduler = SchedulerKind::FrFcfs;
    else if (*v == "mask") cfg.dram_scheduler = SchedulerKind::Mask;
    else ds.fail("dram_scheduler", "expected frfcfs or mask, got '" + *v + "'");
  }
  if (cfg.sim.mask.epoch_length == 0) ds.fail("epoch", "must be positive");
  const double it = cfg.sim.mask.tokens.initial_tokens;
  if (!(it >= 0.0 && it <= 1.0)) ds.fail("initial_tokens", "must lie in [0, 1]");
  const double st = cfg.sim.mask.tokens.step_fraction;
  if (!(st >= 0.0 && st <= 1.0)) ds.fail("token_step", "must lie in [0, 1]");
  ds.reject_unknown();

  Section ex(file, "experiment");
  ex.get("seed", cfg.sim.seed);
  ex.get("max_cycles", cfg.sim.max_cycles);
  ex.get("sample_interval", cfg.sim.sample_interval);
  if (cfg.sim.sample_interval == 0) ex.fail("sample_interval", "must be positive");
  if (auto v = ex.raw("alone_design")) cfg.alone_design = design_of(ex, "alone_design", *v);
  if (auto v = ex.raw("partition")) {
    if (*v == "explicit") cfg.partition = PartitionMode::Explicit;
    else if (*v == "sweep") cfg.partition = PartitionMode::Sweep;
    else ex.fail("partition", "expected explicit or sweep, got '" + *v + "'");
  }
  if (auto v = ex.raw("cores")) {
    for (const auto& item : split_list(*v)) cfg.cores.push_back(ex.convert<std::uint32_t>("cores", item));
  }
  ex.reject_unknown();

  Section wl(file, "workload");
  wl.get("name", cfg.workload);
  std::vector<std::string> names;
  if (auto v = wl.raw("apps")) names = split_list(*v);
  if (names.empty()) wl.fail("apps", "no applications listed");
  if (names.size() > 64) wl.fail("apps", "at most 64 applications");
  wl.reject_unknown();
  if (cfg.workload.empty() || cfg.workload.find_first_of(",\n\"") != std::string::npos) {
    wl.fail("name", "must be non-empty without commas or quotes");
  }

  std::set<std::string> dup;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string sec = "app." + names[i];
    if (!dup.insert(names[i]).second) wl.fail("apps", "application '" + names[i] + "' listed twice");
    known.insert(sec);
    Section as(file, sec);
    AppSource src;
    src.name = names[i];
    src.spec.name = names[i];
    src.spec.seed = cfg.sim.seed + i;
    as.get("trace", src.trace_path);
    read_spec(as, src.spec);
    if (!src.trace_path.empty()) {
      for (const auto& k : file.keys(sec)) {
        if (k != "trace") as.fail(k, "synthetic keys cannot be combined with trace");
      }
      std::filesystem::path p(src.trace_path);
      if (p.is_relative()) src.trace_path = (std::filesystem::path(file.base_dir()) / p).string();
    } else {
      try {
        src.spec.validate();
      } catch (const SpecInvalid& e) {
        throw ConfigError(sec, e.what());
      }
    }
    as.reject_unknown();
    cfg.apps.push_back(std::move(src));
  }

  if (!cfg.cores.empty()) {
    if (cfg.cores.size() != cfg.apps.size()) ex.fail("cores", "needs one core count per application");
    std::uint64_t total = 0;
    for (auto c : cfg.cores) {
      if (c == 0) ex.fail("cores", "every application needs at least one core");
      total += c;
    }
    if (total > cfg.sim.hw.cores) ex.fail("cores", "more cores than hardware.cores");
  } else if (cfg.apps.size() > cfg.sim.hw.cores) {
    ex.fail("cores", "more applications than cores");
  }
  if (cfg.partition == PartitionMode::Sweep && cfg.apps.size() != 2) {
    ex.fail("partition", "sweep needs exactly two applications");
  }

  Section out(file, "output");
  out.get("csv", cfg.csv_path);
  out.get("report", cfg.report_path);
  out.reject_unknown();

  for (const auto& s : file.sections()) {
    if (!known.count(s)) throw ConfigError(s, "unknown section");
  }
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) { return parse_experiment(ConfigFile::load(path)); }

SyntheticSpec parse_spec(const ConfigFile& file) {
  SyntheticSpec spec;
  Section s(file, "spec");
  s.get("name", spec.name);
  read_spec(s, spec);
  s.reject_unknown();
  for (const auto& sec : file.sections()) {
    if (sec != "spec") throw ConfigError(sec, "unknown section");
  }
  try {
    spec.validate();
  } catch (const SpecInvalid& e) {
    throw ConfigError("spec", e.what());
  }
  return spec;
}

}  // namespace gmmu
