#include "gmmu/experiment.hpp"

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "gmmu/errors.hpp"
#include "gmmu/metrics.hpp"
#include "json.hpp"

namespace gmmu {

namespace {

using nlohmann::json;

std::uint64_t sum_apps(const RunStats& s, std::uint64_t AppStats::*field) {
  std::uint64_t n = 0;
  for (const auto& a : s.apps) n += a.*field;
  return n;
}

template <class T, class F>
std::string joined(const std::vector<T>& v, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += fmt(v[i]);
  }
  return out;
}

std::string u64(std::uint64_t v) { return std::to_string(v); }

ClassCounters walk_counters(const CacheStats& c) {
  ClassCounters w;
  for (std::size_t d = 1; d < c.classes.size(); ++d) {
    w.hits += c.classes[d].hits;
    w.accesses += c.classes[d].accesses;
  }
  return w;
}

Cycle total_cycles(const RunStats& s) { return s.cycles + s.drain_cycles; }

double bandwidth(std::uint64_t bytes, const RunStats& s) {
  const Cycle c = total_cycles(s);
  return c ? static_cast<double>(bytes) / static_cast<double>(c) : 0.0;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

std::vector<AppTrace> load_apps(const ExperimentConfig& cfg) {
  std::vector<AppTrace> traces;
  for (const auto& app : cfg.apps) {
    if (app.trace_path.empty()) {
      traces.push_back(generate(app.spec));
    } else {
      traces.push_back(load_trace(app.trace_path));
    }
    // Rows are keyed by the config's name for the app, whatever the file says.
    traces.back().name = app.name;
  }
  return traces;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const std::vector<AppTrace> traces = load_apps(cfg);
  std::vector<const AppTrace*> ptrs;
  for (const auto& t : traces) ptrs.push_back(&t);

  SimConfig alone_cfg = cfg.sim_for(cfg.alone_design);
  std::map<std::pair<std::size_t, std::uint32_t>, double> alone_memo;
  auto alone = [&](std::size_t i, std::uint32_t k) {
    auto key = std::make_pair(i, k);
    auto it = alone_memo.find(key);
    if (it != alone_memo.end()) return it->second;
    const double ipc = run_pair(alone_cfg, {ptrs[i]}, {k}).apps[0].ipc;
    alone_memo.emplace(key, ipc);
    return ipc;
  };

  ExperimentResult out;
  out.workload = cfg.workload;
  for (Design d : cfg.designs) {
    DesignResult r;
    r.design = d;
    for (const auto& a : cfg.apps) r.apps.push_back(a.name);
    const SimConfig sim = cfg.sim_for(d);
    if (cfg.partition == PartitionMode::Sweep) {
      PartitionSweep ps = partition_sweep(sim, alone_cfg, traces[0], traces[1]);
      SweepPoint& best = ps.points[ps.best];
      r.cores = best.cores;
      r.shared = std::move(best.shared);
      r.ipc_alone = best.ipc_alone;
    } else {
      r.cores = cfg.core_split();
      r.shared = run_pair(sim, ptrs, r.cores);
      for (std::size_t i = 0; i < ptrs.size(); ++i) r.ipc_alone.push_back(alone(i, r.cores[i]));
    }
    for (const auto& a : r.shared.apps) r.ipc_shared.push_back(a.ipc);
    r.weighted_speedup = weighted_speedup(r.ipc_shared, r.ipc_alone);
    r.unfairness = unfairness(r.ipc_shared, r.ipc_alone);
    out.designs.push_back(std::move(r));
  }
  return out;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "workload",          "design",
      "apps",              "cores",
      "ipc_shared",        "ipc_alone",
      "weighted_speedup",  "unfairness",
      "cycles",            "truncated",
      "epochs",            "l1_tlb_hit_rate",
      "l2_tlb_hit_rate",   "tlb_hit_rate",
      "bypass_hit_rate",   "app_l1_tlb_hit_rate",
      "app_l2_tlb_hit_rate", "walk_cache_hit_rate",
      "data_cache_hit_rate", "dram_data_bandwidth",
      "dram_walk_bandwidth", "dram_bandwidth",
      "dram_data_latency", "dram_walk_latency",
      "stalled_warps_per_miss", "max_concurrent_walks",
      "walks",             "tokens",
  };
  return cols;
}

std::string csv_header() {
  std::string out;
  for (const auto& c : csv_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::string csv_row(const std::string& workload, const DesignResult& r) {
  const RunStats& s = r.shared;
  const std::uint64_t l1p = sum_apps(s, &AppStats::l1_probes);
  const std::uint64_t l1h = sum_apps(s, &AppStats::l1_hits);
  const std::uint64_t l2p = sum_apps(s, &AppStats::l2_probes);
  const std::uint64_t l2h = sum_apps(s, &AppStats::l2_hits);
  const std::uint64_t byh = sum_apps(s, &AppStats::l2_bypass_hits);
  const ClassCounters walk = walk_counters(s.cache);
  const ClassCounters& data = s.cache.classes[0];
  auto num = [](double v) { return format_number(v); };

  std::vector<std::string> f;
  f.push_back(workload);
  f.push_back(design_name(r.design));
  f.push_back(joined(r.apps, [](const std::string& a) { return a; }));
  f.push_back(joined(r.cores, [](std::uint32_t c) { return std::to_string(c); }));
  f.push_back(joined(r.ipc_shared, num));
  f.push_back(joined(r.ipc_alone, num));
  f.push_back(num(r.weighted_speedup));
  f.push_back(num(r.unfairness));
  f.push_back(u64(s.cycles));
  f.push_back(s.truncated ? "1" : "0");
  f.push_back(u64(s.epochs));
  f.push_back(num(rate(l1h, l1p)));
  f.push_back(num(rate(l2h, l2p)));
  f.push_back(num(rate(l1h + l2h, l1p)));
  f.push_back(num(rate(byh, l2p)));
  f.push_back(joined(s.apps, [&](const AppStats& a) { return num(rate(a.l1_hits, a.l1_probes)); }));
  f.push_back(joined(s.apps, [&](const AppStats& a) { return num(rate(a.l2_hits, a.l2_probes)); }));
  f.push_back(num(walk.hit_rate()));
  f.push_back(num(data.hit_rate()));
  f.push_back(num(bandwidth(s.dram.data.bytes, s)));
  f.push_back(num(bandwidth(s.dram.translation.bytes, s)));
  f.push_back(num(bandwidth(s.dram.data.bytes + s.dram.translation.bytes, s)));
  f.push_back(num(s.dram.data.mean_latency()));
  f.push_back(num(s.dram.translation.mean_latency()));
  f.push_back(num(rate(s.sampled_stalled_warps, s.sampled_misses)));
  f.push_back(u64(s.max_concurrent_walks));
  f.push_back(u64(s.walks_completed));
  f.push_back(joined(s.apps, [](const AppStats& a) { return std::to_string(a.token_count); }));

  std::string out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (i) out += ',';
    out += f[i];
  }
  return out;
}

void write_csv(std::ostream& os, const ExperimentResult& r) {
  os << csv_header() << '\n';
  for (const auto& d : r.designs) os << csv_row(r.workload, d) << '\n';
}

std::string report_json(const ExperimentResult& r) {
  json rows = json::array();
  for (const auto& d : r.designs) {
    const RunStats& s = d.shared;
    json apps = json::array();
    for (std::size_t i = 0; i < s.apps.size(); ++i) {
      const auto& a = s.apps[i];
      apps.push_back({{"name", d.apps[i]},
                      {"cores", d.cores[i]},
                      {"ipc_shared", d.ipc_shared[i]},
                      {"ipc_alone", d.ipc_alone[i]},
                      {"slowdown", d.ipc_alone[i] / d.ipc_shared[i]},
                      {"retired", a.retired},
                      {"passes", a.passes},
                      {"l1_probes", a.l1_probes},
                      {"l1_hits", a.l1_hits},
                      {"l2_probes", a.l2_probes},
                      {"l2_hits", a.l2_hits},
                      {"l2_bypass_hits", a.l2_bypass_hits},
                      {"walks", a.walks},
                      {"token_count", a.token_count},
                      {"max_warps_stalled", a.max_warps_stalled},
                      {"max_concurrent_walks", a.max_concurrent_walks}});
    }
    json classes = json::array();
    for (std::size_t c = 0; c < s.cache.classes.size(); ++c) {
      classes.push_back({{"walk_depth", c},
                         {"hits", s.cache.classes[c].hits},
                         {"accesses", s.cache.classes[c].accesses},
                         {"bypassed", s.cache.bypassed[c]}});
    }
    auto dram_class = [](const DramClassStats& c) {
      return json{{"serviced", c.serviced},
                  {"bytes", c.bytes},
                  {"latency_sum", c.latency_sum},
                  {"row_hits", c.row_hits}};
    };
    json debug = {
        {"cycles", s.cycles},
        {"drain_cycles", s.drain_cycles},
        {"issued_records", s.issued_records},
        {"core_stall_cycles", s.core_stall_cycles},
        {"walks_started", s.walks_started},
        {"walks_completed", s.walks_completed},
        {"walk_memory_requests", s.walk_memory_requests},
        {"pwc_hits", s.pwc_hits},
        {"pwc_misses", s.pwc_misses},
        {"fills_main", s.fills_main},
        {"fills_bypass", s.fills_bypass},
        {"fills_dropped", s.fills_dropped},
        {"l2_tlb_port_stall_cycles", s.l2_tlb_port_stall_cycles},
        {"l2_mshr_merges", s.l2_mshr_merges},
        {"samples", s.samples},
        {"sampled_misses", s.sampled_misses},
        {"sampled_stalled_warps", s.sampled_stalled_warps},
        {"cache_classes", classes},
        {"cache_merged", s.cache.merged},
        {"cache_bank_stall_cycles", s.cache.bank_stall_cycles},
        {"dram_data", dram_class(s.dram.data)},
        {"dram_translation", dram_class(s.dram.translation)},
        {"dram_admissions", s.dram.admissions},
        {"dram_backpressure", s.dram.backpressure},
        {"audit",
         {{"submitted", s.audit.submitted},
          {"serviced", s.audit.serviced},
          {"duplicates", s.audit.duplicates},
          {"pending", s.audit.pending},
          {"ok", s.audit.ok()}}},
        {"requests_live_at_end", s.requests_live_at_end},
        {"mshrs_live_at_end", s.mshrs_live_at_end},
    };
    rows.push_back({{"design", design_name(d.design)},
                    {"weighted_speedup", d.weighted_speedup},
                    {"unfairness", d.unfairness},
                    {"truncated", s.truncated},
                    {"epochs", s.epochs},
                    {"apps", apps},
                    {"histograms",
                     {{"stalled_warps_per_miss", s.stalled_warps_per_miss.buckets},
                      {"concurrent_walks", s.concurrent_walks.buckets}}},
                    {"debug", debug}});
  }
  json doc = {{"workload", r.workload}, {"columns", csv_columns()}, {"rows", rows}};
  return doc.dump(2) + "\n";
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (out.empty()) throw ConfigError(pattern, "no config files match");
  std::sort(out.begin(), out.end());
  return out;
}

SweepResult sweep(const std::vector<std::string>& configs, unsigned parallel) {
  if (configs.empty()) throw ConfigError("sweep", "no config files given");
  struct Slot {
    std::vector<std::tuple<std::string, std::string, std::string>> rows;  // workload, design, line
    std::string error;
    bool failed = false;
  };
  std::vector<Slot> slots(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        const ExperimentResult r = run_experiment(load_experiment(configs[i]));
        for (const auto& d : r.designs) {
          slots[i].rows.emplace_back(r.workload, design_name(d.design), csv_row(r.workload, d));
        }
      } catch (const std::exception& e) {
        slots[i].failed = true;
        slots[i].error = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(parallel, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<std::tuple<std::string, std::string, std::size_t, std::string>> all;
  SweepResult out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].failed) out.failures.push_back({configs[i], slots[i].error});
    for (const auto& [w, d, line] : slots[i].rows) all.emplace_back(w, d, i, line);
  }
  std::sort(all.begin(), all.end());
  for (auto& row : all) out.rows.push_back(std::get<3>(row));
  return out;
}

void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << csv_header() << '\n';
  for (const auto& row : r.rows) os << row << '\n';
}

}  // namespace gmmu
