#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "gmmu/addressing.hpp"
#include "gmmu/dram.hpp"
#include "gmmu/event_log.hpp"
#include "gmmu/l2cache.hpp"
#include "gmmu/tlb.hpp"
#include "gmmu/walker.hpp"
#include "gmmu/workload.hpp"

namespace gmmu {

struct HardwareConfig {
  std::uint32_t cores = 30;
  std::uint32_t max_warps_per_core = 64;
  TlbGeometry l1_tlb{64, 64};
  Cycle l1_tlb_latency = 1;
  TlbGeometry l2_tlb{512, 16};
  Cycle l2_tlb_latency = 10;
  std::uint32_t l2_tlb_ports = 16;
  std::size_t bypass_cache_entries = 32;
  std::uint32_t walker_threads = 64;
  PwcGeometry pwc{1024, 16};
  Cycle pwc_latency = 2;
  CacheGeometry l2_cache;
  DramGeometry dram;
  DramTiming dram_timing;
  DramQueueSizes dram_queues;
  PhysicalMemoryConfig memory;
};

enum class Design { Static, GpuMmu, MaskTlb, MaskCache, MaskDram, MaskFull, Ideal, PwcBaseline };

const char* design_name(Design d);
std::optional<Design> parse_design(const std::string& name);
const std::vector<Design>& all_designs();

struct DesignFlags {
  bool shared_l2_tlb = true;
  bool page_walk_cache = false;
  bool tlb_tokens = false;
  bool bypass_cache = false;
  bool cache_bypass = false;
  SchedulerKind dram_scheduler = SchedulerKind::FrFcfs;
  bool ideal = false;
  bool static_partition = false;
};

DesignFlags design_flags(Design d);

struct MaskParams {
  Cycle epoch_length = 100000;
  TokenParams tokens;
  std::uint32_t thres_max = 500;
  Cycle silver_idle_window = 1000;
  std::uint64_t bypass_min_samples = 32;
};

struct SimConfig {
  HardwareConfig hw;
  DesignFlags design;
  MaskParams mask;
  std::uint64_t seed = 1;
  // Hard stop for the measurement window; 0 = none.
  Cycle max_cycles = 0;
  Cycle sample_interval = 10000;
  bool record_events = false;
  // Run check_invariants() every this many cycles; 0 = never.
  Cycle check_invariants_every = 0;
};

struct AppSetup {
  const AppTrace* trace = nullptr;
  std::vector<CoreId> cores;
};

// Contiguous core ranges: app i gets `counts[i]` cores after app i-1's.
std::vector<AppSetup> contiguous_partition(const std::vector<const AppTrace*>& traces,
                                           const std::vector<std::uint32_t>& counts,
                                           std::uint32_t total_cores);

struct Histogram {
  std::vector<std::uint64_t> buckets;

  explicit Histogram(std::size_t n = 0) : buckets(n, 0) {}
  void add(std::uint64_t v) {
    if (buckets.empty()) return;
    ++buckets[std::min<std::uint64_t>(v, buckets.size() - 1)];
  }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto b : buckets) n += b;
    return n;
  }
  bool operator==(const Histogram&) const = default;
};

struct AppStats {
  std::string name;
  std::uint32_t cores = 0;
  std::uint32_t warps = 0;
  std::uint64_t retired = 0;  // memory records + delay cycles, measurement window
  std::uint64_t passes = 0;
  std::uint64_t l1_probes = 0;
  std::uint64_t l1_hits = 0;
  std::uint64_t l2_probes = 0;
  std::uint64_t l2_hits = 0;
  std::uint64_t l2_bypass_hits = 0;
  std::uint64_t walks = 0;
  std::uint64_t token_count = 0;
  std::uint64_t max_warps_stalled = 0;
  std::uint64_t max_concurrent_walks = 0;
  double ipc = 0.0;
  bool operator==(const AppStats&) const = default;
};

struct RunStats {
  Cycle cycles = 0;  // measurement window length
  Cycle drain_cycles = 0;
  bool truncated = false;
  std::uint64_t epochs = 0;
  std::vector<AppStats> apps;

  std::uint64_t issued_records = 0;
  std::uint64_t core_stall_cycles = 0;
  std::uint64_t walks_started = 0;
  std::uint64_t walks_completed = 0;
  std::uint64_t walk_memory_requests = 0;
  std::uint64_t pwc_hits = 0;
  std::uint64_t pwc_misses = 0;
  std::uint64_t max_concurrent_walks = 0;
  std::uint64_t fills_main = 0;
  std::uint64_t fills_bypass = 0;
  std::uint64_t fills_dropped = 0;
  std::uint64_t l2_tlb_port_stall_cycles = 0;
  // Shared-TLB misses that joined a walk already in flight.
  std::uint64_t l2_mshr_merges = 0;

  // Sampled every sample_interval cycles over live shared-TLB misses.
  std::uint64_t samples = 0;
  std::uint64_t sampled_misses = 0;
  std::uint64_t sampled_stalled_warps = 0;
  Histogram stalled_warps_per_miss{65};
  Histogram concurrent_walks{129};

  CacheStats cache;
  DramStats dram;
  DramAudit audit;
  std::uint64_t requests_live_at_end = 0;
  std::uint64_t mshrs_live_at_end = 0;
  bool operator==(const RunStats&) const = default;
};

enum class WarpStatus : std::uint8_t { Ready, StalledTranslation, StalledData, Finished };

class Simulator {
 public:
  Simulator(const SimConfig& cfg, std::vector<AppSetup> apps);
  ~Simulator();

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  // Runs the measurement window and the drain that follows it.
  RunStats run();
  // Advances one cycle (skipping idle stretches). False once drained.
  bool step();
  Cycle now() const { return now_; }
  bool measuring() const { return measuring_; }

  // Throws std::logic_error describing the first violated invariant.
  void check_invariants() const;

  const EventLog& events() const { return log_; }
  RunStats stats() const;

  std::size_t warp_count() const { return warps_.size(); }
  WarpStatus warp_status(WarpId w) const;
  std::size_t l1_stalled_warps() const;
  const SharedTlb& shared_tlb() const;
  const PageWalker& walker() const;
  const L2Cache& l2_cache() const;
  const DramController& dram() const;
  const TokenController& tokens() const;
  const std::vector<PageTable>& page_tables() const { return tables_; }

 private:
  enum class Ev : std::uint8_t {
    Wake,
    L2TlbArrive,
    L2TlbProbe,
    L1Fill,
    WalkBegin,
    DataStart,
    LevelDone,
    CacheAccess,
    DramSubmit,
    DramDone,
    ReqDone,
  };

  struct Event {
    Cycle t;
    std::uint64_t seq;
    Ev type;
    std::uint32_t a;
    std::uint64_t b;
    std::uint64_t c;
    bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };

  struct Warp {
    std::uint32_t app = 0;
    std::uint32_t local = 0;
    CoreId core = 0;
    int slot = -1;
    std::uint32_t cursor = 0;
    WarpStatus status = WarpStatus::Ready;
    const TraceRecord* stream = nullptr;
    std::uint32_t length = 0;
    std::uint64_t pending_va = 0;
    bool pending_write = false;
  };

  struct Core {
    std::uint32_t app = 0;
    bool used = false;
    Asid asid;
    std::vector<WarpId> slots;  // kNoWarp when empty
    std::uint64_t ready = 0;
    int last = -1;
    std::deque<WarpId> waiting;
    std::uint32_t unfinished = 0;
    std::unique_ptr<L1Tlb> l1;
  };

  struct App {
    Asid asid;
    std::vector<CoreId> cores;
    std::vector<WarpId> warps;
    std::vector<std::vector<TraceRecord>> streams;
    std::uint32_t unfinished = 0;
    AppStats stats;
    MaxWarpsCounter wrp_stalled;
  };

  enum class ReqKind : std::uint8_t { Data, Walk };

  struct Req {
    ReqKind kind = ReqKind::Data;
    std::uint8_t depth = 0;
    bool write = false;
    bool fill = false;
    bool live = false;
    std::uint32_t app = 0;
    std::uint32_t owner = 0;  // warp (data) or walker slot (walk)
    std::uint64_t paddr = 0;
    int level = 0;
    Pfn table = 0;
    unsigned index = 0;
  };

  static constexpr WarpId kNoWarp = 0xFFFFFFFFu;

  void schedule(Cycle t, Ev type, std::uint32_t a, std::uint64_t b = 0, std::uint64_t c = 0);
  void dispatch(const Event& e);
  void epoch_boundary();
  void sample();
  void issue_cores();
  void issue(Core& core, WarpId w);
  void seat_app(std::uint32_t app);
  void make_ready(WarpId w);
  void finish_warp(WarpId w);
  void end_measurement();
  void retire(WarpId w, std::uint64_t weight);

  void l2_arrive(CoreId core, Vpn vpn);
  void l2_probe(CoreId core, Vpn vpn);
  void l2_miss(CoreId core, Vpn vpn);
  void l1_fill(CoreId core, Vpn vpn, Pfn pfn);
  void begin_data(WarpId w, Pfn pfn);
  void begin_walk(std::uint32_t app, Vpn vpn);
  void issue_level(const LevelRequest& lr, std::uint32_t app);
  void level_done(std::uint32_t slot, std::uint32_t app);
  void walk_done(const WalkDone& done, std::uint32_t slot);
  void cache_access(std::uint32_t req);
  void req_done(std::uint32_t req);

  std::uint32_t alloc_req();
  void free_req(std::uint32_t id);

  SimConfig cfg_;
  std::vector<PageTable> tables_;
  std::vector<App> apps_;
  std::vector<Core> cores_;
  std::vector<Warp> warps_;
  std::unique_ptr<SharedTlb> shared_;
  std::unique_ptr<PageWalker> walker_;
  std::unique_ptr<PageWalkCache> pwc_;
  std::unique_ptr<L2Cache> cache_;
  std::unique_ptr<DramController> dram_;
  std::unique_ptr<TokenController> tokens_;
  std::vector<Cycle> port_free_;
  std::vector<Req> reqs_;
  std::vector<std::uint32_t> free_reqs_;
  std::size_t live_reqs_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::uint64_t seq_ = 0;
  std::uint64_t dram_uid_ = 0;
  std::vector<DramIssue> issued_;
  EventLog log_;

  std::vector<std::uint64_t> app_max_concurrent_;
  std::vector<std::uint64_t> app_max_stalled_;
  Cycle now_ = 0;
  Cycle measure_end_ = 0;
  bool measuring_ = true;
  bool finished_ = false;
  std::uint64_t epoch_index_ = 0;
  RunStats stats_;
};

// One co-run of the given applications on a contiguous core split.
RunStats run_pair(const SimConfig& cfg, const std::vector<const AppTrace*>& traces,
                  const std::vector<std::uint32_t>& cores_per_app);

struct SweepPoint {
  std::vector<std::uint32_t> cores;
  double weighted_speedup = 0.0;
  RunStats shared;
  std::vector<double> ipc_alone;
};

struct PartitionSweep {
  std::vector<SweepPoint> points;  // every candidate, in split order
  std::size_t best = 0;
};

// Evaluates every contiguous split of the cores between two applications.
// `alone` gives the configuration used for solo runs. The best split maximises
// weighted speedup; ties go to the more balanced split.
// Index of the best point: highest weighted speedup, then smallest core
// imbalance, then first in order.
std::size_t best_split(const std::vector<SweepPoint>& points);

PartitionSweep partition_sweep(const SimConfig& cfg, const SimConfig& alone,
                               const AppTrace& a, const AppTrace& b);

}  // namespace gmmu
