#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gmmu/config.hpp"
#include "gmmu/errors.hpp"

using namespace gmmu;

namespace {

const char* kMinimal = "[workload]\napps = a\n";

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_experiment(ConfigFile::parse(in, "test"));
}

std::string error_key(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

struct EnvVar {
  std::string name;
  EnvVar(const std::string& n, const std::string& v) : name(n) { ::setenv(n.c_str(), v.c_str(), 1); }
  ~EnvVar() { ::unsetenv(name.c_str()); }
};

}  // namespace

TEST_CASE("defaults reproduce the baseline hardware") {
  const auto cfg = parse(kMinimal);
  const auto& hw = cfg.sim.hw;
  CHECK(hw.cores == 30);
  CHECK(hw.max_warps_per_core == 64);
  CHECK(hw.l1_tlb.entries == 64);
  CHECK(hw.l1_tlb.ways == 64);
  CHECK(hw.l1_tlb_latency == 1);
  CHECK(hw.l2_tlb.entries == 512);
  CHECK(hw.l2_tlb.ways == 16);
  CHECK(hw.l2_tlb_latency == 10);
  CHECK(hw.l2_tlb_ports == 16);
  CHECK(hw.bypass_cache_entries == 32);
  CHECK(hw.walker_threads == 64);
  CHECK(hw.l2_cache.bytes == 2u << 20);
  CHECK(hw.l2_cache.ways == 16);
  CHECK(hw.l2_cache.line_bytes == 128);
  CHECK(hw.l2_cache.hit_latency == 10);
  CHECK(hw.dram.channels == 8);
  CHECK(hw.dram.banks == 8);
  CHECK(cfg.sim.mask.epoch_length == 100000);
  CHECK(cfg.sim.mask.tokens.initial_tokens == 0.8);
  CHECK(cfg.sim.mask.thres_max == 500);
  CHECK(cfg.designs == std::vector<Design>{Design::GpuMmu});
  CHECK(cfg.alone_design == Design::GpuMmu);
  CHECK(cfg.partition == PartitionMode::Explicit);
  REQUIRE(cfg.apps.size() == 1);
  CHECK(cfg.apps[0].spec.seed == 1);
  CHECK(cfg.core_split() == std::vector<std::uint32_t>{30});
}

TEST_CASE("every key maps onto its field") {
  const auto cfg = parse(R"(
[hardware]
cores = 8            # trailing comment
warps_per_core = 32
l2_tlb_entries = 256
l2_tlb_ways = 8
dram_row_policy = closed
l2_cache_bytes = 0x100000
[design]
designs = gpu-mmu, mask-tlb ,mask
epoch = 2000
initial_tokens = 0.5
token_step = 0.125
tlb_tokens = off
dram_scheduler = frfcfs
[experiment]
seed = 9
cores = 5, 3
alone_design = ideal
max_cycles = 1000
[workload]
name = w1
apps = p, q
[app.p]
warps = 12
locality = 0.25
[app.q]
working_set_pages = 77
seed = 100
[output]
csv = out.csv
)");
  CHECK(cfg.sim.hw.cores == 8);
  CHECK(cfg.sim.hw.max_warps_per_core == 32);
  CHECK(cfg.sim.hw.l2_tlb.sets() == 32);
  CHECK(cfg.sim.hw.dram_timing.policy == RowPolicy::Closed);
  CHECK(cfg.sim.hw.l2_cache.bytes == 0x100000);
  CHECK(cfg.designs == std::vector<Design>{Design::GpuMmu, Design::MaskTlb, Design::MaskFull});
  CHECK(cfg.sim.mask.epoch_length == 2000);
  CHECK(cfg.sim.mask.tokens.initial_tokens == 0.5);
  CHECK(cfg.sim.mask.tokens.step_fraction == 0.125);
  CHECK(cfg.sim.seed == 9);
  CHECK(cfg.sim.max_cycles == 1000);
  CHECK(cfg.cores == std::vector<std::uint32_t>{5, 3});
  CHECK(cfg.alone_design == Design::Ideal);
  CHECK(cfg.workload == "w1");
  CHECK(cfg.apps[0].spec.warps == 12);
  CHECK(cfg.apps[0].spec.locality == 0.25);
  CHECK(cfg.apps[0].spec.seed == 9);
  CHECK(cfg.apps[1].spec.seed == 100);
  CHECK(cfg.apps[1].spec.working_set_pages == 77);
  CHECK(cfg.apps[1].spec.name == "q");
  CHECK(cfg.csv_path == "out.csv");

  const SimConfig full = cfg.sim_for(Design::MaskFull);
  CHECK_FALSE(full.design.tlb_tokens);
  CHECK(full.design.bypass_cache);
  CHECK(full.design.cache_bypass);
  CHECK(full.design.dram_scheduler == SchedulerKind::FrFcfs);
}

TEST_CASE("design flags compose the MASK components independently") {
  const auto tlb = design_flags(Design::MaskTlb);
  const auto cache = design_flags(Design::MaskCache);
  const auto dram = design_flags(Design::MaskDram);
  const auto full = design_flags(Design::MaskFull);
  const auto base = design_flags(Design::GpuMmu);
  CHECK(full.tlb_tokens == (tlb.tlb_tokens || cache.tlb_tokens || dram.tlb_tokens));
  CHECK(full.bypass_cache == tlb.bypass_cache);
  CHECK(full.cache_bypass == cache.cache_bypass);
  CHECK(full.dram_scheduler == dram.dram_scheduler);
  CHECK_FALSE(tlb.cache_bypass);
  CHECK(tlb.dram_scheduler == base.dram_scheduler);
  CHECK_FALSE(cache.tlb_tokens);
  CHECK_FALSE(dram.tlb_tokens);
  CHECK_FALSE(dram.cache_bypass);
}

TEST_CASE("errors name the offending key") {
  CHECK(error_key("[hardware]\nbogus = 1\n[workload]\napps = a\n") == "hardware.bogus");
  CHECK(error_key("[hardware]\ncores = many\n[workload]\napps = a\n") == "hardware.cores");
  CHECK(error_key("[hardware]\ncores = -3\n[workload]\napps = a\n") == "hardware.cores");
  CHECK(error_key("[hardware]\nl2_tlb_entries = 500\n[workload]\napps = a\n") == "hardware.l2_tlb_entries");
  CHECK(error_key("[design]\ndesigns = gpu-mmu, turbo\n[workload]\napps = a\n") == "design.designs");
  CHECK(error_key("[design]\ninitial_tokens = 1.5\n[workload]\napps = a\n") == "design.initial_tokens");
  CHECK(error_key("[design]\ntlb_tokens = maybe\n[workload]\napps = a\n") == "design.tlb_tokens");
  CHECK(error_key("[workload]\nname = w\n") == "workload.apps");
  CHECK(error_key("[workload]\napps = a, a\n") == "workload.apps");
  CHECK(error_key("[experiment]\ncores = 10\n[workload]\napps = a, b\n") == "experiment.cores");
  CHECK(error_key("[experiment]\ncores = 20, 20\n[workload]\napps = a, b\n") == "experiment.cores");
  CHECK(error_key("[experiment]\npartition = chaos\n[workload]\napps = a\n") == "experiment.partition");
  CHECK(error_key("[experiment]\npartition = sweep\n[workload]\napps = a\n") == "experiment.partition");
  CHECK(error_key("[workload]\napps = a\n[app.a]\nlocality = 2\n") == "app.a");
  CHECK(error_key("[workload]\napps = a\n[app.a]\ntrace = x.trace\nwarps = 4\n") == "app.a.warps");
  CHECK(error_key("[workload]\napps = a\n[app.b]\nwarps = 4\n") == "app.b");
  CHECK(error_key("[workload]\napps = a\n[outputs]\ncsv = x\n") == "outputs");
  CHECK(error_key("[workload]\napps = a\napps = b\n") == "workload.apps");
  CHECK(error_key("cores = 3\n") == "cores");
  CHECK(error_key("[workload]\napps a\n") == "test:2");
  CHECK(error_key("[workload\napps = a\n") == "test:1");
}

TEST_CASE("environment overrides any key, present in the file or not") {
  CHECK(ConfigFile::env_name("hardware", "l2_tlb_ways") == "GMMU_HARDWARE_L2_TLB_WAYS");
  CHECK(ConfigFile::env_name("app.a-1", "warps") == "GMMU_APP_A_1_WARPS");
  {
    EnvVar v("GMMU_HARDWARE_CORES", "12");
    CHECK(parse(kMinimal).sim.hw.cores == 12);
    CHECK(parse("[hardware]\ncores = 4\n[workload]\napps = a\n").sim.hw.cores == 12);
  }
  {
    EnvVar v("GMMU_APP_A_WARPS", "7");
    CHECK(parse(kMinimal).apps[0].spec.warps == 7);
  }
  {
    EnvVar v("GMMU_WORKLOAD_APPS", "x, y, z");
    CHECK(parse(kMinimal).apps.size() == 3);
  }
  {
    EnvVar v("GMMU_DESIGN_EPOCH", "zero");
    CHECK(error_key(kMinimal) == "design.epoch");
  }
  CHECK(parse(kMinimal).sim.hw.cores == 30);
}

TEST_CASE("trace paths resolve against the config's directory") {
  const auto dir = std::filesystem::temp_directory_path() / "gmmu_cfg_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "c.ini";
  {
    std::ofstream out(path);
    out << "[workload]\napps = a, b\n[app.a]\ntrace = t/a.trace\n[app.b]\ntrace = /abs/b.trace\n";
  }
  const auto cfg = load_experiment(path.string());
  CHECK(cfg.apps[0].trace_path == (dir / "t/a.trace").string());
  CHECK(cfg.apps[1].trace_path == "/abs/b.trace");
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_experiment((dir / "missing.ini").string()), ConfigError);
}

TEST_CASE("equal split hands the remainder to the first applications") {
  auto cfg = parse("[hardware]\ncores = 8\n[workload]\napps = a, b, c\n");
  CHECK(cfg.core_split() == std::vector<std::uint32_t>{3, 3, 2});
}

TEST_CASE("trace spec files") {
  std::istringstream in("[spec]\nname = s1\nwarps = 3\nstream_length = 9\nseed = 4\n");
  const auto spec = parse_spec(ConfigFile::parse(in));
  CHECK(spec.name == "s1");
  CHECK(spec.warps == 3);
  CHECK(spec.stream_length == 9);
  CHECK(spec.seed == 4);
  std::istringstream bad("[spec]\nwarps = 0\n");
  CHECK_THROWS_AS(parse_spec(ConfigFile::parse(bad)), ConfigError);
  std::istringstream extra("[spec]\nwarps = 2\n[other]\n");
  CHECK_THROWS_AS(parse_spec(ConfigFile::parse(extra)), ConfigError);
}
