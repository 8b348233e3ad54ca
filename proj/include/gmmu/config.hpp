#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gmmu/engine.hpp"
#include "gmmu/workload.hpp"

namespace gmmu {

// "[section]" headers, "key = value" lines, '#' comments. Every lookup first
// consults the environment: GMMU_<SECTION>_<KEY>, upper-cased, with any
// character outside [A-Z0-9] turned into '_' (so app.a.warps is
// GMMU_APP_A_WARPS).
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& origin = "<config>");
  static ConfigFile load(const std::string& path);

  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const;
  std::vector<std::string> sections() const;
  // Keys written in the file (env-only keys are not listed).
  std::vector<std::string> keys(const std::string& section) const;

  const std::string& origin() const { return origin_; }
  // Directory relative trace paths are resolved against.
  const std::string& base_dir() const { return base_dir_; }

  static std::string env_name(const std::string& section, const std::string& key);

 private:
  std::string origin_;
  std::string base_dir_ = ".";
  std::map<std::string, std::map<std::string, std::string>> values_;
  std::vector<std::string> order_;
};

enum class PartitionMode { Explicit, Sweep };

struct AppSource {
  std::string name;
  std::string trace_path;  // empty: generate from `spec`
  SyntheticSpec spec;
};

struct ExperimentConfig {
  std::string workload = "workload";
  SimConfig sim;
  std::vector<Design> designs{Design::GpuMmu};
  Design alone_design = Design::GpuMmu;
  // Per-key design overrides on top of design_flags(); unset keeps the design's value.
  std::optional<bool> tlb_tokens, bypass_cache, cache_bypass, page_walk_cache;
  std::optional<SchedulerKind> dram_scheduler;
  PartitionMode partition = PartitionMode::Explicit;
  std::vector<std::uint32_t> cores;  // empty: equal split
  std::vector<AppSource> apps;
  std::string csv_path;
  std::string report_path;

  SimConfig sim_for(Design d) const;
  std::vector<std::uint32_t> core_split() const;
};

// Throws ConfigError naming "section.key" for unknown, missing or malformed keys.
ExperimentConfig parse_experiment(const ConfigFile& file);
ExperimentConfig load_experiment(const std::string& path);

// A trace-generation spec: the synthetic keys of an [app.*] section, written
// under [spec] (plus `name`).
SyntheticSpec parse_spec(const ConfigFile& file);

}  // namespace gmmu
