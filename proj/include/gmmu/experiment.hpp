#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gmmu/config.hpp"
#include "gmmu/engine.hpp"

namespace gmmu {

struct DesignResult {
  Design design = Design::GpuMmu;
  std::vector<std::string> apps;
  std::vector<std::uint32_t> cores;
  std::vector<double> ipc_shared;
  std::vector<double> ipc_alone;
  double weighted_speedup = 0.0;
  double unfairness = 0.0;
  RunStats shared;
};

struct ExperimentResult {
  std::string workload;
  std::vector<DesignResult> designs;
};

// Loads or generates every trace once, measures IPC_alone for each application
// on its own core count, then co-runs each listed design.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
std::vector<AppTrace> load_apps(const ExperimentConfig& cfg);

const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string csv_row(const std::string& workload, const DesignResult& r);
void write_csv(std::ostream& os, const ExperimentResult& r);

// Six significant digits, "C" locale regardless of the process locale.
std::string format_number(double v);

// JSON report: headline metrics, histograms and a "debug" block of raw
// counters the CSV rates are computed from.
std::string report_json(const ExperimentResult& r);

// Sorted paths matching a shell glob. Throws ConfigError when nothing matches.
std::vector<std::string> expand_glob(const std::string& pattern);

struct SweepFailure {
  std::string config;
  std::string error;
};

struct SweepResult {
  std::vector<std::string> rows;  // CSV lines without the header, sorted by (workload, design)
  std::vector<SweepFailure> failures;
};

SweepResult sweep(const std::vector<std::string>& configs, unsigned parallel);
void write_sweep_csv(std::ostream& os, const SweepResult& r);

}  // namespace gmmu
