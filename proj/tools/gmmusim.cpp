// gmmusim: command-line front end for the memory-hierarchy simulator.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gmmu/config.hpp"
#include "gmmu/errors.hpp"
#include "gmmu/experiment.hpp"
#include "gmmu/workload.hpp"

namespace {

using namespace gmmu;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path, "cannot open output file");
  out << text;
  if (!out) throw ConfigError(path, "write failed");
}

int cmd_run(const std::string& config, std::string out, std::string report) {
  const ExperimentConfig cfg = load_experiment(config);
  const ExperimentResult r = run_experiment(cfg);
  if (out.empty()) out = cfg.csv_path;
  if (report.empty()) report = cfg.report_path;
  std::ostringstream csv;
  write_csv(csv, r);
  if (out.empty() || out == "-") {
    std::cout << csv.str();
  } else {
    write_file(out, csv.str());
  }
  if (!report.empty()) write_file(report, report_json(r));
  return 0;
}

int cmd_sweep(const std::string& pattern, unsigned parallel, const std::string& out) {
  const auto configs = expand_glob(pattern);
  const SweepResult r = sweep(configs, parallel);
  std::ostringstream csv;
  write_sweep_csv(csv, r);
  write_file(out, csv.str());
  const std::string manifest = out + ".failures";
  if (r.failures.empty()) {
    std::filesystem::remove(manifest);
    return 0;
  }
  std::ostringstream m;
  for (const auto& f : r.failures) {
    m << f.config << '\t' << f.error << '\n';
    std::cerr << "failed: " << f.config << ": " << f.error << '\n';
  }
  write_file(manifest, m.str());
  return 1;
}

int cmd_gen_trace(const std::string& spec_path, const std::string& out) {
  const SyntheticSpec spec = parse_spec(ConfigFile::load(spec_path));
  write_trace_file(out, generate(spec));
  return 0;
}

int cmd_validate(const std::string& config) {
  const ExperimentConfig cfg = load_experiment(config);
  // Traces are parsed too, so a bad trace file fails here rather than mid-sweep.
  const auto traces = load_apps(cfg);
  std::uint64_t records = 0;
  for (const auto& t : traces) records += t.records.size();
  std::cout << config << ": ok (" << cfg.apps.size() << " apps, " << cfg.designs.size()
            << " designs, " << records << " records)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPU memory-hierarchy simulator"};
  app.require_subcommand(1);

  std::string config, out, report, pattern, spec;
  unsigned parallel = 1;

  auto* run = app.add_subcommand("run", "Run one experiment config and emit CSV");
  run->add_option("config", config, "Experiment config file")->required();
  run->add_option("--out", out, "CSV output file (default: [output] csv, else stdout)");
  run->add_option("--report", report, "JSON report file");

  auto* sw = app.add_subcommand("sweep", "Run every config matching a glob and merge the CSV");
  sw->add_option("glob", pattern, "Config file glob, e.g. 'configs/*.ini'")->required();
  sw->add_option("--parallel,-j", parallel, "Concurrent experiments")->check(CLI::PositiveNumber);
  sw->add_option("--out", out, "Merged CSV output file")->required();

  auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic trace file");
  gen->add_option("spec", spec, "Trace spec file")->required();
  gen->add_option("--out", out, "Trace output file")->required();

  auto* val = app.add_subcommand("validate", "Check a config and its traces without running");
  val->add_option("config", config, "Experiment config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out, report);
    if (*sw) return cmd_sweep(pattern, parallel, out);
    if (*gen) return cmd_gen_trace(spec, out);
    if (*val) return cmd_validate(config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
