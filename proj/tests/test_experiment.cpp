#include <clocale>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "gmmu/errors.hpp"
#include "gmmu/experiment.hpp"
#include "gmmu/metrics.hpp"
#include "json.hpp"

using namespace gmmu;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
[design]
designs = gpu-mmu, mask-tlb, mask-cache, mask-dram, mask, ideal, static, pwc
epoch = 3000
[experiment]
cores = 18, 12
[workload]
name = small
apps = a, b
[app.a]
warps = 60
working_set_pages = 900
locality = 0.2
stream_length = 96
[app.b]
warps = 40
working_set_pages = 120
locality = 0.7
write_fraction = 0.1
stream_length = 96
)";

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_experiment(ConfigFile::parse(in, "test"));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::vector<std::map<std::string, std::string>> rows_of(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  const auto header = split(line, ',');
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    REQUIRE(f.size() == header.size());
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < f.size(); ++i) row[header[i]] = f[i];
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> numbers(const std::string& joined) {
  std::vector<double> out;
  for (const auto& x : split(joined, ';')) out.push_back(std::stod(x));
  return out;
}

std::string csv_of(const ExperimentResult& r) {
  std::ostringstream os;
  write_csv(os, r);
  return os.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const ExperimentResult& small_result() {
  static const ExperimentResult r = run_experiment(parse(kSmall));
  return r;
}

}  // namespace

TEST_CASE("numbers print with six significant digits") {
  CHECK(format_number(1.0 / 3.0) == "0.333333");
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(1234567.0) == "1.23457e+06");
  CHECK(format_number(101.25) == "101.25");
  const char* old = std::setlocale(LC_NUMERIC, nullptr);
  const std::string saved = old ? old : "C";
  if (std::setlocale(LC_NUMERIC, "de_DE.UTF-8") || std::setlocale(LC_NUMERIC, "fr_FR.UTF-8")) {
    CHECK(format_number(0.5) == "0.5");
  } else {
    MESSAGE("no comma-decimal locale installed; checked under C only");
  }
  std::setlocale(LC_NUMERIC, saved.c_str());
}

TEST_CASE("one row per design under one stable header") {
  const std::string csv = csv_of(small_result());
  const auto rows = rows_of(csv);
  REQUIRE(rows.size() == 8);
  CHECK(csv.substr(0, csv.find('\n')) == csv_header());
  const char* order[] = {"gpu-mmu", "mask-tlb", "mask-cache", "mask-dram", "mask", "ideal", "static", "pwc"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].at("design") == order[i]);
    CHECK(rows[i].at("workload") == "small");
    CHECK(rows[i].at("apps") == "a;b");
    CHECK(rows[i].at("cores") == "18;12");
  }
}

TEST_CASE("Ideal reports a translation hit rate of exactly 1") {
  for (const auto& row : rows_of(csv_of(small_result()))) {
    if (row.at("design") != "ideal") continue;
    CHECK(row.at("tlb_hit_rate") == "1");
    CHECK(row.at("l1_tlb_hit_rate") == "1");
    CHECK(row.at("walks") == "0");
  }
}

TEST_CASE("speedup and slowdown agree with the CSV's own IPC columns") {
  for (const auto& row : rows_of(csv_of(small_result()))) {
    const auto shared = numbers(row.at("ipc_shared"));
    const auto alone = numbers(row.at("ipc_alone"));
    REQUIRE(shared.size() == 2);
    double ws = 0.0, slow = 0.0;
    for (std::size_t i = 0; i < shared.size(); ++i) {
      ws += shared[i] / alone[i];
      slow = std::max(slow, alone[i] / shared[i]);
    }
    CAPTURE(row.at("design"));
    CHECK(std::stod(row.at("weighted_speedup")) == doctest::Approx(ws).epsilon(2e-5));
    CHECK(std::stod(row.at("unfairness")) == doctest::Approx(slow).epsilon(2e-5));
  }
}

TEST_CASE("alone runs use the same core counts for every design") {
  const auto& r = small_result();
  for (const auto& d : r.designs) CHECK(d.ipc_alone == r.designs[0].ipc_alone);
}

TEST_CASE("printed rates recompute from the raw counters digit for digit") {
  const auto& r = small_result();
  const auto rows = rows_of(csv_of(r));
  const auto doc = nlohmann::json::parse(report_json(r));
  REQUIRE(doc.at("rows").size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const auto& j = doc["rows"][i];
    const auto& dbg = j["debug"];
    CAPTURE(row.at("design"));
    std::uint64_t l1p = 0, l1h = 0, l2p = 0, l2h = 0, byh = 0;
    std::string app_l2;
    for (const auto& a : j["apps"]) {
      l1p += a["l1_probes"].get<std::uint64_t>();
      l1h += a["l1_hits"].get<std::uint64_t>();
      l2p += a["l2_probes"].get<std::uint64_t>();
      l2h += a["l2_hits"].get<std::uint64_t>();
      byh += a["l2_bypass_hits"].get<std::uint64_t>();
      if (!app_l2.empty()) app_l2 += ';';
      app_l2 += format_number(rate(a["l2_hits"], a["l2_probes"]));
    }
    CHECK(row.at("l1_tlb_hit_rate") == format_number(rate(l1h, l1p)));
    CHECK(row.at("l2_tlb_hit_rate") == format_number(rate(l2h, l2p)));
    CHECK(row.at("tlb_hit_rate") == format_number(rate(l1h + l2h, l1p)));
    CHECK(row.at("bypass_hit_rate") == format_number(rate(byh, l2p)));
    CHECK(row.at("app_l2_tlb_hit_rate") == app_l2);

    std::uint64_t wh = 0, wa = 0;
    for (const auto& c : dbg["cache_classes"]) {
      if (c["walk_depth"].get<int>() == 0) {
        CHECK(row.at("data_cache_hit_rate") == format_number(rate(c["hits"], c["accesses"])));
      } else {
        wh += c["hits"].get<std::uint64_t>();
        wa += c["accesses"].get<std::uint64_t>();
      }
    }
    CHECK(row.at("walk_cache_hit_rate") == format_number(rate(wh, wa)));

    const std::uint64_t cycles = dbg["cycles"].get<std::uint64_t>() + dbg["drain_cycles"].get<std::uint64_t>();
    const auto& dd = dbg["dram_data"];
    const auto& dt = dbg["dram_translation"];
    CHECK(row.at("dram_data_latency") == format_number(rate(dd["latency_sum"], dd["serviced"])));
    CHECK(row.at("dram_walk_latency") == format_number(rate(dt["latency_sum"], dt["serviced"])));
    CHECK(row.at("dram_data_bandwidth") == format_number(rate(dd["bytes"], cycles)));
    CHECK(row.at("dram_walk_bandwidth") == format_number(rate(dt["bytes"], cycles)));
    CHECK(row.at("dram_bandwidth") ==
          format_number(rate(dd["bytes"].get<std::uint64_t>() + dt["bytes"].get<std::uint64_t>(), cycles)));
    CHECK(row.at("stalled_warps_per_miss") ==
          format_number(rate(dbg["sampled_stalled_warps"], dbg["sampled_misses"])));
    CHECK(row.at("walks") == std::to_string(dbg["walks_completed"].get<std::uint64_t>()));
    CHECK(dbg["audit"]["ok"].get<bool>());

    // Bandwidth split adds up to the total.
    const double parts = std::stod(row.at("dram_data_bandwidth")) + std::stod(row.at("dram_walk_bandwidth"));
    CHECK(parts == doctest::Approx(std::stod(row.at("dram_bandwidth"))).epsilon(1e-5));
    for (const char* col : {"l1_tlb_hit_rate", "l2_tlb_hit_rate", "tlb_hit_rate", "bypass_hit_rate",
                            "walk_cache_hit_rate", "data_cache_hit_rate"}) {
      const double v = std::stod(row.at(col));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("rerunning a config yields identical CSV bytes and report") {
  const auto again = run_experiment(parse(kSmall));
  CHECK(csv_of(again) == csv_of(small_result()));
  CHECK(report_json(again) == report_json(small_result()));
}

TEST_CASE("partition sweep mode reports the best split") {
  auto cfg = parse(kSmall);
  cfg.partition = PartitionMode::Sweep;
  cfg.cores.clear();
  cfg.sim.hw.cores = 4;
  cfg.designs = {Design::GpuMmu};
  const auto r = run_experiment(cfg);
  REQUIRE(r.designs.size() == 1);
  const auto& d = r.designs[0];
  CHECK(d.cores.size() == 2);
  CHECK(d.cores[0] + d.cores[1] == 4);
  const auto ps = partition_sweep(cfg.sim_for(Design::GpuMmu), cfg.sim_for(Design::GpuMmu),
                                  load_apps(cfg)[0], load_apps(cfg)[1]);
  CHECK(d.weighted_speedup == ps.points[ps.best].weighted_speedup);
}

TEST_CASE("sweep merges deterministically regardless of parallelism") {
  TempDir dir("gmmu_sweep_test");
  const std::string base = R"(
[design]
designs = gpu-mmu, mask-tlb, mask-cache, mask-dram, mask
epoch = 2000
[workload]
apps = a, b
[app.a]
warps = 30
stream_length = 64
[app.b]
warps = 30
working_set_pages = 600
stream_length = 64
)";
  // Written in an order that differs from the merged (workload, design) order.
  std::string cfg_z = std::string(base);
  cfg_z.replace(cfg_z.find("apps = a, b"), 11, "name = zeta\napps = a, b");
  std::string cfg_a = std::string(base);
  cfg_a.replace(cfg_a.find("apps = a, b"), 11, "name = alpha\napps = a, b");
  std::string cfg_m = std::string(base);
  cfg_m.replace(cfg_m.find("apps = a, b"), 11, "name = mid\napps = a, b");
  const std::vector<std::string> files{dir.write("a.ini", cfg_z), dir.write("b.ini", cfg_a),
                                       dir.write("c.ini", cfg_m)};

  const auto serial = sweep(files, 1);
  const auto parallel = sweep(files, 3);
  CHECK(serial.failures.empty());
  CHECK(serial.rows == parallel.rows);
  REQUIRE(serial.rows.size() == 15);

  std::ostringstream os;
  write_sweep_csv(os, serial);
  const auto rows = rows_of(os.str());
  std::map<std::string, int> per_workload;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ++per_workload[rows[i].at("workload")];
    if (i) {
      const auto prev = std::make_pair(rows[i - 1].at("workload"), rows[i - 1].at("design"));
      const auto cur = std::make_pair(rows[i].at("workload"), rows[i].at("design"));
      CHECK(prev < cur);
    }
  }
  CHECK(per_workload == std::map<std::string, int>{{"alpha", 5}, {"mid", 5}, {"zeta", 5}});
  CHECK(expand_glob((dir.path / "*.ini").string()) == files);
}

TEST_CASE("sweep keeps partial results and reports failures") {
  TempDir dir("gmmu_sweep_fail");
  const auto good = dir.write("good.ini", "[workload]\napps = a\n[app.a]\nwarps = 8\nstream_length = 16\n");
  const auto bad = dir.write("bad.ini", "[workload]\napps = a\n[app.a]\nwarps = x\n");
  const auto r = sweep({bad, good}, 2);
  CHECK(r.rows.size() == 1);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].config == bad);
  CHECK(r.failures[0].error.find("app.a.warps") != std::string::npos);
}

TEST_CASE("empty glob is an error") {
  CHECK_THROWS_AS(expand_glob("/nonexistent-dir-gmmu/*.ini"), ConfigError);
  CHECK_THROWS_AS(sweep({}, 2), ConfigError);
}

#ifdef GMMUSIM_BIN
namespace {

int run_cli(const std::string& args, const std::string& log = "/dev/null", const std::string& env = "") {
  const std::string cmd = env + " " + std::string(GMMUSIM_BIN) + " " + args + " >" + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("command line: run, validate, gen-trace, sweep") {
  TempDir dir("gmmu_cli_test");
  const auto p = dir.path.string();
  dir.write("s.spec", "[spec]\nname = tiny\nwarps = 6\nstream_length = 20\nseed = 3\n");
  REQUIRE(run_cli("gen-trace " + p + "/s.spec --out " + p + "/tiny.trace") == 0);
  SyntheticSpec spec;
  spec.name = "tiny";
  spec.warps = 6;
  spec.stream_length = 20;
  spec.seed = 3;
  std::ostringstream want(std::ios::binary);
  write_trace(want, generate(spec));
  CHECK(slurp(p + "/tiny.trace") == want.str());

  const auto cfg = dir.write("run.ini",
                             "[design]\ndesigns = gpu-mmu, ideal\n[workload]\nname = cli\napps = t, u\n"
                             "[app.t]\ntrace = tiny.trace\n[app.u]\nwarps = 10\nstream_length = 30\n");
  CHECK(run_cli("validate " + cfg) == 0);
  REQUIRE(run_cli("run " + cfg + " --out " + p + "/o1.csv --report " + p + "/o1.json") == 0);
  REQUIRE(run_cli("run " + cfg, p + "/o2.csv") == 0);
  CHECK(slurp(p + "/o1.csv") == slurp(p + "/o2.csv"));
  CHECK(rows_of(slurp(p + "/o1.csv")).size() == 2);
  CHECK(nlohmann::json::parse(slurp(p + "/o1.json"))["workload"] == "cli");

  // Env override reaches the run; a bad value exits nonzero naming the key.
  REQUIRE(run_cli("run " + cfg, p + "/o3.csv", "GMMU_APP_U_WARPS=12") == 0);
  CHECK(slurp(p + "/o3.csv") != slurp(p + "/o1.csv"));
  CHECK(run_cli("run " + cfg, p + "/err.txt", "GMMU_APP_U_WARPS=zero") == 2);
  CHECK(slurp(p + "/err.txt").find("app.u.warps") != std::string::npos);
  CHECK(run_cli("validate " + dir.write("bad.ini", "[hardware]\nbogus = 1\n[workload]\napps = a\n"),
                p + "/err.txt") == 2);
  CHECK(slurp(p + "/err.txt").find("hardware.bogus") != std::string::npos);

  CHECK(run_cli("sweep '" + p + "/nothing*.ini' --out " + p + "/none.csv") != 0);
  CHECK_FALSE(fs::exists(p + "/none.csv"));

  fs::remove(p + "/bad.ini");
  REQUIRE(run_cli("sweep '" + p + "/*.ini' --parallel 2 --out " + p + "/sw.csv") == 0);
  CHECK(slurp(p + "/sw.csv") == slurp(p + "/o1.csv"));
  CHECK_FALSE(fs::exists(p + "/sw.csv.failures"));
  dir.write("zbad.ini", "[workload]\napps = a\n[app.a]\nlocality = 3\n");
  CHECK(run_cli("sweep '" + p + "/*.ini' --parallel 2 --out " + p + "/sw.csv") == 1);
  CHECK(slurp(p + "/sw.csv") == slurp(p + "/o1.csv"));
  CHECK(slurp(p + "/sw.csv.failures").find("zbad.ini") != std::string::npos);
}
#endif
