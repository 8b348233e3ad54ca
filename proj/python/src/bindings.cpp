#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "gmmu/config.hpp"
#include "gmmu/errors.hpp"
#include "gmmu/experiment.hpp"
#include "gmmu/metrics.hpp"
#include "gmmu/workload.hpp"

namespace py = pybind11;
using namespace gmmu;

namespace {

ExperimentConfig config_from_text(const std::string& text) {
  std::istringstream in(text);
  return parse_experiment(ConfigFile::parse(in, "<string>"));
}

py::dict run_config(const ExperimentConfig& cfg) {
  ExperimentResult r;
  {
    py::gil_scoped_release release;
    r = run_experiment(cfg);
  }
  std::ostringstream csv;
  write_csv(csv, r);
  py::dict out;
  out["csv"] = csv.str();
  out["report"] = report_json(r);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "GPU memory-hierarchy simulator core";

  py::register_exception<Error>(m, "SimError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivisionDomain>(m, "DivisionDomain", PyExc_ZeroDivisionError);

  m.def("designs", [] {
    std::vector<std::string> names;
    for (Design d : all_designs()) names.emplace_back(design_name(d));
    return names;
  });

  m.def("weighted_speedup",
        [](const std::vector<double>& shared, const std::vector<double>& alone) {
          return weighted_speedup(shared, alone);
        },
        py::arg("ipc_shared"), py::arg("ipc_alone"));
  m.def("unfairness",
        [](const std::vector<double>& shared, const std::vector<double>& alone) {
          return unfairness(shared, alone);
        },
        py::arg("ipc_shared"), py::arg("ipc_alone"));

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("name", &SyntheticSpec::name)
      .def_readwrite("warps", &SyntheticSpec::warps)
      .def_readwrite("working_set_pages", &SyntheticSpec::working_set_pages)
      .def_readwrite("locality", &SyntheticSpec::locality)
      .def_readwrite("sharing", &SyntheticSpec::sharing)
      .def_readwrite("delay_per_mem", &SyntheticSpec::delay_per_mem)
      .def_readwrite("stream_length", &SyntheticSpec::stream_length)
      .def_readwrite("hot_pages", &SyntheticSpec::hot_pages)
      .def_readwrite("accesses_per_page", &SyntheticSpec::accesses_per_page)
      .def_readwrite("write_fraction", &SyntheticSpec::write_fraction)
      .def_readwrite("base_vpn", &SyntheticSpec::base_vpn)
      .def_readwrite("seed", &SyntheticSpec::seed);

  py::class_<AppTrace>(m, "Trace")
      .def_readonly("name", &AppTrace::name)
      .def_readonly("warps", &AppTrace::warps)
      .def_readonly("pages", &AppTrace::pages)
      .def_property_readonly("records", [](const AppTrace& t) { return t.records.size(); })
      .def("__eq__", [](const AppTrace& a, const AppTrace& b) { return a == b; });

  m.def("generate", &generate, py::arg("spec"));
  m.def("write_trace", &write_trace_file, py::arg("path"), py::arg("trace"));
  m.def("load_trace", &load_trace, py::arg("path"));
  m.def("trace_bytes", [](const AppTrace& t) {
    std::ostringstream os(std::ios::binary);
    write_trace(os, t);
    return py::bytes(os.str());
  });

  m.def("run_file", [](const std::string& path) { return run_config(load_experiment(path)); },
        py::arg("path"), "Run an experiment config file; returns {'csv': str, 'report': json str}.");
  m.def("run_text",
        [](const std::string& text) { return run_config(config_from_text(text)); },
        py::arg("text"), "Run an experiment given as config text.");
  m.def("validate_file", [](const std::string& path) { load_experiment(path); }, py::arg("path"));
  m.def("csv_columns", &csv_columns);
}
