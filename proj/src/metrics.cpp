#include "gmmu/metrics.hpp"

#include <algorithm>
#include <string>

#include "gmmu/errors.hpp"

namespace gmmu {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw DivisionDomain("shared and alone IPC lists must be non-empty and equal length");
  }
}

}  // namespace

double weighted_speedup(std::span<const double> ipc_shared, std::span<const double> ipc_alone) {
  check_lengths(ipc_shared, ipc_alone);
  double ws = 0.0;
  for (std::size_t i = 0; i < ipc_shared.size(); ++i) {
    if (!(ipc_alone[i] > 0.0)) {
      throw DivisionDomain("alone IPC of application " + std::to_string(i) + " is zero");
    }
    ws += ipc_shared[i] / ipc_alone[i];
  }
  return ws;
}

double unfairness(std::span<const double> ipc_shared, std::span<const double> ipc_alone) {
  check_lengths(ipc_shared, ipc_alone);
  double worst = 0.0;
  for (std::size_t i = 0; i < ipc_shared.size(); ++i) {
    if (!(ipc_shared[i] > 0.0)) {
      throw DivisionDomain("shared IPC of application " + std::to_string(i) + " is zero");
    }
    worst = std::max(worst, ipc_alone[i] / ipc_shared[i]);
  }
  return worst;
}

}  // namespace gmmu
