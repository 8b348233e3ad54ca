#pragma once

#include <cstdint>
#include <span>

namespace gmmu {

// sum_i shared_i / alone_i. Throws DivisionDomain when any alone IPC is 0 or
// the spans differ in length.
double weighted_speedup(std::span<const double> ipc_shared, std::span<const double> ipc_alone);

// Maximum slowdown, max_i alone_i / shared_i. Throws
// DivisionDomain when any shared IPC is 0.
double unfairness(std::span<const double> ipc_shared, std::span<const double> ipc_alone);

// num / den, or 0 when nothing was counted.
inline double rate(std::uint64_t num, std::uint64_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace gmmu
