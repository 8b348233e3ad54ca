#pragma once

#include <algorithm>
#include <cstdint>

namespace gmmu {

// Hardware-width counter that pins at its maximum instead of wrapping.
template <unsigned Bits>
class SaturatingCounter {
  static_assert(Bits > 0 && Bits < 64);

 public:
  static constexpr std::uint64_t kMax = (1ULL << Bits) - 1;

  constexpr SaturatingCounter() = default;
  constexpr explicit SaturatingCounter(std::uint64_t v) : value_(std::min(v, kMax)) {}

  constexpr void increment() {
    if (value_ < kMax) ++value_;
  }
  // Keeps the larger of the current value and `v`, clamped.
  constexpr void observe_max(std::uint64_t v) { value_ = std::max(value_, std::min(v, kMax)); }
  constexpr void set(std::uint64_t v) { value_ = std::min(v, kMax); }
  constexpr void reset() { value_ = 0; }
  constexpr std::uint64_t value() const { return value_; }
  constexpr bool saturated() const { return value_ == kMax; }

 private:
  std::uint64_t value_ = 0;
};

}  // namespace gmmu
