#pragma once

#include <cmath>
#include <cstdint>

namespace vssd {

/// Simulated time in integer picoseconds. All configured latencies
/// (59.975 us and friends) are exactly representable; no floating-point
/// time anywhere in the datapath.
using SimTime = std::uint64_t;

inline constexpr SimTime kPicosecond = 1;
inline constexpr SimTime kNanosecond = 1000;
inline constexpr SimTime kMicrosecond = 1000 * kNanosecond;
inline constexpr SimTime kMillisecond = 1000 * kMicrosecond;
inline constexpr SimTime kSecond = 1000 * kMillisecond;

/// Clock guard: a run must never reach 2^63 ps (~106 days of simulated time).
inline constexpr SimTime kMaxSimTime = SimTime{1} << 63;

inline SimTime from_us(double us) {
  return static_cast<SimTime>(std::llround(us * static_cast<double>(kMicrosecond)));
}

inline SimTime from_ns(double ns) {
  return static_cast<SimTime>(std::llround(ns * static_cast<double>(kNanosecond)));
}

inline double to_us(SimTime t) {
  return static_cast<double>(t) / static_cast<double>(kMicrosecond);
}

/// Picoseconds per clock cycle at `mhz`, rounded to the nearest integer.
inline SimTime cycle_ps(std::uint32_t mhz) {
  return static_cast<SimTime>(std::llround(1e6 / static_cast<double>(mhz)));
}

}  // namespace vssd
