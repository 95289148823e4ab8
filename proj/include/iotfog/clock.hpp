#ifndef IOTFOG_CLOCK_HPP
#define IOTFOG_CLOCK_HPP

#include <cmath>
#include <cstdint>

namespace iotfog {

/// Simulated time in microseconds since the start of a simulation.
using SimTime = std::int64_t;

inline constexpr SimTime kMicrosPerMilli = 1000;
inline constexpr SimTime kMicrosPerSecond = 1000 * 1000;

inline SimTime from_millis(double ms) { return static_cast<SimTime>(std::llround(ms * kMicrosPerMilli)); }
inline double to_millis(SimTime t) { return static_cast<double>(t) / kMicrosPerMilli; }
inline double to_seconds(SimTime t) { return static_cast<double>(t) / kMicrosPerSecond; }
inline std::uint64_t whole_millis(SimTime t) { return static_cast<std::uint64_t>(t / kMicrosPerMilli); }

}  // namespace iotfog

#endif  // IOTFOG_CLOCK_HPP
