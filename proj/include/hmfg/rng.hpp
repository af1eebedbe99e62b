// Counter-based random streams. Every draw is a pure function of
// (seed, stream, counter), so particle loops produce identical numbers under
// any parallel schedule.
#pragma once

#include <cmath>
#include <cstdint>

namespace hmfg {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

struct CounterRng {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::uint64_t bits(std::uint64_t counter) const {
    std::uint64_t z = detail::mix64(seed ^ detail::mix64(stream));
    return detail::mix64(z ^ detail::mix64(counter ^ 0xd1b54a32d192ed03ULL));
  }

  // Uniform in (0,1); never returns 0 or 1 exactly.
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // Standard normal via Box-Muller; draw k uses uniforms (2k, 2k+1).
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

}  // namespace hmfg
