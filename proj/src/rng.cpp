#include "veriseal/rng.hpp"

#include <cmath>
#include <numbers>

namespace veriseal {

std::uint64_t Rng::next_u64() {
  if (system_) {
    return (static_cast<std::uint64_t>(device_()) << 32) ^
           static_cast<std::uint64_t>(device_());
  }
  return engine_();
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  // Reject the tail of the 64-bit range that would bias small residues.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace veriseal
