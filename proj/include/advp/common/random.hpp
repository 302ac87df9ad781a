#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace advp {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; a bijection on 64-bit values.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  return hash_seed(hash_seed(a, b), c);
}

/// Maps 64 random bits to [0, 1) with 53-bit resolution.
constexpr double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform [0, 1) draw; one engine call per draw.
inline double uniform01(Rng& rng) { return unit_interval(rng()); }

/// Engine state as 32-bit words, suitable for exact storage in doubles.
std::vector<std::uint32_t> save_rng(const Rng& rng);
Rng load_rng(const std::vector<std::uint32_t>& words);

}  // namespace advp
