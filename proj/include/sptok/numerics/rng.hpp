#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "sptok/numerics/tensor.hpp"

namespace sptok {

using Rng = std::mt19937_64;

// Derives an independent stream from a base seed and a label, so that
// adding a consumer never shifts another consumer's draws.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  std::uint64_t h = 1469598103934665603ull ^ (base * 0x9E3779B97F4A7C15ull);
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  // splitmix64 finalizer
  h += 0x9E3779B97F4A7C15ull;
  h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ull;
  h = (h ^ (h >> 27)) * 0x94D049BB133111EBull;
  return h ^ (h >> 31);
}

template <typename T>
void fill_normal(BasicTensor<T>& t, Rng& rng, double stddev, double mean = 0.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

}  // namespace sptok
