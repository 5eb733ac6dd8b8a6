/* Copyright 2026 The gcomp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
// Counter-based random numbers. A draw is a pure function of
// (seed, worker, iteration, coordinate), so encoders need no mutable RNG state
// and can run concurrently.

#ifndef GCOMP_RNG_HPP_
#define GCOMP_RNG_HPP_

#include <cstdint>
#include <limits>

namespace gcomp {

// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

// Combines words into a single 64-bit key. Order matters.
constexpr std::uint64_t hash_combine(std::uint64_t key, std::uint64_t word) {
  return mix64(key ^ mix64(word + kGoldenGamma));
}

// Top 53 bits of x mapped to [0, 1).
constexpr double to_unit_double(std::uint64_t x) {
  return static_cast<double>(static_cast<std::int64_t>(x >> 11)) * 0x1.0p-53;
}

// One independent stream of uniforms, indexed by coordinate.
class CounterStream {
 public:
  constexpr CounterStream() = default;
  constexpr explicit CounterStream(std::uint64_t key) : key_(key) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ + (counter + 1) * kGoldenGamma);
  }
  constexpr double uniform(std::uint64_t counter) const {
    return to_unit_double(bits(counter));
  }
  constexpr std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_ = 0;
};

// Seeded source of per-(worker, iteration) quantization streams.
class QuantRng {
 public:
  constexpr QuantRng() = default;
  constexpr explicit QuantRng(std::uint64_t seed) : seed_(seed) {}

  constexpr CounterStream stream(std::uint64_t worker, std::uint64_t iteration) const {
    return CounterStream(
        hash_combine(hash_combine(hash_combine(0x51a7e5eedULL, seed_), worker),
                     iteration));
  }
  constexpr std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_ = 0;
};

// Small sequential generator built on the same mixer; satisfies
// UniformRandomBitGenerator so it can feed <random> distributions.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  constexpr explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  // Unbiased integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t state_;
};

}  // namespace gcomp

#endif  // GCOMP_RNG_HPP_
