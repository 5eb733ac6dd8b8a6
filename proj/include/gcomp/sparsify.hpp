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
// Global random-K sparsification. All workers select the same K coordinates
// from a shared seed, so the selection costs no communication and the
// selected subvectors stay all-reduce compatible.
//
// No n/K rescaling and no residual accumulation: unselected coordinates get a
// zero update for the iteration, so the sparsified gradient is biased toward
// zero on them.

#ifndef GCOMP_SPARSIFY_HPP_
#define GCOMP_SPARSIFY_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gcomp/core.hpp"
#include "gcomp/rng.hpp"

namespace gcomp {

// Strictly increasing coordinate indices.
using IndexSet = std::vector<std::size_t>;

// K distinct coordinates of [0, n), uniform without replacement. A pure
// function of (shared_seed, iteration); never depends on the worker.
inline IndexSet global_randk_indices(std::uint64_t shared_seed, std::uint64_t iteration,
                                     std::size_t n, std::size_t k) {
  if (k < 1) throw InvalidConfig("GlobalRandK requires K >= 1");
  if (k > n) {
    throw InvalidConfig("GlobalRandK requires K <= n (K=" + std::to_string(k) +
                        ", n=" + std::to_string(n) + ")");
  }
  SplitMix64 gen(hash_combine(hash_combine(0x6a0b41ULL, shared_seed), iteration));
  IndexSet out(k);
  // Partial Fisher-Yates. The dense and sparse paths perform the same swaps, so
  // they select the same set.
  if (n <= 4 * k || n <= (1u << 16)) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t r = j + static_cast<std::size_t>(gen.below(n - j));
      std::swap(perm[j], perm[r]);
      out[j] = perm[j];
    }
  } else {
    std::unordered_map<std::size_t, std::size_t> moved;
    moved.reserve(2 * k);
    auto at = [&](std::size_t i) {
      auto it = moved.find(i);
      return it == moved.end() ? i : it->second;
    };
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t r = j + static_cast<std::size_t>(gen.below(n - j));
      const std::size_t vj = at(j);
      const std::size_t vr = at(r);
      moved[j] = vr;
      moved[r] = vj;
      out[j] = vr;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void check_index_set(const IndexSet& idx, std::size_t n) {
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= n) {
      throw ContractViolation("index " + std::to_string(idx[j]) + " out of range for n=" +
                              std::to_string(n));
    }
    if (j > 0 && idx[j] <= idx[j - 1]) {
      throw ContractViolation("index set must be strictly increasing");
    }
  }
}

// out[j] = v[idx[j]].
inline GradientVector gather(std::span<const double> v, const IndexSet& idx) {
  check_index_set(idx, v.size());
  GradientVector out(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) out[j] = v[idx[j]];
  return out;
}

// out[idx[j]] = sub[j]; every other coordinate is zero.
inline GradientVector scatter(std::span<const double> sub, const IndexSet& idx,
                              std::size_t n) {
  if (sub.size() != idx.size()) {
    throw ContractViolation("scatter: subvector length " + std::to_string(sub.size()) +
                            " != index count " + std::to_string(idx.size()));
  }
  check_index_set(idx, n);
  GradientVector out(n, 0.0);
  for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = sub[j];
  return out;
}

}  // namespace gcomp

#endif  // GCOMP_SPARSIFY_HPP_
