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
// Max-norm stochastic quantization.
//
// Every worker quantizes its gradient against the same normalizer, the
// largest L2 norm over all workers, so the resulting integer levels can be
// summed by an ordinary all-reduce and decoded once:
//
//   level_i = sign(v_i) * (l + B),  l = floor(s |v_i| / w),
//   B ~ Bernoulli(s |v_i| / w - l),
//   decode(level) = w * level / s.
//
// The multi-scale variant picks, per coordinate, the largest scale in a set
// that still fits the bit width of the smallest scale, and agrees on that
// choice across workers with an elementwise min (scale sharing).

#ifndef GCOMP_QUANTIZE_HPP_
#define GCOMP_QUANTIZE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcomp/core.hpp"
#include "gcomp/rng.hpp"

namespace gcomp {

namespace detail {

// Tolerance on |v_i| <= w. The max-norm is itself a rounded sqrt, so a lone
// nonzero coordinate may exceed it by an ulp.
constexpr double kNormSlack = 1e-12;

inline void check_encode_contract(std::span<const double> v, double wnorm) {
  if (!std::isfinite(wnorm) || wnorm < 0.0) {
    throw ContractViolation("max-norm must be finite and non-negative");
  }
  const double limit = wnorm * (1.0 + kNormSlack);
  // Single branch-free pass; NaN fails the comparison too.
  const double* data = v.data();
  std::int64_t violations = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    violations += std::abs(data[i]) <= limit ? 0 : 1;
  }
  if (violations == 0 && (wnorm != 0.0 || v.empty())) return;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (!std::isfinite(v[i])) {
      throw InvalidInput("gradient has non-finite entry at index " + std::to_string(i));
    }
    if (a > limit || (wnorm == 0.0 && a != 0.0)) {
      throw ContractViolation("|v[" + std::to_string(i) +
                              "]| exceeds the max-norm normalizer");
    }
  }
}

// Stochastic level for one coordinate. `factor` is s / w. Branch-free so the
// encode loops vectorize: |x| >= w clamps to scaled = s, which gives l = s - 1
// and p = 1 (level s); x = 0 gives l = 0 and p = 0.
inline Level quantize_one(double x, double factor, double sd, double u) {
  double scaled = std::abs(x) * factor;
  scaled = scaled < sd ? scaled : sd;
  // scaled >= 0, so truncation is floor.
  double l = static_cast<double>(static_cast<std::int64_t>(scaled));
  l = l < sd - 1.0 ? l : sd - 1.0;
  const double p = scaled - l;
  const double magnitude = l + (u < p ? 1.0 : 0.0);
  return static_cast<Level>(std::copysign(magnitude, x));
}

// Hot loop, kept free of throwing code so it vectorizes.
[[gnu::noinline]] inline void encode_levels(const double* __restrict in,
                                            Level* __restrict dst, std::size_t n,
                                            double factor, double sd,
                                            std::uint64_t stream_key) {
  const CounterStream stream(stream_key);
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = quantize_one(in[i], factor, sd, stream.uniform(i));
  }
}

[[gnu::noinline]] inline void encode_levels_multiscale(
    const double* __restrict in, const ScaleIndex* __restrict index,
    Level* __restrict dst, std::size_t n, const double* __restrict factors,
    const double* __restrict scale_values, std::size_t scale_count,
    std::uint64_t stream_key) {
  const CounterStream stream(stream_key);
  // Gather per-coordinate scales a block at a time so the quantize loop stays
  // vectorizable.
  constexpr std::size_t kBlock = 512;
  alignas(64) double f[kBlock];
  alignas(64) double sd[kBlock];
  for (std::size_t base = 0; base < n; base += kBlock) {
    const std::size_t len = std::min(kBlock, n - base);
    const ScaleIndex* __restrict idx = index + base;
    if (scale_count <= 8) {
      // One vectorized select pass per scale beats a gather for small sets.
      for (std::size_t k = 0; k < len; ++k) {
        f[k] = factors[0];
        sd[k] = scale_values[0];
      }
      for (std::size_t j = 1; j < scale_count; ++j) {
        const double fj = factors[j], sj = scale_values[j];
        for (std::size_t k = 0; k < len; ++k) {
          const bool hit = idx[k] == j;
          f[k] = hit ? fj : f[k];
          sd[k] = hit ? sj : sd[k];
        }
      }
    } else {
      for (std::size_t k = 0; k < len; ++k) {
        f[k] = factors[idx[k]];
        sd[k] = scale_values[idx[k]];
      }
    }
    for (std::size_t k = 0; k < len; ++k) {
      dst[base + k] = quantize_one(in[base + k], f[k], sd[k], stream.uniform(base + k));
    }
  }
}

}  // namespace detail

// Encodes v against normalizer `wnorm` with s levels. `out` must have v.size()
// entries.
inline void qsgd_encode_into(std::span<const double> v, double wnorm, std::int64_t s,
                             const CounterStream& stream, std::span<Level> out) {
  detail::check_scale(s);
  if (out.size() != v.size()) throw ContractViolation("output length mismatch");
  detail::check_encode_contract(v, wnorm);
  if (wnorm == 0.0) {
    std::fill(out.begin(), out.end(), 0);
    return;
  }
  detail::encode_levels(v.data(), out.data(), v.size(), static_cast<double>(s) / wnorm,
                        static_cast<double>(s), stream.key());
}

inline LevelVector qsgd_encode(std::span<const double> v, double wnorm, std::int64_t s,
                               const CounterStream& stream) {
  LevelVector out(v.size());
  qsgd_encode_into(v, wnorm, s, stream, out);
  return out;
}

// Reconstructs w * zeta / s. zeta may be an average of levels across workers.
template <class T>
GradientVector qsgd_decode(std::span<const T> zeta, double wnorm, std::int64_t s) {
  detail::check_scale(s);
  GradientVector out(zeta.size());
  const auto sd = static_cast<double>(s);
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    const auto z = static_cast<double>(zeta[i]);
    if (!std::isfinite(z)) throw InvalidInput("zeta has non-finite entry");
    out[i] = wnorm * z / sd;
  }
  return out;
}

inline GradientVector qsgd_decode(const std::vector<double>& zeta, double wnorm,
                                  std::int64_t s) {
  return qsgd_decode(std::span<const double>(zeta), wnorm, s);
}

// Index of the largest scale s with s * |v_i| <= w * min_scale. Zero
// coordinates take the largest scale.
inline ScaleIndexVector multiscale_local_scales(std::span<const double> v, double wnorm,
                                                const ScaleSet& scales) {
  if (scales.empty()) throw InvalidConfig("scale set is empty");
  detail::check_encode_contract(v, wnorm);
  const auto top = static_cast<ScaleIndex>(scales.size() - 1);
  const double budget = wnorm * static_cast<double>(scales.min_scale());
  ScaleIndexVector out(v.size(), top);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a == 0.0) continue;
    ScaleIndex chosen = 0;
    for (ScaleIndex j = top; j > 0; --j) {
      if (static_cast<double>(scales[j]) * a <= budget) {
        chosen = j;
        break;
      }
    }
    out[i] = chosen;
  }
  return out;
}

// Elementwise min over workers. Since the scale set is sorted, the min index
// is the min scale.
inline ScaleIndexVector share_scales(std::span<const ScaleIndexVector> local) {
  if (local.empty()) throw ContractViolation("share_scales needs at least one worker");
  ScaleIndexVector out = local.front();
  for (std::size_t m = 1; m < local.size(); ++m) {
    if (local[m].size() != out.size()) {
      throw ContractViolation("scale index vectors differ in length across workers");
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], local[m][i]);
  }
  return out;
}

inline void multiscale_encode_into(std::span<const double> v, double wnorm,
                                   std::span<const ScaleIndex> shared,
                                   const ScaleSet& scales, const CounterStream& stream,
                                   std::span<Level> out) {
  if (scales.empty()) throw InvalidConfig("scale set is empty");
  if (shared.size() != v.size() || out.size() != v.size()) {
    throw ContractViolation("multiscale_encode length mismatch");
  }
  detail::check_encode_contract(v, wnorm);
  if (wnorm == 0.0) {
    std::fill(out.begin(), out.end(), 0);
    return;
  }
  std::vector<double> factors(scales.size());
  std::vector<double> scale_values(scales.size());
  for (std::size_t j = 0; j < scales.size(); ++j) {
    scale_values[j] = static_cast<double>(scales[j]);
    factors[j] = scale_values[j] / wnorm;
  }
  for (std::size_t i = 0; i < shared.size(); ++i) {
    if (shared[i] >= scales.size()) throw ContractViolation("scale index out of range");
  }
  detail::encode_levels_multiscale(v.data(), shared.data(), out.data(), v.size(),
                                   factors.data(), scale_values.data(), scales.size(),
                                   stream.key());
}

inline LevelVector multiscale_encode(std::span<const double> v, double wnorm,
                                     std::span<const ScaleIndex> shared,
                                     const ScaleSet& scales, const CounterStream& stream) {
  LevelVector out(v.size());
  multiscale_encode_into(v, wnorm, shared, scales, stream, out);
  return out;
}

// w * zeta ./ s*, with s*_i = scales[shared[i]].
template <class T>
GradientVector multiscale_decode(std::span<const T> zeta, double wnorm,
                                 std::span<const ScaleIndex> shared,
                                 const ScaleSet& scales) {
  if (shared.size() != zeta.size()) {
    throw ContractViolation("multiscale_decode length mismatch");
  }
  GradientVector out(zeta.size());
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    if (shared[i] >= scales.size()) throw ContractViolation("scale index out of range");
    const auto z = static_cast<double>(zeta[i]);
    if (!std::isfinite(z)) throw InvalidInput("zeta has non-finite entry");
    out[i] = wnorm * z / static_cast<double>(scales[shared[i]]);
  }
  return out;
}

inline GradientVector multiscale_decode(const std::vector<double>& zeta, double wnorm,
                                        std::span<const ScaleIndex> shared,
                                        const ScaleSet& scales) {
  return multiscale_decode(std::span<const double>(zeta), wnorm, shared, scales);
}

// Closed-form per-coordinate variance of the decoded value:
// w^2 p (1 - p) / s^2.
inline double coordinate_variance(double x, double wnorm, std::int64_t s) {
  if (x == 0.0 || wnorm == 0.0) return 0.0;
  const double a = std::abs(x);
  if (a >= wnorm) return 0.0;
  const double scaled = a * static_cast<double>(s) / wnorm;
  auto l = static_cast<std::int64_t>(scaled);
  if (l >= s) l = s - 1;
  const double p = scaled - static_cast<double>(l);
  const double sd = static_cast<double>(s);
  return wnorm * wnorm * p * (1.0 - p) / (sd * sd);
}

// Upper bound on E||Q(v) - v||^2 for s levels (single scale) or the minimum
// scale (multi-scale): (1 + min(n / s^2, sqrt(n) / s)) * w^2.
inline double variance_bound(std::size_t n, std::int64_t s, double wnorm) {
  const double nd = static_cast<double>(n);
  const double sd = static_cast<double>(s);
  return (1.0 + std::min(nd / (sd * sd), std::sqrt(nd) / sd)) * wnorm * wnorm;
}

}  // namespace gcomp

#endif  // GCOMP_QUANTIZE_HPP_
