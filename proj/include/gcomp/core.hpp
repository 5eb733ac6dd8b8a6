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
// Shared types for the gradient compression library: gradient vectors,
// scheme descriptors, norms and bit-budget arithmetic.

#ifndef GCOMP_CORE_HPP_
#define GCOMP_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace gcomp {

// Error taxonomy. Input/config errors are recoverable by the caller; contract
// violations indicate a bug in the calling code.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using GradientVector = std::vector<double>;

// Signed integer quantization levels. Each entry lies in [-s, s] for the
// scale s used at that coordinate.
using Level = std::int32_t;
using LevelVector = std::vector<Level>;

// Per-coordinate index into a ScaleSet.
using ScaleIndex = std::uint32_t;
using ScaleIndexVector = std::vector<ScaleIndex>;

// Strictly increasing set of positive integer quantization scales.
class ScaleSet {
 public:
  ScaleSet() = default;
  explicit ScaleSet(std::vector<std::int64_t> scales) : scales_(std::move(scales)) {
    if (scales_.empty()) throw InvalidConfig("scale set is empty");
    for (std::size_t i = 0; i < scales_.size(); ++i) {
      if (scales_[i] < 1) throw InvalidConfig("scale must be >= 1");
      if (i > 0 && scales_[i] <= scales_[i - 1]) {
        throw InvalidConfig("scale set must be strictly increasing");
      }
    }
  }

  std::size_t size() const { return scales_.size(); }
  bool empty() const { return scales_.empty(); }
  std::int64_t operator[](std::size_t i) const { return scales_[i]; }
  std::int64_t min_scale() const { return scales_.front(); }
  std::int64_t max_scale() const { return scales_.back(); }
  const std::vector<std::int64_t>& values() const { return scales_; }

  friend bool operator==(const ScaleSet&, const ScaleSet&) = default;

 private:
  std::vector<std::int64_t> scales_;
};

// ceil(log2(x)) for x >= 1, exact in integer arithmetic.
constexpr int ceil_log2(std::uint64_t x) {
  int bits = 0;
  std::uint64_t v = 1;
  while (v < x) {
    v <<= 1;
    ++bits;
  }
  return bits;
}

// Scheme descriptors. The set is closed: dispatch over SchemeDescriptor is
// exhaustive.
struct Uncompressed {
  friend bool operator==(const Uncompressed&, const Uncompressed&) = default;
};

struct QsgdMaxNorm {
  std::int64_t s = 1;
  friend bool operator==(const QsgdMaxNorm&, const QsgdMaxNorm&) = default;
};

struct QsgdMaxNormMultiScale {
  ScaleSet scales;
  friend bool operator==(const QsgdMaxNormMultiScale&,
                         const QsgdMaxNormMultiScale&) = default;
};

using InnerQuantizer = std::variant<QsgdMaxNorm, QsgdMaxNormMultiScale>;

struct GlobalRandK {
  std::size_t k = 1;
  InnerQuantizer inner = QsgdMaxNorm{};
  friend bool operator==(const GlobalRandK&, const GlobalRandK&) = default;
};

using SchemeDescriptor =
    std::variant<Uncompressed, QsgdMaxNorm, QsgdMaxNormMultiScale, GlobalRandK>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Short human-readable scheme name, e.g. "qsgd-mn-s16" or "grandk-mn-ts-4-16-k100".
inline std::string scheme_name(const SchemeDescriptor& scheme) {
  auto scales_str = [](const ScaleSet& set) {
    std::string out;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (i) out += "-";
      out += std::to_string(set[i]);
    }
    return out;
  };
  auto inner_str = [&](const InnerQuantizer& inner) {
    return std::visit(
        overloaded{
            [](const QsgdMaxNorm& q) { return "mn-s" + std::to_string(q.s); },
            [&](const QsgdMaxNormMultiScale& q) {
              return "mn-ts-s" + scales_str(q.scales);
            }},
        inner);
  };
  return std::visit(
      overloaded{
          [](const Uncompressed&) { return std::string("allreduce-sgd"); },
          [](const QsgdMaxNorm& q) { return "qsgd-mn-s" + std::to_string(q.s); },
          [&](const QsgdMaxNormMultiScale& q) {
            return "qsgd-mn-ts-s" + scales_str(q.scales);
          },
          [&](const GlobalRandK& g) {
            return "grandk-" + inner_str(g.inner) + "-k" + std::to_string(g.k);
          }},
      scheme);
}

// Bit budget of one compressed gradient exchange.
//
// per_coordinate_bits is the nominal width r = ceil(log2 s) + 1 (plus
// ceil(log2 N) for multi-scale, with s the minimum scale). Levels span
// [-s, s], which needs ceil(log2(2s + 1)) bits to be stored losslessly; that
// width is reported separately in level_storage_bits and is one bit wider than
// the nominal level width exactly when s is a power of two.
struct BitBudget {
  std::int64_t header_bits = 0;
  std::int64_t per_coordinate_bits = 0;
  std::int64_t coordinates = 0;
  std::int64_t total_bits = 0;
  // Bits per coordinate spent on the level itself and on the scale index.
  std::int64_t level_bits = 0;
  std::int64_t scale_index_bits = 0;
  // Lossless two's-complement width for the level range [-s, s] (for
  // multi-scale, s is the minimum scale).
  std::int64_t level_storage_bits = 0;
};

// Nominal level width r = ceil(log2 s) + 1.
constexpr int nominal_level_bits(std::int64_t s) {
  return ceil_log2(static_cast<std::uint64_t>(s)) + 1;
}

// Two's-complement width holding every integer in [-s, s].
constexpr int lossless_level_bits(std::int64_t s) {
  return ceil_log2(static_cast<std::uint64_t>(2 * s + 1));
}

namespace detail {

inline void check_scale(std::int64_t s) {
  if (s < 1) throw InvalidConfig("quantization scale s must be >= 1");
  if (s > (std::int64_t{1} << 30)) {
    throw InvalidConfig("quantization scale s must be <= 2^30");
  }
}

inline BitBudget quantizer_budget(const InnerQuantizer& inner, std::int64_t n) {
  BitBudget b;
  b.header_bits = 32;
  b.coordinates = n;
  std::visit(overloaded{[&](const QsgdMaxNorm& q) {
                          check_scale(q.s);
                          b.level_bits = nominal_level_bits(q.s);
                          b.scale_index_bits = 0;
                          b.level_storage_bits = lossless_level_bits(q.s);
                        },
                        [&](const QsgdMaxNormMultiScale& q) {
                          if (q.scales.empty()) throw InvalidConfig("scale set is empty");
                          for (auto s : q.scales.values()) check_scale(s);
                          b.level_bits = nominal_level_bits(q.scales.min_scale());
                          b.scale_index_bits = ceil_log2(q.scales.size());
                          // s*_i |v_i| <= w min_scale keeps every level
                          // within [-min_scale, min_scale].
                          b.level_storage_bits =
                              lossless_level_bits(q.scales.min_scale());
                        }},
             inner);
  b.per_coordinate_bits = b.level_bits + b.scale_index_bits;
  b.total_bits = b.header_bits + n * b.per_coordinate_bits;
  return b;
}

}  // namespace detail

// Bits exchanged per worker per iteration for `scheme` on an n-dimensional
// gradient. GlobalRandK replaces n by K; index selection costs nothing since
// every worker derives the indices from a shared seed.
inline BitBudget bit_cost(const SchemeDescriptor& scheme, std::int64_t n) {
  if (n < 0) throw InvalidConfig("dimension must be non-negative");
  return std::visit(
      overloaded{[&](const Uncompressed&) {
                   BitBudget b;
                   b.per_coordinate_bits = 32;
                   b.level_bits = 32;
                   b.level_storage_bits = 32;
                   b.coordinates = n;
                   b.total_bits = 32 * n;
                   return b;
                 },
                 [&](const QsgdMaxNorm& q) {
                   return detail::quantizer_budget(q, n);
                 },
                 [&](const QsgdMaxNormMultiScale& q) {
                   return detail::quantizer_budget(q, n);
                 },
                 [&](const GlobalRandK& g) {
                   if (g.k < 1) throw InvalidConfig("GlobalRandK requires K >= 1");
                   if (static_cast<std::int64_t>(g.k) > n) {
                     throw InvalidConfig("GlobalRandK requires K <= n");
                   }
                   return detail::quantizer_budget(g.inner,
                                                   static_cast<std::int64_t>(g.k));
                 }},
      scheme);
}

inline void require_finite(std::span<const double> v, const char* what = "vector") {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw InvalidInput(std::string(what) + " has non-finite entry at index " +
                         std::to_string(i));
    }
  }
}

namespace detail {

// Pairwise sum of squares in long double.
inline long double pairwise_sum_squares(std::span<const double> v) {
  constexpr std::size_t kBlock = 128;
  if (v.size() <= kBlock) {
    long double acc = 0.0L;
    for (double x : v) acc += static_cast<long double>(x) * x;
    return acc;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum_squares(v.first(half)) + pairwise_sum_squares(v.subspan(half));
}

}  // namespace detail

// Euclidean norm. Throws InvalidInput on non-finite entries.
inline double l2_norm(std::span<const double> v) {
  require_finite(v, "gradient");
  // Rescale by the max magnitude so squares neither overflow nor underflow.
  double max_abs = 0.0;
  for (double x : v) max_abs = std::max(max_abs, std::abs(x));
  if (max_abs == 0.0) return 0.0;
  long double acc = 0.0L;
  if (max_abs > 1e150 || max_abs < 1e-150) {
    std::vector<double> scaled(v.begin(), v.end());
    for (double& x : scaled) x /= max_abs;
    acc = detail::pairwise_sum_squares(scaled);
    return static_cast<double>(std::sqrt(acc) * max_abs);
  }
  acc = detail::pairwise_sum_squares(v);
  return static_cast<double>(std::sqrt(acc));
}

}  // namespace gcomp

#endif  // GCOMP_CORE_HPP_
