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
// Arbitrary-width packing of signed quantization levels.
//
// Wire format (all multi-byte fields little-endian):
//
//   offset  size  field
//   0       1     magic 0x47
//   1       1     version (1)
//   2       1     scheme tag (SchemeTag)
//   3       1     level width r in bits, 1..32
//   4       1     scale-index width in bits, 0 when there is no index stream
//   5       8     coordinate count n (uint64)
//   13      4     max-norm normalizer (IEEE-754 binary32)
//   17      ...   level stream, ceil(n * r / 8) bytes
//   ...     ...   scale-index stream, ceil(n * index_width / 8) bytes
//
// Within a stream coordinate j occupies bits [j * r, (j + 1) * r), counted
// LSB-first from the first byte. Levels are two's complement; unused high bits
// of the last byte are zero.

#ifndef GCOMP_BITPACK_HPP_
#define GCOMP_BITPACK_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "gcomp/core.hpp"

namespace gcomp {

enum class SchemeTag : std::uint8_t {
  kRaw = 0,
  kQsgdMaxNorm = 1,
  kQsgdMaxNormMultiScale = 2,
  kGlobalRandKMaxNorm = 3,
  kGlobalRandKMaxNormMultiScale = 4,
};

inline constexpr std::uint8_t kPackMagic = 0x47;
inline constexpr std::uint8_t kPackVersion = 1;
inline constexpr std::size_t kPackHeaderBytes = 17;

struct PackedBuffer {
  SchemeTag tag = SchemeTag::kRaw;
  std::uint8_t width_bits = 1;
  std::uint8_t index_width_bits = 0;
  std::uint64_t count = 0;
  float wnorm = 0.0f;
  std::vector<std::uint8_t> payload;
  std::vector<std::uint8_t> index_payload;

  friend bool operator==(const PackedBuffer&, const PackedBuffer&) = default;
};

constexpr std::uint64_t packed_stream_bytes(std::uint64_t n, unsigned width_bits) {
  return (n * width_bits + 7) / 8;
}

namespace detail {

inline void check_width(unsigned width_bits) {
  if (width_bits < 1 || width_bits > 32) {
    throw InvalidConfig("pack width must be in [1, 32], got " + std::to_string(width_bits));
  }
}

// Appends the low `width` bits of each value, LSB-first.
template <class Range>
std::vector<std::uint8_t> write_bits(const Range& values, unsigned width) {
  std::vector<std::uint8_t> out(packed_stream_bytes(values.size(), width), 0);
  const std::uint64_t mask = (width == 64) ? ~0ULL : ((1ULL << width) - 1);
  std::uint64_t acc = 0;
  unsigned filled = 0;
  std::size_t pos = 0;
  for (auto value : values) {
    acc |= (static_cast<std::uint64_t>(value) & mask) << filled;
    filled += width;
    while (filled >= 8) {
      out[pos++] = static_cast<std::uint8_t>(acc);
      acc >>= 8;
      filled -= 8;
    }
  }
  if (filled > 0) out[pos] = static_cast<std::uint8_t>(acc);
  return out;
}

inline std::vector<std::uint32_t> read_bits(std::span<const std::uint8_t> bytes,
                                            std::uint64_t n, unsigned width) {
  if (bytes.size() < packed_stream_bytes(n, width)) {
    throw DecodeError("truncated bit stream: need " +
                      std::to_string(packed_stream_bytes(n, width)) + " bytes, have " +
                      std::to_string(bytes.size()));
  }
  std::vector<std::uint32_t> out(n);
  const std::uint64_t mask = (1ULL << width) - 1;
  std::uint64_t acc = 0;
  unsigned avail = 0;
  std::size_t pos = 0;
  for (std::uint64_t j = 0; j < n; ++j) {
    while (avail < width) {
      acc |= static_cast<std::uint64_t>(bytes[pos++]) << avail;
      avail += 8;
    }
    out[j] = static_cast<std::uint32_t>(acc & mask);
    acc >>= width;
    avail -= width;
  }
  return out;
}

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[off + i]) << (8 * i);
  return v;
}

}  // namespace detail

// Packs levels as width_bits-wide two's-complement fields. Every level must lie
// in [-2^(r-1), 2^(r-1) - 1].
inline PackedBuffer pack(std::span<const Level> levels, unsigned width_bits) {
  detail::check_width(width_bits);
  const std::int64_t lo = -(std::int64_t{1} << (width_bits - 1));
  const std::int64_t hi = (std::int64_t{1} << (width_bits - 1)) - 1;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (levels[j] < lo || levels[j] > hi) {
      throw ContractViolation("level " + std::to_string(levels[j]) + " at index " +
                              std::to_string(j) + " does not fit in " +
                              std::to_string(width_bits) + " bits");
    }
  }
  PackedBuffer buf;
  buf.width_bits = static_cast<std::uint8_t>(width_bits);
  buf.count = levels.size();
  buf.payload = detail::write_bits(levels, width_bits);
  return buf;
}

// Inverse of pack: sign-extends each field.
inline LevelVector unpack(const PackedBuffer& buf) {
  detail::check_width(buf.width_bits);
  const auto raw = detail::read_bits(buf.payload, buf.count, buf.width_bits);
  LevelVector out(raw.size());
  const unsigned shift = 32 - buf.width_bits;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    out[j] = static_cast<Level>(raw[j] << shift) >> shift;
  }
  return out;
}

// Attaches a scale-index stream of ceil(log2 N)-bit fields.
inline void pack_scale_indices(PackedBuffer& buf, std::span<const ScaleIndex> indices,
                               unsigned index_width_bits) {
  if (indices.size() != buf.count) {
    throw ContractViolation("scale index count does not match level count");
  }
  if (index_width_bits == 0) {
    for (std::size_t j = 0; j < indices.size(); ++j) {
      if (indices[j] != 0) throw ContractViolation("nonzero scale index with width 0");
    }
    buf.index_width_bits = 0;
    buf.index_payload.clear();
    return;
  }
  detail::check_width(index_width_bits);
  const std::uint64_t limit = 1ULL << index_width_bits;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= limit) {
      throw ContractViolation("scale index " + std::to_string(indices[j]) + " at index " +
                              std::to_string(j) + " does not fit in " +
                              std::to_string(index_width_bits) + " bits");
    }
  }
  buf.index_width_bits = static_cast<std::uint8_t>(index_width_bits);
  buf.index_payload = detail::write_bits(indices, index_width_bits);
}

inline ScaleIndexVector unpack_scale_indices(const PackedBuffer& buf) {
  if (buf.index_width_bits == 0) return ScaleIndexVector(buf.count, 0);
  detail::check_width(buf.index_width_bits);
  const auto raw = detail::read_bits(buf.index_payload, buf.count, buf.index_width_bits);
  return ScaleIndexVector(raw.begin(), raw.end());
}

inline std::vector<std::uint8_t> serialize(const PackedBuffer& buf) {
  std::vector<std::uint8_t> out;
  out.reserve(kPackHeaderBytes + buf.payload.size() + buf.index_payload.size());
  out.push_back(kPackMagic);
  out.push_back(kPackVersion);
  out.push_back(static_cast<std::uint8_t>(buf.tag));
  out.push_back(buf.width_bits);
  out.push_back(buf.index_width_bits);
  detail::put_le(out, buf.count, 8);
  detail::put_le(out, std::bit_cast<std::uint32_t>(buf.wnorm), 4);
  out.insert(out.end(), buf.payload.begin(), buf.payload.end());
  out.insert(out.end(), buf.index_payload.begin(), buf.index_payload.end());
  return out;
}

inline PackedBuffer deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPackHeaderBytes) {
    throw DecodeError("truncated header: " + std::to_string(bytes.size()) + " bytes");
  }
  if (bytes[0] != kPackMagic) throw DecodeError("bad magic byte");
  if (bytes[1] != kPackVersion) {
    throw DecodeError("unsupported version " + std::to_string(bytes[1]));
  }
  if (bytes[2] > static_cast<std::uint8_t>(SchemeTag::kGlobalRandKMaxNormMultiScale)) {
    throw DecodeError("unknown scheme tag " + std::to_string(bytes[2]));
  }
  PackedBuffer buf;
  buf.tag = static_cast<SchemeTag>(bytes[2]);
  buf.width_bits = bytes[3];
  buf.index_width_bits = bytes[4];
  if (buf.width_bits < 1 || buf.width_bits > 32 || buf.index_width_bits > 32) {
    throw DecodeError("invalid field width in header");
  }
  buf.count = detail::get_le(bytes, 5, 8);
  buf.wnorm = std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(bytes, 13, 4)));
  // Guard the size arithmetic below against absurd counts.
  if (buf.count > (std::uint64_t{1} << 56)) throw DecodeError("coordinate count too large");
  const std::uint64_t level_bytes = packed_stream_bytes(buf.count, buf.width_bits);
  const std::uint64_t index_bytes = packed_stream_bytes(buf.count, buf.index_width_bits);
  const std::uint64_t want = kPackHeaderBytes + level_bytes + index_bytes;
  if (bytes.size() < want) {
    throw DecodeError("truncated buffer: need " + std::to_string(want) + " bytes, have " +
                      std::to_string(bytes.size()));
  }
  if (bytes.size() > want) throw DecodeError("trailing bytes after payload");
  auto body = bytes.subspan(kPackHeaderBytes);
  buf.payload.assign(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(level_bytes));
  buf.index_payload.assign(body.begin() + static_cast<std::ptrdiff_t>(level_bytes),
                           body.end());
  return buf;
}

}  // namespace gcomp

#endif  // GCOMP_BITPACK_HPP_
