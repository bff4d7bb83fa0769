#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include <zlib.h>

namespace dlio {

// CRC-32 (IEEE 802.3, reflected, as in zlib/PNG). Pass the previous value to
// checksum data incrementally.
inline std::uint32_t crc32(std::span<const std::byte> data, std::uint32_t seed = 0) {
  uLong crc = seed;
  const auto* p = reinterpret_cast<const Bytef*>(data.data());
  std::size_t left = data.size();
  while (left > 0) {
    const auto n = static_cast<uInt>(left > (1u << 30) ? (1u << 30) : left);
    crc = ::crc32(crc, p, n);
    p += n;
    left -= n;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class T>
std::uint32_t crc32_of(std::span<const T> values, std::uint32_t seed = 0) {
  return crc32(std::as_bytes(values), seed);
}

}  // namespace dlio
