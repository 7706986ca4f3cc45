#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

namespace memvqa::binary {

// Little-endian float32/float64 encoding, independent of host byte order.
template <typename Real>
void append_le(std::string& out, Real value) {
  using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;
  Bits bits;
  std::memcpy(&bits, &value, sizeof(Real));
  for (std::size_t i = 0; i < sizeof(Real); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename Real>
Real read_le(const char* p) {
  using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(Real); ++i) {
    bits |= static_cast<Bits>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  Real value;
  std::memcpy(&value, &bits, sizeof(Real));
  return value;
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace memvqa::binary
