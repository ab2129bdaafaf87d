#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace cato::detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline bool get_u64(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

inline void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

inline bool get_f64(std::istream& is, double& d) {
  std::uint64_t bits = 0;
  if (!get_u64(is, bits)) return false;
  d = std::bit_cast<double>(bits);
  return true;
}

}  // namespace cato::detail
