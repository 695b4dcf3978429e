#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "advface/errors.hpp"

namespace advface::detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  return v;
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  v = to_little_endian(v);
  char buf[4];
  std::memcpy(buf, &v, 4);
  os.write(buf, 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  char buf[4];
  if (!is.read(buf, 4)) throw IoError("unexpected end of binary data");
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return to_little_endian(v);
}

inline void write_f32(std::ostream& os, double value) {
  write_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

inline double read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }

}  // namespace advface::detail
