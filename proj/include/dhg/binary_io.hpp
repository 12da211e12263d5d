#pragma once

// Little-endian scalar I/O shared by the SKEL1 and DHGW formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace dhg::io {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline bool read_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
  return true;
}

inline bool read_u64(std::istream& in, std::uint64_t& v) {
  std::uint32_t lo = 0, hi = 0;
  if (!read_u32(in, lo) || !read_u32(in, hi)) return false;
  v = std::uint64_t{lo} | (std::uint64_t{hi} << 32);
  return true;
}

inline bool read_f32(std::istream& in, float& v) {
  std::uint32_t bits = 0;
  if (!read_u32(in, bits)) return false;
  v = std::bit_cast<float>(bits);
  return true;
}

}  // namespace dhg::io
