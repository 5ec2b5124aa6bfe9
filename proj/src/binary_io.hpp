#pragma once

// Little-endian scalar I/O for the checkpoint and dataset formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "switchnet/errors.hpp"

namespace switchnet::io {

template <typename U>
void write_le(std::ostream& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  std::array<char, sizeof(U)> buf{};
  for (std::size_t k = 0; k < sizeof(U); ++k) buf[k] = static_cast<char>((value >> (8 * k)) & 0xFF);
  out.write(buf.data(), buf.size());
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
inline void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }

template <typename U>
U read_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw ConfigError(std::string("truncated file while reading ") + what);
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(buf[k]) << (8 * k);
  return v;
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
  return read_le<std::uint32_t>(in, what);
}
inline std::uint64_t read_u64(std::istream& in, const char* what) {
  return read_le<std::uint64_t>(in, what);
}
inline double read_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const std::string& file) {
  char buf[8] = {};
  in.read(buf, 8);
  if (in.gcount() != 8 || std::memcmp(buf, magic, 8) != 0)
    throw ConfigError(file + ": bad magic, expected " + std::string(magic, 8));
}

}  // namespace switchnet::io
