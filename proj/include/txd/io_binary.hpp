#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

// Little-endian primitives for the TXDF / TXDE / TXDM container formats.
// Byte order is written out explicitly so the files are identical on any host.

namespace txd::io {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(os, u);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("binary read: truncated file");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("binary read: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64(std::istream& is) {
  std::uint64_t u = get_u64(is);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

inline float get_f32(std::istream& is) {
  std::uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline std::string get_string(std::istream& is) {
  std::uint32_t n = get_u32(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw std::runtime_error("binary read: truncated file");
  return s;
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const char* what) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error(std::string(what) + ": bad magic, expected " + magic);
}

}  // namespace txd::io
