#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "avoinv/common.hpp"
#include "avoinv/grid.hpp"

// Binary container primitives shared by the GRFB/FLDV/NPKR/CHNS formats,
// plus the CSV and PGM emitters. All binary integers and floats are
// little-endian; doubles are IEEE 754 binary64.

namespace avoinv::io {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw io_error("write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n))
    throw io_error("unexpected end of file");
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  write_bytes(os, b, 4);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  write_bytes(os, b, 8);
}

inline std::uint8_t read_u8(std::istream& is) {
  std::uint8_t v;
  read_bytes(is, &v, 1);
  return v;
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  read_bytes(is, b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double read_f64(std::istream& is) {
  unsigned char b[8];
  read_bytes(is, b, 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_magic(std::ostream& os, const char magic[4]) {
  write_bytes(os, magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
  char got[4];
  read_bytes(is, got, 4);
  if (std::memcmp(got, magic, 4) != 0)
    throw io_error(std::string(what) + ": bad magic");
}

inline std::ofstream open_out(const std::string& path, bool binary = true) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw io_error("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path, bool binary = true) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw io_error("cannot open for reading: " + path);
  return is;
}

// Shortest decimal digits that round-trip a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- FLDV: one field over a grid ----
// "FLDV" | version u8 | nx u32 | ny u32 | nx*ny f64 row-major

inline void write_field(std::ostream& os, const grid_spec& g, const field& f) {
  check_field(g, f, "field");
  write_magic(os, "FLDV");
  write_u8(os, 1);
  write_u32(os, g.nx);
  write_u32(os, g.ny);
  for (double v : f) write_f64(os, v);
}

inline field read_field(std::istream& is, grid_spec& g) {
  expect_magic(is, "FLDV", "field");
  if (read_u8(is) != 1) throw io_error("field: unsupported version");
  g.nx = read_u32(is);
  g.ny = read_u32(is);
  check_grid(g);
  field f(g.size());
  for (double& v : f) v = read_f64(is);
  return f;
}

inline void save_field(const std::string& path, const grid_spec& g, const field& f) {
  auto os = open_out(path);
  write_field(os, g, f);
}

inline field load_field(const std::string& path, grid_spec& g) {
  auto is = open_in(path);
  return read_field(is, g);
}

// ---- CSV: "i,j,value", one row per cell ----

inline void write_field_csv(std::ostream& os, const grid_spec& g, const field& f) {
  check_field(g, f, "field");
  os << "i,j,value\n";
  for (std::uint32_t i = 0; i < g.nx; ++i)
    for (std::uint32_t j = 0; j < g.ny; ++j)
      os << i << ',' << j << ',' << format_double(f[g.index(i, j)]) << '\n';
  if (!os) throw io_error("csv write failed");
}

inline void save_field_csv(const std::string& path, const grid_spec& g, const field& f) {
  auto os = open_out(path, false);
  write_field_csv(os, g, f);
}

// ---- PGM: 8-bit grayscale map of a field ----
// Binary P5 with the value range recorded in a header comment; pixels scale
// linearly from min (black) to max (white). A flat field renders black.

inline void write_field_pgm(std::ostream& os, const grid_spec& g, const field& f) {
  check_field(g, f, "field");
  double lo = *std::min_element(f.begin(), f.end());
  double hi = *std::max_element(f.begin(), f.end());
  os << "P5\n# min=" << format_double(lo) << " max=" << format_double(hi)
     << " scale=linear\n"
     << g.ny << ' ' << g.nx << "\n255\n";
  double span = hi - lo;
  for (double v : f) {
    int pix = span > 0.0 ? static_cast<int>(std::lround(255.0 * (v - lo) / span)) : 0;
    os.put(static_cast<char>(std::clamp(pix, 0, 255)));
  }
  if (!os) throw io_error("pgm write failed");
}

inline void save_field_pgm(const std::string& path, const grid_spec& g, const field& f) {
  auto os = open_out(path);
  write_field_pgm(os, g, f);
}

// FNV-1a 64-bit, used for the output manifests.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string read_file_bytes(const std::string& path) {
  auto is = open_in(path);
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

}  // namespace avoinv::io
