#ifndef SNAPVOTE_BINARY_IO_HPP_
#define SNAPVOTE_BINARY_IO_HPP_

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "snapvote/errors.hpp"
#include "snapvote/matrix.hpp"

namespace snapvote {
namespace io {

// Little-endian container primitives shared by the SNAP, DAES and FRST
// formats. A matrix record is {rows u64, cols u64, rows*cols f64}.

inline void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> buf;
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(buf.data(), buf.size());
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> buf;
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(buf.data(), buf.size());
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void put_matrix(std::ostream& out, const Matrix& m) {
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (double v : m.values()) put_f64(out, v);
}

inline std::uint64_t get_bytes(std::istream& in, int count) {
  std::array<unsigned char, 8> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), count);
  if (in.gcount() != count) throw FormatError("unexpected end of binary stream");
  std::uint64_t v = 0;
  for (int i = 0; i < count; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
inline std::uint64_t get_u64(std::istream& in) { return get_bytes(in, 8); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic)
    throw FormatError("bad magic: expected '" + std::string(magic) + "'");
}

inline Matrix get_matrix(std::istream& in) {
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  // Guard against garbage headers before allocating.
  if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) throw FormatError("matrix record too large");
  Matrix m(rows, cols);
  for (double& v : m.values()) v = get_f64(in);
  return m;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return in;
}

/// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// FNV-1a, used for config fingerprints.
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace io
}  // namespace snapvote

#endif  // SNAPVOTE_BINARY_IO_HPP_
