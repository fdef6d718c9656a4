#pragma once

#include "hgs/error.hpp"
#include "hgs/math.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

// Little-endian raw binary helpers for checkpoint state. Doubles are stored as
// their exact bit patterns so resumed runs are bit-identical.
namespace hgs::bin {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw Error(ErrorKind::Format, "binary state truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_i64(std::ostream& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }
inline std::int64_t get_i64(std::istream& in) { return static_cast<std::int64_t>(get_u64(in)); }

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

template <typename Derived>
void put_vec(std::ostream& out, const Eigen::MatrixBase<Derived>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

template <int N>
Eigen::Matrix<double, N, 1> get_vec(std::istream& in) {
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = get_f64(in);
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n > (1ull << 32)) throw Error(ErrorKind::Format, "binary string too long");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error(ErrorKind::Format, "binary state truncated");
  return s;
}

}  // namespace hgs::bin
