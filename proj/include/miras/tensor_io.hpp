#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "miras/tensor.hpp"

// Binary tensor dump, little-endian:
//   "MIRAS1\0\0"            8 bytes magic
//   u32                     ndim
//   ndim x u64              extents
//   prod(extents) x f64     row-major payload
namespace miras {

inline constexpr std::array<char, 8> kTensorMagic = {'M', 'I', 'R', 'A', 'S', '1', '\0', '\0'};

// Refuse payloads beyond 2^40 elements (8 TiB); anything larger is corrupt.
inline constexpr std::uint64_t kMaxTensorElements = 1ULL << 40;

namespace detail {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(std::string("truncated tensor stream while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace detail

inline void dump_tensor(const Tensor& t, std::ostream& out) {
  out.write(kTensorMagic.data(), kTensorMagic.size());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.dims()) detail::put_le<std::uint64_t>(out, e);
  for (double x : t.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  if (!out) throw FormatError("failed writing tensor stream");
}

inline Tensor load_tensor(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 8 || magic != kTensorMagic) throw FormatError("malformed tensor header: bad magic");
  const auto ndim = detail::get_le<std::uint32_t>(in, "ndim");
  if (ndim > 64) throw FormatError("malformed tensor header: ndim " + std::to_string(ndim));
  Dims dims;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto e = detail::get_le<std::uint64_t>(in, "extent");
    if (e == 0) throw FormatError("malformed tensor header: zero extent");
    if (count > kMaxTensorElements / e) throw FormatError("tensor dims overflow");
    count *= e;
    dims.push_back(static_cast<std::size_t>(e));
  }
  std::vector<double> data(static_cast<std::size_t>(count));
  for (double& x : data) x = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, "payload"));
  return Tensor(std::move(dims), std::move(data));
}

inline void dump_tensor_file(const Tensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  dump_tensor(t, out);
}

inline Tensor load_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return load_tensor(in);
}

}  // namespace miras
