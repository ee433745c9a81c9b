#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include "tcra/errors.hpp"
#include "tcra/numerics/tensor.hpp"

namespace tcra {

// Container layout, all integers little-endian:
//   0  magic "TCRA"
//   4  u16 format version
//   6  u8  dtype (0 = f32, 1 = f64)
//   7  u8  ndim
//   8  ndim x u32 dims
//   .. row-major payload
inline constexpr std::array<char, 4> kTensorMagic{'T', 'C', 'R', 'A'};
inline constexpr std::uint16_t kTensorFormatVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename Real>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<Real, float> || std::is_same_v<Real, double>);
  return std::is_same_v<Real, float> ? DType::f32 : DType::f64;
}

inline std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }

namespace detail {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(p[b]) << (8 * b);
  return v;
}

}  // namespace detail

template <typename Real>
std::vector<std::uint8_t> encode_tensor(const Tensor<Real>& t) {
  if (t.rank() > 255) throw DimensionError("tensor rank exceeds container limit");
  std::vector<std::uint8_t> out(kTensorMagic.begin(), kTensorMagic.end());
  detail::put_le<std::uint16_t>(out, kTensorFormatVersion);
  out.push_back(static_cast<std::uint8_t>(dtype_of<Real>()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > 0xFFFFFFFFu) throw DimensionError("dimension exceeds u32");
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + t.size() * sizeof(Real));
  for (Real v : t.values()) {
    if constexpr (std::is_same_v<Real, float>) detail::put_le(out, std::bit_cast<std::uint32_t>(v));
    else detail::put_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

/// Decodes a container, converting to `Real` if the stored dtype differs.
template <typename Real>
Tensor<Real> decode_tensor(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kFixed = 8;
  if (bytes.size() < 4 || !std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin())) {
    throw FormatError("bad magic, expected \"TCRA\"", 0);
  }
  if (bytes.size() < kFixed) throw FormatError("truncated header", bytes.size());
  const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(version), 4);
  }
  const auto tag = bytes[6];
  if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag), 6);
  const DType dtype = static_cast<DType>(tag);
  const std::size_t ndim = bytes[7];
  if (ndim == 0) throw FormatError("zero-rank tensor", 7);
  const std::size_t payload_at = kFixed + 4 * ndim;
  if (bytes.size() < payload_at) throw FormatError("truncated dimension list", bytes.size());
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) {
    shape[i] = detail::get_le<std::uint32_t>(bytes.data() + kFixed + 4 * i);
    if (shape[i] == 0) throw FormatError("zero dimension", kFixed + 4 * i);
  }
  const std::size_t n = shape_numel(shape);
  const std::size_t expected = n * dtype_size(dtype);
  const std::size_t present = bytes.size() - payload_at;
  if (present != expected) {
    throw FormatError("payload length " + std::to_string(present) + " bytes, header declares " +
                          std::to_string(n) + " elements (" + std::to_string(expected) + " bytes)",
                      payload_at + std::min(present, expected));
  }
  std::vector<Real> data(n);
  const std::uint8_t* p = bytes.data() + payload_at;
  for (std::size_t i = 0; i < n; ++i) {
    if (dtype == DType::f32) {
      data[i] = static_cast<Real>(std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i)));
    } else {
      data[i] = static_cast<Real>(std::bit_cast<double>(detail::get_le<std::uint64_t>(p + 8 * i)));
    }
  }
  return Tensor<Real>(std::move(shape), std::move(data));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FileError("write failed for " + path.string());
}

template <typename Real>
void write_tensor(const Tensor<Real>& t, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tensor(t));
}

template <typename Real>
Tensor<Real> read_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor<Real>(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace tcra
