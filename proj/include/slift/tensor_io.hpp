#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace slift {

// SLT1 layout, all integers little-endian:
//   0..3   magic "SLT1"
//   4      dtype (0 = f32, 1 = f64, 2 = u8)
//   5      ndim
//   6..7   reserved, zero
//   8..    ndim x u64 extents
//   ...    payload, row-major
using Bytes = std::vector<std::uint8_t>;
using AnyTensor = std::variant<Tensor<float>, Tensor<double>, Tensor<std::uint8_t>>;

namespace detail {

inline void put_le(Bytes& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(const std::uint8_t* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

template <class T>
void put_value(Bytes& out, T v) {
  if constexpr (sizeof(T) == 1) {
    out.push_back(static_cast<std::uint8_t>(v));
  } else if constexpr (sizeof(T) == 4) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_le(out, u, 4);
  } else {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    put_le(out, u, 8);
  }
}

template <class T>
T get_value(const std::uint8_t* p) {
  T v;
  if constexpr (sizeof(T) == 1) {
    v = static_cast<T>(p[0]);
  } else if constexpr (sizeof(T) == 4) {
    const auto u = static_cast<std::uint32_t>(get_le(p, 4));
    std::memcpy(&v, &u, 4);
  } else {
    const auto u = get_le(p, 8);
    std::memcpy(&v, &u, 8);
  }
  return v;
}

template <class T>
Tensor<T> decode_payload(const std::uint8_t* p, const Dims& dims) {
  std::vector<T> data(dims_numel(dims));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_value<T>(p + i * sizeof(T));
  return Tensor<T>(dims, std::move(data));
}

inline std::size_t dtype_size(std::uint8_t code) { return code == 0 ? 4 : code == 1 ? 8 : 1; }

}  // namespace detail

template <class T>
Bytes encode_tensor(const Tensor<T>& t) {
  if (t.rank() > 255) throw ShapeError("SLT1 supports at most 255 dimensions");
  Bytes out{'S', 'L', 'T', '1', static_cast<std::uint8_t>(dtype_of<T>()), static_cast<std::uint8_t>(t.rank()), 0, 0};
  out.reserve(8 + 8 * t.rank() + t.numel() * sizeof(T));
  for (auto e : t.dims()) detail::put_le(out, e, 8);
  for (auto v : t.data()) detail::put_value(out, v);
  return out;
}

// Parses one SLT1 record starting at `offset` and advances it past the record.
// Nothing is returned on error; the exception carries the failing byte offset.
inline AnyTensor decode_tensor(const std::uint8_t* data, std::size_t size, std::size_t& offset) {
  const std::size_t start = offset;
  if (start > size || size - start < 8) throw FormatError("SLT1: truncated header", size);
  const std::uint8_t* p = data + start;
  if (std::memcmp(p, "SLT1", 4) != 0) throw FormatError("SLT1: bad magic", start);
  const std::uint8_t code = p[4];
  if (code > 2) throw FormatError("SLT1: unknown dtype " + std::to_string(code), start + 4);
  const std::size_t ndim = p[5];
  if (p[6] != 0 || p[7] != 0) throw FormatError("SLT1: reserved bytes must be zero", start + 6);
  if (size - start < 8 + 8 * ndim) throw FormatError("SLT1: truncated extents", size);
  Dims dims(ndim);
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const auto e = detail::get_le(p + 8 + 8 * i, 8);
    if (e == 0) throw FormatError("SLT1: zero extent", start + 8 + 8 * i);
    if (e > (std::uint64_t{1} << 40) || count > (std::size_t{1} << 40) / e)
      throw FormatError("SLT1: implausible extent", start + 8 + 8 * i);
    dims[i] = static_cast<std::size_t>(e);
    count *= dims[i];
  }
  const std::size_t header = 8 + 8 * ndim;
  const std::size_t payload = count * detail::dtype_size(code);
  if (size - start - header < payload) throw FormatError("SLT1: truncated payload", size);
  const std::uint8_t* body = p + header;
  offset = start + header + payload;
  switch (code) {
    case 0: return detail::decode_payload<float>(body, dims);
    case 1: return detail::decode_payload<double>(body, dims);
    default: return detail::decode_payload<std::uint8_t>(body, dims);
  }
}

inline AnyTensor decode_tensor(const Bytes& bytes) {
  std::size_t off = 0;
  auto t = decode_tensor(bytes.data(), bytes.size(), off);
  if (off != bytes.size()) throw FormatError("SLT1: trailing bytes", off);
  return t;
}

template <class T>
Tensor<T> expect_dtype(AnyTensor any, const std::string& what) {
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  throw FormatError(what + ": unexpected dtype", 4);
}

// Element-converting view of any stored dtype.
template <class T>
Tensor<T> as_dtype(const AnyTensor& any) {
  return std::visit([](const auto& t) { return t.template cast<T>(); }, any);
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Write to a sibling temp file, then rename over the destination.
inline void write_file_atomic(const std::filesystem::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <class T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  write_file_atomic(path, encode_tensor(t));
}

inline AnyTensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

}  // namespace slift
