#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "error.hpp"

namespace slift {

using Dims = std::vector<std::size_t>;

inline std::string dims_str(const Dims& d) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "," : "") << d[i];
  os << ']';
  return os.str();
}

inline std::size_t dims_numel(const Dims& d) {
  return std::accumulate(d.begin(), d.end(), std::size_t{1}, std::multiplies<>{});
}

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else {
    static_assert(std::is_same_v<T, std::uint8_t>, "unsupported tensor element type");
    return DType::u8;
  }
}

// Dense row-major array, last dimension fastest. Activations use the layout
// [batch, channel, z, y, x] where z is the lifted axis.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Dims dims, T fill = T{}) : dims_(std::move(dims)) {
    check_extents();
    data_.assign(dims_numel(dims_), fill);
  }

  Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != dims_numel(dims_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                       dims_str(dims_));
  }

  static Tensor scalar(T v) { return Tensor(Dims{}, std::vector<T>{v}); }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <class... I>
  T& at(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... I>
  const T& at(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  T item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor with dims " + dims_str(dims_));
    return data_[0];
  }

  Dims strides() const {
    Dims s(dims_.size(), 1);
    for (std::size_t i = dims_.size(); i-- > 1;) s[i - 1] = s[i] * dims_[i];
    return s;
  }

  Tensor reshaped(Dims nd) const {
    if (dims_numel(nd) != numel())
      throw ShapeError("cannot reshape " + dims_str(dims_) + " to " + dims_str(nd));
    return Tensor(std::move(nd), data_);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(dims_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    if constexpr (std::is_floating_point_v<T>)
      return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    else
      return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

 private:
  void check_extents() const {
    for (auto e : dims_)
      if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + dims_str(dims_));
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != dims_.size()) throw AxisError("index rank does not match tensor rank");
    std::size_t off = 0;
    std::size_t i = 0;
    for (auto v : idx) {
      if (v >= dims_[i]) throw AxisError("index out of range on axis " + std::to_string(i));
      off = off * dims_[i] + v;
      ++i;
    }
    return off;
  }

  Dims dims_;
  std::vector<T> data_;
};

// Bitwise comparison, so NaN payloads and signed zeros count.
template <class T>
bool bit_identical(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims()) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), [](T x, T y) {
    return std::memcmp(&x, &y, sizeof(T)) == 0;
  });
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims()) throw ShapeError("max_abs_diff: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  T m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max<T>(m, std::abs(a[i] - b[i]));
  return m;
}

template <class T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims()) throw ShapeError("dot: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  T s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

template <class T, class Gen>
Tensor<T> random_tensor(Dims dims, Gen& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(dims));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace slift
