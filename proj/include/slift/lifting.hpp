#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "error.hpp"
#include "ops.hpp"
#include "tensor.hpp"

namespace slift {

// Per-slice average losses and the s lowest-loss slices chosen from them.
// Indices are 0-based; reports render them 1-based.
struct SliceStats {
  std::vector<double> per_slice_loss;
  std::vector<std::size_t> selected;  // ascending
  std::size_t s = 0;

  std::vector<std::size_t> unselected() const {
    std::vector<std::size_t> out;
    for (std::size_t z = 0; z < per_slice_loss.size(); ++z)
      if (!std::binary_search(selected.begin(), selected.end(), z)) out.push_back(z);
    return out;
  }
};

// [C,Y,X] -> [C,m,Y,X], every z-slice a copy of the input.
template <class T>
Tensor<T> lift(const Tensor<T>& image, std::size_t m) {
  if (m < 1) throw ConfigError("lift: depth m must be >= 1");
  const auto& d = image.dims();
  if (d.size() != 3) throw ShapeError("lift: image must be [C,Y,X], got " + dims_str(d));
  const std::size_t C = d[0], plane = d[1] * d[2];
  Tensor<T> out(Dims{C, m, d[1], d[2]});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t z = 0; z < m; ++z)
      std::copy_n(image.ptr() + c * plane, plane, out.ptr() + (c * m + z) * plane);
  return out;
}

// The target is replicated exactly like the input.
template <class T>
Tensor<T> replicate_target(const Tensor<T>& target, std::size_t m) {
  return lift(target, m);
}

// Stack lifted [C,m,Y,X] samples into a network batch [N,C,m,Y,X].
template <class T>
Tensor<T> batch_of(const std::vector<Tensor<T>>& items) {
  if (items.empty()) throw ShapeError("batch_of: empty batch");
  const Dims& d0 = items[0].dims();
  Dims d{items.size()};
  d.insert(d.end(), d0.begin(), d0.end());
  Tensor<T> out(d);
  const std::size_t per = items[0].numel();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].dims() != d0) throw ShapeError("batch_of: mixed geometries in batch");
    std::copy_n(items[i].ptr(), per, out.ptr() + i * per);
  }
  return out;
}

// Slice z of a [C,m,Y,X] tensor as [C,Y,X].
template <class T>
Tensor<T> slice_at(const Tensor<T>& t, std::size_t z) {
  const auto& d = t.dims();
  if (d.size() != 4) throw ShapeError("slice_at: expected [C,m,Y,X], got " + dims_str(d));
  if (z >= d[1]) throw AxisError("slice_at: slice " + std::to_string(z) + " out of range");
  const std::size_t plane = d[2] * d[3];
  Tensor<T> out(Dims{d[0], d[2], d[3]});
  for (std::size_t c = 0; c < d[0]; ++c) std::copy_n(t.ptr() + (c * d[1] + z) * plane, plane, out.ptr() + c * plane);
  return out;
}

// The s indices of smallest loss, ties to the lower index, returned ascending.
inline SliceStats select_slices(std::vector<double> per_slice_loss, std::size_t s) {
  const std::size_t m = per_slice_loss.size();
  if (s < 1) throw ConfigError("select_slices: s must be >= 1");
  if (s > m) throw ConfigError("select_slices: s = " + std::to_string(s) + " exceeds m = " + std::to_string(m));
  for (std::size_t z = 0; z < m; ++z)
    if (!std::isfinite(per_slice_loss[z])) throw NumericError("select_slices: non-finite loss at slice " + std::to_string(z));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return per_slice_loss[a] < per_slice_loss[b]; });
  SliceStats st;
  st.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(s));
  std::sort(st.selected.begin(), st.selected.end());
  st.per_slice_loss = std::move(per_slice_loss);
  st.s = s;
  return st;
}

// sigmoid: binary / multi-label. softmax: exclusive classes over C_out.
// mean: regression heads, where the selected slices are averaged instead of
// summed and no activation is applied.
enum class Fusion { sigmoid, softmax, mean };

inline void check_selection(const std::vector<std::size_t>& selected, std::size_t m) {
  if (selected.empty()) throw ConfigError("fuse_slices: empty selection");
  std::vector<std::size_t> sorted = selected;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("fuse_slices: duplicate slice index");
  if (sorted.back() >= m) throw ConfigError("fuse_slices: slice index out of range");
}

// logits [Cout,m,Y,X] -> activation(sum of the selected slices) as [Cout,Y,X].
// The sum runs in ascending slice order regardless of the order given.
template <class T>
Tensor<T> fuse_slices(const Tensor<T>& logits, const std::vector<std::size_t>& selected, Fusion mode = Fusion::sigmoid) {
  const auto& d = logits.dims();
  if (d.size() != 4) throw ShapeError("fuse_slices: logits must be [Cout,m,Y,X], got " + dims_str(d));
  check_selection(selected, d[1]);
  std::vector<std::size_t> sel = selected;
  std::sort(sel.begin(), sel.end());
  const std::size_t C = d[0], m = d[1], plane = d[2] * d[3];
  Tensor<T> out(Dims{C, d[2], d[3]});
  for (std::size_t c = 0; c < C; ++c)
    for (auto z : sel) {
      const T* src = logits.ptr() + (c * m + z) * plane;
      T* dst = out.ptr() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  switch (mode) {
    case Fusion::sigmoid:
      for (auto& v : out.data()) v = stable_sigmoid(v);
      break;
    case Fusion::softmax:
      for (std::size_t i = 0; i < plane; ++i) {
        T mx = out[i];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, out[c * plane + i]);
        T z = 0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(out[c * plane + i] - mx);
        for (std::size_t c = 0; c < C; ++c) out[c * plane + i] = std::exp(out[c * plane + i] - mx) / z;
      }
      break;
    case Fusion::mean:
      for (auto& v : out.data()) v /= static_cast<T>(sel.size());
      break;
  }
  return out;
}

// probs [Cout,Y,X] -> labels [Y,X]. Cout >= 2: argmax with ties to the lower
// class. Cout == 1: class 1 iff probability > 0.5.
template <class T>
Tensor<std::uint8_t> decode_segmentation(const Tensor<T>& probs) {
  const auto& d = probs.dims();
  if (d.size() != 3) throw ShapeError("decode_segmentation: probs must be [Cout,Y,X], got " + dims_str(d));
  const std::size_t C = d[0], plane = d[1] * d[2];
  if (C > 255) throw ShapeError("decode_segmentation: at most 255 classes");
  Tensor<std::uint8_t> out(Dims{d[1], d[2]});
  for (std::size_t i = 0; i < plane; ++i) {
    if (C == 1) {
      out[i] = probs[i] > T(0.5) ? 1 : 0;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (probs[c * plane + i] > probs[best * plane + i]) best = c;
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace slift
