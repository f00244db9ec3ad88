#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "tensor.hpp"

namespace slift {

enum class PadMode { zero, circular };

// Kernel/stride/padding per axis, ordered (z, y, x).
struct ConvParams {
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
  PadMode mode = PadMode::zero;

  static ConvParams same(std::array<std::size_t, 3> k) {
    ConvParams p;
    p.kernel = k;
    p.pad = {k[0] / 2, k[1] / 2, k[2] / 2};
    return p;
  }

  bool operator==(const ConvParams&) const = default;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, int axis) {
  if (k == 0 || stride == 0) throw ShapeError("conv: kernel extents and strides must be >= 1");
  const std::size_t span = in + 2 * pad;
  if (span < k) throw ShapeError("conv: kernel larger than padded input on axis " + std::to_string(axis));
  if ((span - k) % stride != 0)
    throw ShapeError("conv: non-integer output extent on axis " + std::to_string(axis) + " (in " + std::to_string(in) +
                     ", pad " + std::to_string(pad) + ", kernel " + std::to_string(k) + ", stride " +
                     std::to_string(stride) + ")");
  return (span - k) / stride + 1;
}

inline std::size_t tconv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, int axis) {
  if (k == 0 || stride == 0) throw ShapeError("transposed conv: kernel extents and strides must be >= 1");
  const std::size_t full = (in - 1) * stride + k;
  if (full < 2 * pad + 1) throw ShapeError("transposed conv: padding removes the whole output on axis " + std::to_string(axis));
  return full - 2 * pad;
}

namespace detail {

// For one axis and one kernel tap: source index for every output index, or -1
// when the tap lands in zero padding.
inline std::vector<long> tap_index(std::size_t out, std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                                   PadMode mode) {
  std::vector<long> idx(out);
  const long n = static_cast<long>(in);
  for (std::size_t o = 0; o < out; ++o) {
    long i = static_cast<long>(o * stride + k) - static_cast<long>(pad);
    if (mode == PadMode::circular) i = ((i % n) + n) % n;
    idx[o] = (i >= 0 && i < n) ? i : -1;
  }
  return idx;
}

struct AxisTaps {
  std::vector<std::vector<long>> z, y, x;
  // x-axis contiguous fast path: stride 1, zero padding.
  bool x_contiguous = false;
};

inline AxisTaps make_taps(const Dims& in5, const Dims& out5, const ConvParams& p) {
  AxisTaps t;
  for (std::size_t k = 0; k < p.kernel[0]; ++k)
    t.z.push_back(tap_index(out5[2], in5[2], k, p.stride[0], p.pad[0], p.mode));
  for (std::size_t k = 0; k < p.kernel[1]; ++k)
    t.y.push_back(tap_index(out5[3], in5[3], k, p.stride[1], p.pad[1], p.mode));
  for (std::size_t k = 0; k < p.kernel[2]; ++k)
    t.x.push_back(tap_index(out5[4], in5[4], k, p.stride[2], p.pad[2], p.mode));
  t.x_contiguous = p.stride[2] == 1 && p.mode == PadMode::zero;
  return t;
}

// Valid output range [lo, hi) for a contiguous x tap, plus the input offset.
struct XRange {
  std::size_t lo, hi;
  long shift;
};

inline XRange x_range(const std::vector<long>& taps) {
  std::size_t lo = 0;
  while (lo < taps.size() && taps[lo] < 0) ++lo;
  std::size_t hi = taps.size();
  while (hi > lo && taps[hi - 1] < 0) --hi;
  const long shift = lo < hi ? taps[lo] - static_cast<long>(lo) : 0;
  return {lo, hi, shift};
}

inline void check_conv_shapes(const Dims& in, const Dims& w, std::size_t in_channel_axis_of_w, const ConvParams& p,
                              const char* what) {
  if (in.size() != 5) throw ShapeError(std::string(what) + ": input must be [N,C,Z,Y,X], got " + dims_str(in));
  if (w.size() != 5) throw ShapeError(std::string(what) + ": weight must be rank 5, got " + dims_str(w));
  if (w[in_channel_axis_of_w] != in[1])
    throw ShapeError(std::string(what) + ": channel mismatch between input " + dims_str(in) + " and weight " +
                     dims_str(w));
  for (int a = 0; a < 3; ++a)
    if (w[2 + a] != p.kernel[a])
      throw ShapeError(std::string(what) + ": weight kernel " + dims_str(w) + " disagrees with params");
}

}  // namespace detail

namespace kernels {

// out[n,co] = bias[co] + sum_{ci,k} w[co,ci,k] * in[n,ci,tap(k)]
template <class T>
void conv_forward(const Tensor<T>& in, const Tensor<T>& w, const T* bias, Tensor<T>& out, const ConvParams& p) {
  const auto& id = in.dims();
  const auto& od = out.dims();
  const std::size_t N = id[0], Ci = id[1], Co = od[1];
  const std::size_t IZ = id[2], IY = id[3], IX = id[4];
  const std::size_t OZ = od[2], OY = od[3], OX = od[4];
  const std::size_t KZ = p.kernel[0], KY = p.kernel[1], KX = p.kernel[2];
  const auto taps = detail::make_taps(id, od, p);
  const std::size_t ivol = IZ * IY * IX, ovol = OZ * OY * OX, kvol = KZ * KY * KX;

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Co; ++co) {
      T* o = out.ptr() + (n * Co + co) * ovol;
      const T b = bias ? bias[co] : T{0};
      for (std::size_t i = 0; i < ovol; ++i) o[i] = b;
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* src = in.ptr() + (n * Ci + ci) * ivol;
        const T* wk = w.ptr() + (co * Ci + ci) * kvol;
        for (std::size_t kz = 0; kz < KZ; ++kz)
          for (std::size_t ky = 0; ky < KY; ++ky)
            for (std::size_t kx = 0; kx < KX; ++kx) {
              const T wv = wk[(kz * KY + ky) * KX + kx];
              const auto& tx = taps.x[kx];
              const auto xr = detail::x_range(tx);
              for (std::size_t oz = 0; oz < OZ; ++oz) {
                const long iz = taps.z[kz][oz];
                if (iz < 0) continue;
                for (std::size_t oy = 0; oy < OY; ++oy) {
                  const long iy = taps.y[ky][oy];
                  if (iy < 0) continue;
                  T* __restrict orow = o + (oz * OY + oy) * OX;
                  const T* __restrict irow = src + (static_cast<std::size_t>(iz) * IY + static_cast<std::size_t>(iy)) * IX;
                  if (taps.x_contiguous) {
                    const T* __restrict s = irow + xr.shift;
                    for (std::size_t ox = xr.lo; ox < xr.hi; ++ox) orow[ox] += wv * s[ox];
                  } else {
                    for (std::size_t ox = 0; ox < OX; ++ox)
                      if (tx[ox] >= 0) orow[ox] += wv * irow[tx[ox]];
                  }
                }
              }
            }
      }
    }
  }
}

// Adjoint of conv_forward in its input: gin[n,ci,tap(k)] += w[co,ci,k] * gout[n,co].
// `gin` must be zero-initialized (or hold values to accumulate onto).
template <class T>
void conv_backward_input(const Tensor<T>& gout, const Tensor<T>& w, Tensor<T>& gin, const ConvParams& p) {
  const auto& id = gin.dims();
  const auto& od = gout.dims();
  const std::size_t N = id[0], Ci = id[1], Co = od[1];
  const std::size_t IY = id[3], IX = id[4];
  const std::size_t OZ = od[2], OY = od[3], OX = od[4];
  const std::size_t KZ = p.kernel[0], KY = p.kernel[1], KX = p.kernel[2];
  const auto taps = detail::make_taps(id, od, p);
  const std::size_t ivol = id[2] * IY * IX, ovol = OZ * OY * OX, kvol = KZ * KY * KX;

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t ci = 0; ci < Ci; ++ci) {
      T* dst = gin.ptr() + (n * Ci + ci) * ivol;
      for (std::size_t co = 0; co < Co; ++co) {
        const T* g = gout.ptr() + (n * Co + co) * ovol;
        const T* wk = w.ptr() + (co * Ci + ci) * kvol;
        for (std::size_t kz = 0; kz < KZ; ++kz)
          for (std::size_t ky = 0; ky < KY; ++ky)
            for (std::size_t kx = 0; kx < KX; ++kx) {
              const T wv = wk[(kz * KY + ky) * KX + kx];
              const auto& tx = taps.x[kx];
              const auto xr = detail::x_range(tx);
              for (std::size_t oz = 0; oz < OZ; ++oz) {
                const long iz = taps.z[kz][oz];
                if (iz < 0) continue;
                for (std::size_t oy = 0; oy < OY; ++oy) {
                  const long iy = taps.y[ky][oy];
                  if (iy < 0) continue;
                  const T* __restrict grow = g + (oz * OY + oy) * OX;
                  T* __restrict drow = dst + (static_cast<std::size_t>(iz) * IY + static_cast<std::size_t>(iy)) * IX;
                  if (taps.x_contiguous) {
                    T* __restrict d = drow + xr.shift;
                    for (std::size_t ox = xr.lo; ox < xr.hi; ++ox) d[ox] += wv * grow[ox];
                  } else {
                    for (std::size_t ox = 0; ox < OX; ++ox)
                      if (tx[ox] >= 0) drow[tx[ox]] += wv * grow[ox];
                  }
                }
              }
            }
      }
    }
  }
}

// gw[co,ci,k] += sum_{n,o} gout[n,co,o] * in[n,ci,tap(k,o)]. Each tap is
// reduced into a per-x accumulator row first, then summed left to right.
template <class T>
void conv_backward_weight(const Tensor<T>& gout, const Tensor<T>& in, Tensor<T>& gw, const ConvParams& p) {
  const auto& id = in.dims();
  const auto& od = gout.dims();
  const std::size_t N = id[0], Ci = id[1], Co = od[1];
  const std::size_t IY = id[3], IX = id[4];
  const std::size_t OZ = od[2], OY = od[3], OX = od[4];
  const std::size_t KZ = p.kernel[0], KY = p.kernel[1], KX = p.kernel[2];
  const auto taps = detail::make_taps(id, od, p);
  const std::size_t ivol = id[2] * IY * IX, ovol = OZ * OY * OX, kvol = KZ * KY * KX;
  std::vector<T> acc(OX);

  for (std::size_t co = 0; co < Co; ++co) {
    for (std::size_t ci = 0; ci < Ci; ++ci) {
      T* wk = gw.ptr() + (co * Ci + ci) * kvol;
      for (std::size_t kz = 0; kz < KZ; ++kz)
        for (std::size_t ky = 0; ky < KY; ++ky)
          for (std::size_t kx = 0; kx < KX; ++kx) {
            std::fill(acc.begin(), acc.end(), T{0});
            const auto& tx = taps.x[kx];
            const auto xr = detail::x_range(tx);
            for (std::size_t n = 0; n < N; ++n) {
              const T* g = gout.ptr() + (n * Co + co) * ovol;
              const T* src = in.ptr() + (n * Ci + ci) * ivol;
              for (std::size_t oz = 0; oz < OZ; ++oz) {
                const long iz = taps.z[kz][oz];
                if (iz < 0) continue;
                for (std::size_t oy = 0; oy < OY; ++oy) {
                  const long iy = taps.y[ky][oy];
                  if (iy < 0) continue;
                  const T* __restrict grow = g + (oz * OY + oy) * OX;
                  const T* __restrict irow = src + (static_cast<std::size_t>(iz) * IY + static_cast<std::size_t>(iy)) * IX;
                  T* __restrict a = acc.data();
                  if (taps.x_contiguous) {
                    const T* __restrict s = irow + xr.shift;
                    for (std::size_t ox = xr.lo; ox < xr.hi; ++ox) a[ox] += grow[ox] * s[ox];
                  } else {
                    for (std::size_t ox = 0; ox < OX; ++ox)
                      if (tx[ox] >= 0) a[ox] += grow[ox] * irow[tx[ox]];
                  }
                }
              }
            }
            T s = 0;
            for (std::size_t ox = 0; ox < OX; ++ox) s += acc[ox];
            wk[(kz * KY + ky) * KX + kx] += s;
          }
    }
  }
}

// gb[c] += sum over batch and volume of g[n,c,...]
template <class T>
void channel_sum(const Tensor<T>& g, Tensor<T>& gb) {
  const auto& d = g.dims();
  const std::size_t N = d[0], C = d[1], vol = d[2] * d[3] * d[4];
  for (std::size_t c = 0; c < C; ++c) {
    T s = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = g.ptr() + (n * C + c) * vol;
      for (std::size_t i = 0; i < vol; ++i) s += p[i];
    }
    gb[c] += s;
  }
}

}  // namespace kernels

// Cross-correlation (no kernel flip). weight [Co,Ci,Kz,Ky,Kx], bias [Co].
template <class T>
Var<T> conv3d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const ConvParams& p) {
  const auto& id = input.dims();
  const auto& wd = weight.dims();
  detail::check_conv_shapes(id, wd, 1, p, "conv3d");
  if (bias && (bias.dims().size() != 1 || bias.dims()[0] != wd[0]))
    throw ShapeError("conv3d: bias must be [Co], got " + dims_str(bias.dims()));
  Dims od{id[0], wd[0], conv_out_extent(id[2], p.kernel[0], p.stride[0], p.pad[0], 0),
          conv_out_extent(id[3], p.kernel[1], p.stride[1], p.pad[1], 1),
          conv_out_extent(id[4], p.kernel[2], p.stride[2], p.pad[2], 2)};
  Tensor<T> out(od);
  kernels::conv_forward(input.value(), weight.value(), bias ? bias.value().ptr() : nullptr, out, p);
  std::vector<Var<T>> inputs{input, weight};
  if (bias) inputs.push_back(bias);
  return make_result<T>("conv3d", std::move(out), inputs, [p](Node<T>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    if (x.requires_grad) {
      Tensor<T> gx(x.value.dims());
      kernels::conv_backward_input(self.grad, w.value, gx, p);
      x.accumulate(std::move(gx));
    }
    if (w.requires_grad) {
      Tensor<T> gw(w.value.dims());
      kernels::conv_backward_weight(self.grad, x.value, gw, p);
      w.accumulate(std::move(gw));
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& b = *self.parents[2];
      Tensor<T> gb(b.value.dims());
      kernels::channel_sum(self.grad, gb);
      b.accumulate(std::move(gb));
    }
  });
}

// Adjoint of conv3d in its input. weight [Ci,Co,Kz,Ky,Kx] (input channels
// first), bias [Co]; out extent = (in - 1) * stride - 2 * pad + K.
template <class T>
Var<T> transposed_conv3d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const ConvParams& p) {
  const auto& id = input.dims();
  const auto& wd = weight.dims();
  detail::check_conv_shapes(id, wd, 0, p, "transposed_conv3d");
  if (bias && (bias.dims().size() != 1 || bias.dims()[0] != wd[1]))
    throw ShapeError("transposed_conv3d: bias must be [Co], got " + dims_str(bias.dims()));
  Dims od{id[0], wd[1], tconv_out_extent(id[2], p.kernel[0], p.stride[0], p.pad[0], 0),
          tconv_out_extent(id[3], p.kernel[1], p.stride[1], p.pad[1], 1),
          tconv_out_extent(id[4], p.kernel[2], p.stride[2], p.pad[2], 2)};
  // The scatter must land exactly on `id`, i.e. od must map back onto id.
  for (int a = 0; a < 3; ++a)
    if (conv_out_extent(od[2 + a], p.kernel[a], p.stride[a], p.pad[a], a) != id[2 + a])
      throw ShapeError("transposed_conv3d: inconsistent shape arithmetic on axis " + std::to_string(a));
  Tensor<T> out(od);
  if (bias) {
    const std::size_t vol = od[2] * od[3] * od[4];
    for (std::size_t n = 0; n < od[0]; ++n)
      for (std::size_t c = 0; c < od[1]; ++c)
        std::fill_n(out.ptr() + (n * od[1] + c) * vol, vol, bias.value()[c]);
  }
  kernels::conv_backward_input(input.value(), weight.value(), out, p);
  std::vector<Var<T>> inputs{input, weight};
  if (bias) inputs.push_back(bias);
  return make_result<T>("transposed_conv3d", std::move(out), inputs, [p](Node<T>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    if (x.requires_grad) {
      Tensor<T> gx(x.value.dims());
      kernels::conv_forward(self.grad, w.value, static_cast<const T*>(nullptr), gx, p);
      x.accumulate(std::move(gx));
    }
    if (w.requires_grad) {
      Tensor<T> gw(w.value.dims());
      kernels::conv_backward_weight(x.value, self.grad, gw, p);
      w.accumulate(std::move(gw));
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& b = *self.parents[2];
      Tensor<T> gb(b.value.dims());
      kernels::channel_sum(self.grad, gb);
      b.accumulate(std::move(gb));
    }
  });
}

}  // namespace slift
