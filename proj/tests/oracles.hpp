#pragma once

// Straightforward reference implementations used as test oracles. They share
// no code with the library kernels.

#include <cmath>
#include <cstddef>
#include <vector>

#include "slift/conv.hpp"
#include "slift/rng.hpp"
#include "slift/tensor.hpp"

namespace oracle {

using slift::ConvParams;
using slift::Dims;
using slift::PadMode;
using slift::Tensor;

// Source index along one axis, or -1 for zero padding.
inline long source(long o, long k, long stride, long pad, long n, PadMode mode) {
  long i = o * stride + k - pad;
  if (mode == PadMode::circular) return ((i % n) + n) % n;
  return (i < 0 || i >= n) ? -1 : i;
}

// Seven nested loops over (n, co, z, y, x) x (ci, kz, ky, kx), double accumulation.
template <class T>
Tensor<T> conv3d(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias, const ConvParams& p) {
  const auto& d = in.dims();
  const auto& k = w.dims();
  const long Z = (long(d[2]) + 2 * long(p.pad[0]) - long(k[2])) / long(p.stride[0]) + 1;
  const long Y = (long(d[3]) + 2 * long(p.pad[1]) - long(k[3])) / long(p.stride[1]) + 1;
  const long X = (long(d[4]) + 2 * long(p.pad[2]) - long(k[4])) / long(p.stride[2]) + 1;
  Tensor<T> out(Dims{d[0], k[0], std::size_t(Z), std::size_t(Y), std::size_t(X)});
  for (std::size_t n = 0; n < d[0]; ++n)
    for (std::size_t co = 0; co < k[0]; ++co)
      for (long z = 0; z < Z; ++z)
        for (long y = 0; y < Y; ++y)
          for (long x = 0; x < X; ++x) {
            double acc = bias ? double((*bias)[co]) : 0.0;
            for (std::size_t ci = 0; ci < k[1]; ++ci)
              for (long a = 0; a < long(k[2]); ++a)
                for (long b = 0; b < long(k[3]); ++b)
                  for (long c = 0; c < long(k[4]); ++c) {
                    const long iz = source(z, a, p.stride[0], p.pad[0], d[2], p.mode);
                    const long iy = source(y, b, p.stride[1], p.pad[1], d[3], p.mode);
                    const long ix = source(x, c, p.stride[2], p.pad[2], d[4], p.mode);
                    if (iz < 0 || iy < 0 || ix < 0) continue;
                    acc += double(in.at(n, ci, iz, iy, ix)) * double(w.at(co, ci, a, b, c));
                  }
            out.at(n, co, z, y, x) = T(acc);
          }
  return out;
}

// Scatter form: every input element spreads weight-scaled copies onto the
// output positions o = i*stride + k - pad. Weight [Ci,Co,K...].
template <class T>
Tensor<T> transposed_conv3d(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias, const ConvParams& p) {
  const auto& d = in.dims();
  const auto& k = w.dims();
  std::size_t od[3];
  for (int a = 0; a < 3; ++a) od[a] = (d[2 + a] - 1) * p.stride[a] + k[2 + a] - 2 * p.pad[a];
  std::vector<double> acc(d[0] * k[1] * od[0] * od[1] * od[2], 0.0);
  auto at = [&](std::size_t n, std::size_t c, long z, long y, long x) -> double& {
    return acc[(((n * k[1] + c) * od[0] + z) * od[1] + y) * od[2] + x];
  };
  for (std::size_t n = 0; n < d[0]; ++n)
    for (std::size_t ci = 0; ci < d[1]; ++ci)
      for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y < d[3]; ++y)
          for (std::size_t x = 0; x < d[4]; ++x)
            for (std::size_t co = 0; co < k[1]; ++co)
              for (long a = 0; a < long(k[2]); ++a)
                for (long b = 0; b < long(k[3]); ++b)
                  for (long c = 0; c < long(k[4]); ++c) {
                    long oz = long(z * p.stride[0]) + a - long(p.pad[0]);
                    long oy = long(y * p.stride[1]) + b - long(p.pad[1]);
                    long ox = long(x * p.stride[2]) + c - long(p.pad[2]);
                    if (p.mode == PadMode::circular) {
                      oz = ((oz % long(od[0])) + long(od[0])) % long(od[0]);
                      oy = ((oy % long(od[1])) + long(od[1])) % long(od[1]);
                      ox = ((ox % long(od[2])) + long(od[2])) % long(od[2]);
                    }
                    if (oz < 0 || oy < 0 || ox < 0 || oz >= long(od[0]) || oy >= long(od[1]) || ox >= long(od[2]))
                      continue;
                    at(n, co, oz, oy, ox) += double(in.at(n, ci, z, y, x)) * double(w.at(ci, co, a, b, c));
                  }
  Tensor<T> out(Dims{d[0], k[1], od[0], od[1], od[2]});
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = T(acc[i]);
  if (bias) {
    const std::size_t vol = od[0] * od[1] * od[2];
    for (std::size_t n = 0; n < d[0]; ++n)
      for (std::size_t c = 0; c < k[1]; ++c)
        for (std::size_t i = 0; i < vol; ++i) out[(n * k[1] + c) * vol + i] += (*bias)[c];
  }
  return out;
}

// Dense matrix of a linear map given as a function on tensors, built column by
// column from basis vectors: A[r][c] = f(e_c)[r].
template <class F>
std::vector<std::vector<double>> matrix_of(F f, const Dims& in_dims) {
  const std::size_t n = slift::dims_numel(in_dims);
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < n; ++c) {
    Tensor<double> e(in_dims);
    e[c] = 1.0;
    auto y = f(e);
    cols.emplace_back(y.data().begin(), y.data().end());
  }
  std::vector<std::vector<double>> a(cols.empty() ? 0 : cols[0].size(), std::vector<double>(n));
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t r = 0; r < a.size(); ++r) a[r][c] = cols[c][r];
  return a;
}

inline std::vector<double> transpose_apply(const std::vector<std::vector<double>>& a, const std::vector<double>& y) {
  std::vector<double> x(a.empty() ? 0 : a[0].size(), 0.0);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) x[c] += a[r][c] * y[r];
  return x;
}

struct ConvCase {
  Dims in, weight;
  ConvParams p;
};

// Random small conv configuration with every extent <= 5 and an integral
// output extent on each axis.
inline ConvCase random_conv_case(slift::Rng& rng, bool allow_circular = false) {
  ConvCase c;
  const std::size_t n = 1 + rng.below(2), ci = 1 + rng.below(3), co = 1 + rng.below(3);
  std::size_t ext[3];
  for (int a = 0; a < 3; ++a) {
    for (;;) {
      const std::size_t in = 1 + rng.below(5), k = 1 + rng.below(3), s = 1 + rng.below(2), pad = rng.below(2);
      if (in + 2 * pad < k || (in + 2 * pad - k) % s != 0) continue;
      ext[a] = in;
      c.p.kernel[a] = k;
      c.p.stride[a] = s;
      c.p.pad[a] = pad;
      break;
    }
  }
  if (allow_circular && rng.below(2) == 1) {
    // Circular wrap needs pad <= extent.
    bool ok = true;
    for (int a = 0; a < 3; ++a) ok = ok && c.p.pad[a] <= ext[a];
    if (ok) c.p.mode = PadMode::circular;
  }
  c.in = {n, ci, ext[0], ext[1], ext[2]};
  c.weight = {co, ci, c.p.kernel[0], c.p.kernel[1], c.p.kernel[2]};
  return c;
}

// Per (n, c) normalization over (z, y, x), then per-channel affine.
inline Tensor<double> instance_norm(const Tensor<double>& x, const Tensor<double>& gain, const Tensor<double>& shift,
                                    double eps) {
  const auto& d = x.dims();
  const std::size_t vol = d[2] * d[3] * d[4];
  Tensor<double> out(d);
  for (std::size_t n = 0; n < d[0]; ++n)
    for (std::size_t c = 0; c < d[1]; ++c) {
      const double* p = x.ptr() + (n * d[1] + c) * vol;
      double mu = 0, var = 0;
      for (std::size_t i = 0; i < vol; ++i) mu += p[i];
      mu /= double(vol);
      for (std::size_t i = 0; i < vol; ++i) var += (p[i] - mu) * (p[i] - mu);
      var /= double(vol);
      for (std::size_t i = 0; i < vol; ++i)
        out[(n * d[1] + c) * vol + i] = gain[c] * (p[i] - mu) / std::sqrt(var + eps) + shift[c];
    }
  return out;
}

}  // namespace oracle
