#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "conv.hpp"
#include "tensor.hpp"

namespace slift {

namespace detail {

inline void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": operand dims " + dims_str(a) + " vs " + dims_str(b));
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace detail

using detail::stable_sigmoid;

// ---------------------------------------------------------------------------
// elementwise

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > 0 ? v : T{0};
  return make_result<T>("relu", std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    Tensor<T> g = self.grad;
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (!(p.value[i] > 0)) g[i] = 0;
    p.accumulate(std::move(g));
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(0.01)) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > 0 ? v : slope * v;
  return make_result<T>("leaky_relu", std::move(out), {x}, [slope](Node<T>& self) {
    auto& p = *self.parents[0];
    Tensor<T> g = self.grad;
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (!(p.value[i] > 0)) g[i] *= slope;
    p.accumulate(std::move(g));
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = stable_sigmoid(v);
  return make_result<T>("sigmoid", std::move(out), {x}, [](Node<T>& self) {
    Tensor<T> g = self.grad;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= self.value[i] * (T{1} - self.value[i]);
    self.parents[0]->accumulate(std::move(g));
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_dims(a.dims(), b.dims(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return make_result<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    // Same node on both sides (x + x) still accumulates twice.
    self.parents[0]->accumulate(Tensor<T>(self.grad));
    self.parents[1]->accumulate(Tensor<T>(self.grad));
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_dims(a.dims(), b.dims(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_result<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
    self.parents[0]->accumulate(Tensor<T>(self.grad));
    Tensor<T> g = self.grad;
    for (auto& v : g.data()) v = -v;
    self.parents[1]->accumulate(std::move(g));
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_dims(a.dims(), b.dims(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor<T> g = self.grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= pb.value[i];
      pa.accumulate(std::move(g));
    }
    if (pb.requires_grad) {
      Tensor<T> g = self.grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= pa.value[i];
      pb.accumulate(std::move(g));
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v *= factor;
  return make_result<T>("scale", std::move(out), {x}, [factor](Node<T>& self) {
    Tensor<T> g = self.grad;
    for (auto& v : g.data()) v *= factor;
    self.parents[0]->accumulate(std::move(g));
  });
}

enum class Elementwise { relu, leaky_relu, sigmoid, add, mul, scale };

// Dispatch form of the elementwise family; `factor` is the scale factor or the
// leaky slope, `b` the second operand of binary kinds.
template <class T>
Var<T> elementwise(Elementwise kind, const Var<T>& a, const Var<T>& b = {}, T factor = T(0.01)) {
  switch (kind) {
    case Elementwise::relu: return relu(a);
    case Elementwise::leaky_relu: return leaky_relu(a, factor);
    case Elementwise::sigmoid: return sigmoid(a);
    case Elementwise::add:
      if (!b) throw ShapeError("add needs two operands");
      return add(a, b);
    case Elementwise::mul:
      if (!b) throw ShapeError("mul needs two operands");
      return mul(a, b);
    case Elementwise::scale: return scale(a, factor);
  }
  throw ConfigError("unknown elementwise kind");
}

// ---------------------------------------------------------------------------
// reductions

enum class Reduce { sum, mean, max };

namespace detail {

struct ReducePlan {
  Dims out_dims;
  std::vector<std::size_t> out_index;  // input flat index -> output flat index
  std::size_t count = 1;               // elements folded into each output
};

inline ReducePlan plan_reduce(const Dims& in, const std::vector<std::size_t>& axes) {
  std::vector<bool> reduced(in.size(), false);
  for (auto a : axes) {
    if (a >= in.size()) throw AxisError("reduce: axis " + std::to_string(a) + " out of range for " + dims_str(in));
    if (reduced[a]) throw AxisError("reduce: duplicate axis " + std::to_string(a));
    reduced[a] = true;
  }
  ReducePlan plan;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (reduced[i]) plan.count *= in[i];
    else plan.out_dims.push_back(in[i]);
  }
  const std::size_t n = dims_numel(in);
  plan.out_index.resize(n);
  std::vector<std::size_t> idx(in.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < in.size(); ++i)
      if (!reduced[i]) o = o * in[i] + idx[i];
    plan.out_index[flat] = o;
    for (std::size_t i = in.size(); i-- > 0;) {
      if (++idx[i] < in[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

}  // namespace detail

// Reduced axes are removed from the result. `max` routes its gradient to the
// first maximal element in row-major order.
template <class T>
Var<T> reduce(Reduce kind, const Var<T>& x, std::vector<std::size_t> axes) {
  auto plan = detail::plan_reduce(x.dims(), axes);
  const auto& v = x.value();
  Tensor<T> out(plan.out_dims);
  std::vector<std::size_t> argmax;
  if (kind == Reduce::max) {
    argmax.assign(out.numel(), static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < v.numel(); ++i) {
      const auto o = plan.out_index[i];
      if (argmax[o] == static_cast<std::size_t>(-1) || v[i] > out[o]) {
        out[o] = v[i];
        argmax[o] = i;
      }
    }
  } else {
    for (std::size_t i = 0; i < v.numel(); ++i) out[plan.out_index[i]] += v[i];
    if (kind == Reduce::mean)
      for (auto& e : out.data()) e /= static_cast<T>(plan.count);
  }
  const char* name = kind == Reduce::sum ? "sum" : kind == Reduce::mean ? "mean" : "max";
  return make_result<T>(name, std::move(out), {x},
                        [kind, plan = std::move(plan), argmax = std::move(argmax)](Node<T>& self) {
                          auto& p = *self.parents[0];
                          Tensor<T> g(p.value.dims());
                          if (kind == Reduce::max) {
                            for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] = self.grad[o];
                          } else {
                            const T f = kind == Reduce::mean ? T{1} / static_cast<T>(plan.count) : T{1};
                            for (std::size_t i = 0; i < g.numel(); ++i) g[i] = self.grad[plan.out_index[i]] * f;
                          }
                          p.accumulate(std::move(g));
                        });
}

template <class T>
std::vector<std::size_t> all_axes(const Var<T>& x) {
  std::vector<std::size_t> a(x.dims().size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = i;
  return a;
}

template <class T>
Var<T> sum(const Var<T>& x) {
  return reduce(Reduce::sum, x, all_axes(x));
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return reduce(Reduce::mean, x, all_axes(x));
}

// ---------------------------------------------------------------------------
// instance normalization

// Per (sample, channel) normalization over (z, y, x) with population variance,
// followed by the affine map gain * xhat + shift.
template <class T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& shift, T eps = T(1e-5)) {
  const auto& d = x.dims();
  if (d.size() != 5) throw ShapeError("instance_norm: input must be [N,C,Z,Y,X], got " + dims_str(d));
  const std::size_t N = d[0], C = d[1], vol = d[2] * d[3] * d[4];
  if (vol < 2) throw DegenerateNormError("instance_norm: spatial volume must be >= 2, got " + dims_str(d));
  if (gain.dims() != Dims{C} || shift.dims() != Dims{C})
    throw ShapeError("instance_norm: gain/shift must be [C]");

  Tensor<T> out(d);
  Tensor<T> xhat(d);
  std::vector<T> inv_std(N * C);
  const auto& xv = x.value();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * vol;
      const T* src = xv.ptr() + base;
      T mu = 0;
      for (std::size_t i = 0; i < vol; ++i) mu += src[i];
      mu /= static_cast<T>(vol);
      T var = 0;
      for (std::size_t i = 0; i < vol; ++i) var += (src[i] - mu) * (src[i] - mu);
      var /= static_cast<T>(vol);
      const T is = T{1} / std::sqrt(var + eps);
      inv_std[n * C + c] = is;
      const T gn = gain.value()[c], sh = shift.value()[c];
      for (std::size_t i = 0; i < vol; ++i) {
        const T h = (src[i] - mu) * is;
        xhat[base + i] = h;
        out[base + i] = gn * h + sh;
      }
    }

  return make_result<T>(
      "instance_norm", std::move(out), {x, gain, shift},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), N, C, vol](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& ps = *self.parents[2];
        const auto& g = self.grad;
        Tensor<T> gx(px.requires_grad ? px.value.dims() : Dims{1});
        Tensor<T> gg(Dims{C}), gs(Dims{C});
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * vol;
            T sum_g = 0, sum_gh = 0;
            for (std::size_t i = 0; i < vol; ++i) {
              sum_g += g[base + i];
              sum_gh += g[base + i] * xhat[base + i];
            }
            gs[c] += sum_g;
            gg[c] += sum_gh;
            if (px.requires_grad) {
              const T k = pg.value[c] * inv_std[n * C + c];
              const T mg = sum_g / static_cast<T>(vol), mgh = sum_gh / static_cast<T>(vol);
              for (std::size_t i = 0; i < vol; ++i) gx[base + i] = k * (g[base + i] - mg - xhat[base + i] * mgh);
            }
          }
        if (px.requires_grad) px.accumulate(std::move(gx));
        pg.accumulate(std::move(gg));
        ps.accumulate(std::move(gs));
      });
}

// ---------------------------------------------------------------------------
// structural

// Concatenate along the channel axis of [N,C,...] tensors.
template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& da = a.dims();
  const auto& db = b.dims();
  if (da.size() < 2 || da.size() != db.size() || da[0] != db[0] ||
      !std::equal(da.begin() + 2, da.end(), db.begin() + 2))
    throw ShapeError("concat_channels: " + dims_str(da) + " vs " + dims_str(db));
  const std::size_t N = da[0], Ca = da[1], Cb = db[1];
  const std::size_t vol = dims_numel(da) / (N * Ca);
  Dims od = da;
  od[1] = Ca + Cb;
  Tensor<T> out(od);
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a.value().ptr() + n * Ca * vol, Ca * vol, out.ptr() + n * (Ca + Cb) * vol);
    std::copy_n(b.value().ptr() + n * Cb * vol, Cb * vol, out.ptr() + (n * (Ca + Cb) + Ca) * vol);
  }
  return make_result<T>("concat", std::move(out), {a, b}, [N, Ca, Cb, vol](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor<T> g(pa.value.dims());
      for (std::size_t n = 0; n < N; ++n)
        std::copy_n(self.grad.ptr() + n * (Ca + Cb) * vol, Ca * vol, g.ptr() + n * Ca * vol);
      pa.accumulate(std::move(g));
    }
    if (pb.requires_grad) {
      Tensor<T> g(pb.value.dims());
      for (std::size_t n = 0; n < N; ++n)
        std::copy_n(self.grad.ptr() + (n * (Ca + Cb) + Ca) * vol, Cb * vol, g.ptr() + n * Cb * vol);
      pb.accumulate(std::move(g));
    }
  });
}

// x[n, :, z, :, :] of a [N,C,Z,Y,X] tensor as a [C,Y,X] tensor.
template <class T>
Var<T> take_slice(const Var<T>& x, std::size_t n, std::size_t z) {
  const auto& d = x.dims();
  if (d.size() != 5) throw ShapeError("take_slice: input must be [N,C,Z,Y,X], got " + dims_str(d));
  if (n >= d[0] || z >= d[2]) throw AxisError("take_slice: index out of range");
  const std::size_t C = d[1], Z = d[2], plane = d[3] * d[4];
  Tensor<T> out(Dims{C, d[3], d[4]});
  for (std::size_t c = 0; c < C; ++c)
    std::copy_n(x.value().ptr() + ((n * C + c) * Z + z) * plane, plane, out.ptr() + c * plane);
  return make_result<T>("take_slice", std::move(out), {x}, [n, z, C, Z, plane](Node<T>& self) {
    auto& p = *self.parents[0];
    Tensor<T> g(p.value.dims());
    for (std::size_t c = 0; c < C; ++c)
      std::copy_n(self.grad.ptr() + c * plane, plane, g.ptr() + ((n * C + c) * Z + z) * plane);
    p.accumulate(std::move(g));
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, Dims dims) {
  Tensor<T> out = x.value().reshaped(std::move(dims));
  return make_result<T>("reshape", std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    p.accumulate(self.grad.reshaped(p.value.dims()));
  });
}

// Stack scalar variables into a vector [k].
template <class T>
Var<T> stack_scalars(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("stack_scalars: empty input");
  Tensor<T> out(Dims{xs.size()});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].value().numel() != 1) throw ShapeError("stack_scalars: element is not a scalar");
    out[i] = xs[i].value()[0];
  }
  return make_result<T>("stack", std::move(out), xs, [](Node<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      self.parents[i]->accumulate(Tensor<T>(self.parents[i]->value.dims(), self.grad[i]));
  });
}

}  // namespace slift
