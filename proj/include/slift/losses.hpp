#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "error.hpp"
#include "ops.hpp"

namespace slift {

enum class LossKind {
  dice,
  bce,
  iou,
  masked_l1,
  masked_mse,
  dice_bce,        // dice + bce
  wbce_wiou,       // weighted bce + weighted iou
  masked_mse_l1,   // masked mse + masked l1
};

inline constexpr double kLossSmooth = 1e-6;

inline bool loss_needs_mask(LossKind k) {
  return k == LossKind::masked_l1 || k == LossKind::masked_mse || k == LossKind::masked_mse_l1;
}

// Optional inputs of the loss primitives. `valid_mask` is a binary map
// [1,Y,X] (broadcast over channels) or [C,Y,X]; masked kinds default to all
// pixels valid. `weights` is the per-pixel emphasis map of the weighted kinds
// and defaults to uniform.
template <class T>
struct LossInputs {
  const Tensor<T>* valid_mask = nullptr;
  const Tensor<T>* weights = nullptr;
};

namespace detail {

// Value and gradient w.r.t. the logits of one primitive loss, accumulated in
// double. `pred` is [C,Y,X], `target` the same dims.
struct LossEval {
  double value = 0.0;
  std::vector<double> grad;
};

template <class T>
std::vector<double> expand_map(const Tensor<T>* map, const Dims& d, double fallback, const char* what) {
  const std::size_t C = d[0], plane = d[1] * d[2];
  std::vector<double> out(C * plane, fallback);
  if (!map) return out;
  const auto& md = map->dims();
  const bool broadcast = md == Dims{1, d[1], d[2]};
  if (!broadcast && md != d) throw ShapeError(std::string(what) + " dims " + dims_str(md) + " incompatible with " + dims_str(d));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = static_cast<double>((*map)[(broadcast ? 0 : c * plane) + i]);
  return out;
}

// Soft dice / IoU are evaluated per channel and averaged over channels.
inline LossEval soft_overlap(const std::vector<double>& logits, const std::vector<double>& target,
                             const std::vector<double>& w, std::size_t C, bool iou) {
  const std::size_t n = logits.size(), plane = n / C;
  LossEval r;
  r.grad.assign(n, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double inter = 0, sp = 0, sq = 0;
    std::vector<double> p(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t j = c * plane + i;
      p[i] = stable_sigmoid(logits[j]);
      inter += w[j] * p[i] * target[j];
      sp += w[j] * p[i];
      sq += w[j] * target[j];
    }
    const double e = kLossSmooth;
    double value = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t j = c * plane + i;
      double dp = 0;
      if (iou) {
        const double u = sp + sq - inter + e;
        dp = -(w[j] * target[j] * u - (inter + e) * w[j] * (1.0 - target[j])) / (u * u);
      } else {
        const double s = sp + sq + e;
        dp = -(2.0 * w[j] * target[j] * s - (2.0 * inter + e) * w[j]) / (s * s);
      }
      r.grad[j] = dp * p[i] * (1.0 - p[i]) / static_cast<double>(C);
    }
    value = iou ? 1.0 - (inter + e) / (sp + sq - inter + e) : 1.0 - (2.0 * inter + e) / (sp + sq + e);
    r.value += value / static_cast<double>(C);
  }
  return r;
}

// Mean of max(l,0) - l*q + log(1 + exp(-|l|)), weighted.
inline LossEval bce_logits(const std::vector<double>& logits, const std::vector<double>& target,
                           const std::vector<double>& w) {
  LossEval r;
  r.grad.assign(logits.size(), 0.0);
  double wsum = 0;
  for (double v : w) wsum += v;
  if (!(wsum > 0)) throw InvalidMaskError("bce: weights sum to zero");
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double l = logits[i], q = target[i];
    r.value += w[i] * (std::max(l, 0.0) - l * q + std::log1p(std::exp(-std::abs(l))));
    r.grad[i] = w[i] * (stable_sigmoid(l) - q) / wsum;
  }
  r.value /= wsum;
  return r;
}

inline LossEval masked_error(const std::vector<double>& pred, const std::vector<double>& target,
                             const std::vector<double>& mask, bool squared) {
  double count = 0;
  for (double v : mask) {
    if (v != 0.0 && v != 1.0) throw InvalidMaskError("masked loss: valid mask must be binary");
    count += v;
  }
  if (count < 1) throw InvalidMaskError("masked loss: no valid pixels");
  LossEval r;
  r.grad.assign(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double d = pred[i] - target[i];
    r.value += squared ? d * d : std::abs(d);
    r.grad[i] = (squared ? 2.0 * d : (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0))) / count;
  }
  r.value /= count;
  return r;
}

inline void add_into(LossEval& acc, const LossEval& x) {
  acc.value += x.value;
  if (acc.grad.empty()) acc.grad.assign(x.grad.size(), 0.0);
  for (std::size_t i = 0; i < x.grad.size(); ++i) acc.grad[i] += x.grad[i];
}

template <class T>
LossEval evaluate_loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target, const LossInputs<T>& in) {
  const auto& d = pred.dims();
  if (d.size() != 3) throw ShapeError("loss: prediction must be [C,Y,X], got " + dims_str(d));
  if (target.dims() != d) throw ShapeError("loss: target dims " + dims_str(target.dims()) + " vs prediction " + dims_str(d));
  std::vector<double> l(pred.numel()), q(target.numel());
  for (std::size_t i = 0; i < l.size(); ++i) {
    l[i] = static_cast<double>(pred[i]);
    q[i] = static_cast<double>(target[i]);
  }
  const std::size_t C = d[0];
  auto ones = std::vector<double>(l.size(), 1.0);
  LossEval acc;
  switch (kind) {
    case LossKind::dice: return soft_overlap(l, q, ones, C, false);
    case LossKind::bce: return bce_logits(l, q, ones);
    case LossKind::iou: return soft_overlap(l, q, ones, C, true);
    case LossKind::masked_l1:
      return masked_error(l, q, expand_map(in.valid_mask, d, 1.0, "valid mask"), false);
    case LossKind::masked_mse:
      return masked_error(l, q, expand_map(in.valid_mask, d, 1.0, "valid mask"), true);
    case LossKind::dice_bce:
      add_into(acc, soft_overlap(l, q, ones, C, false));
      add_into(acc, bce_logits(l, q, ones));
      return acc;
    case LossKind::wbce_wiou: {
      const auto w = expand_map(in.weights, d, 1.0, "weight map");
      add_into(acc, bce_logits(l, q, w));
      add_into(acc, soft_overlap(l, q, w, C, true));
      return acc;
    }
    case LossKind::masked_mse_l1: {
      const auto m = expand_map(in.valid_mask, d, 1.0, "valid mask");
      add_into(acc, masked_error(l, q, m, true));
      add_into(acc, masked_error(l, q, m, false));
      return acc;
    }
  }
  throw ConfigError("unknown loss kind");
}

}  // namespace detail

// Scalar loss of one prediction slice [C,Y,X] (logits, or raw values for the
// masked regression kinds) against its target.
template <class T>
Var<T> loss_primitive(LossKind kind, const Var<T>& pred, const Tensor<T>& target, const LossInputs<T>& in = {}) {
  auto ev = detail::evaluate_loss(kind, pred.value(), target, in);
  if (!std::isfinite(ev.value)) throw NumericError("loss evaluated to a non-finite value");
  return make_result<T>("loss", Tensor<T>::scalar(static_cast<T>(ev.value)), {pred},
                        [grad = std::move(ev.grad)](Node<T>& self) {
                          auto& p = *self.parents[0];
                          Tensor<T> g(p.value.dims());
                          const double up = static_cast<double>(self.grad[0]);
                          for (std::size_t i = 0; i < g.numel(); ++i) g[i] = static_cast<T>(grad[i] * up);
                          p.accumulate(std::move(g));
                        });
}

template <class T>
struct SliceLoss {
  Var<T> total;                    // mean over slices
  std::vector<Var<T>> per_slice;   // one scalar per z
  std::vector<double> values() const {
    std::vector<double> v;
    for (const auto& s : per_slice) v.push_back(static_cast<double>(s.value()[0]));
    return v;
  }
};

// Dense slice supervision for sample n of a batch [N,C,m,Y,X]: every slice is
// scored against the same (un-replicated) target [C,Y,X].
template <class T>
SliceLoss<T> slice_loss(const Var<T>& logits, std::size_t n, const Tensor<T>& target, LossKind kind,
                        const LossInputs<T>& in = {}) {
  const auto& d = logits.dims();
  if (d.size() != 5) throw ShapeError("slice_loss: logits must be [N,C,m,Y,X], got " + dims_str(d));
  if (target.dims() != Dims{d[1], d[3], d[4]})
    throw ShapeError("slice_loss: target dims " + dims_str(target.dims()) + " do not match logits " + dims_str(d));
  SliceLoss<T> out;
  for (std::size_t z = 0; z < d[2]; ++z) out.per_slice.push_back(loss_primitive(kind, take_slice(logits, n, z), target, in));
  out.total = mean(stack_scalars(out.per_slice));
  return out;
}

// Single-sample form on [C,m,Y,X] logits.
template <class T>
SliceLoss<T> slice_loss(const Var<T>& logits4, const Tensor<T>& target, LossKind kind, const LossInputs<T>& in = {}) {
  const auto& d = logits4.dims();
  if (d.size() != 4) throw ShapeError("slice_loss: logits must be [C,m,Y,X], got " + dims_str(d));
  return slice_loss(reshape(logits4, Dims{1, d[0], d[1], d[2], d[3]}), 0, target, kind, in);
}

}  // namespace slift
