#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "lifting.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "train.hpp"

namespace slift {

struct Prediction {
  Tensor<float> logits;  // [Cout,m,Y,X]
  Tensor<float> fused;   // probabilities, or depth for depth heads, [Cout,Y,X]
};

// Lift, forward without a tape, fuse the selected slices.
inline Prediction predict(const Network<float>& net, const SliceStats& stats, const Tensor<float>& image) {
  const std::size_t m = net.spec().lift_depth;
  auto lifted = lift(image, m);
  Dims d{1};
  d.insert(d.end(), lifted.dims().begin(), lifted.dims().end());
  auto out = net.infer(lifted.reshaped(d));
  Prediction p;
  const auto& od = out.dims();
  p.logits = out.reshaped(Dims{od[1], od[2], od[3], od[4]});
  p.fused = fuse_slices(p.logits, stats.selected, net.spec().effective_fusion());
  return p;
}

inline Prediction predict(const Checkpoint& ck, const Tensor<float>& image) { return predict(ck.net, ck.stats, image); }

// Per-class binary maps [C,Y,X] of a target: Cout == 1 thresholds at 0.5,
// otherwise the target is read as one-hot / per-class scores.
inline BinaryMap target_maps(const Tensor<float>& target) {
  const auto& d = target.dims();
  BinaryMap out(d);
  if (d[0] == 1) {
    for (std::size_t i = 0; i < target.numel(); ++i) out[i] = target[i] > 0.5f ? 1 : 0;
    return out;
  }
  const std::size_t plane = d[1] * d[2];
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < d[0]; ++c)
      if (target[c * plane + i] > target[best * plane + i]) best = c;
    out[best * plane + i] = 1;
  }
  return out;
}

inline BinaryMap prediction_maps(const Tensor<float>& probs) {
  const auto labels = decode_segmentation(probs);
  const auto& d = probs.dims();
  BinaryMap out(d);
  const std::size_t plane = d[1] * d[2];
  for (std::size_t i = 0; i < plane; ++i) {
    if (d[0] == 1)
      out[i] = labels[i];
    else
      out[labels[i] * plane + i] = 1;
  }
  return out;
}

// Dice of the decoded fused prediction against the target. Multi-class maps
// average over classes present in either map.
inline double segmentation_dice(const Tensor<float>& probs, const Tensor<float>& target) {
  if (probs.dims() != target.dims()) throw ShapeError("segmentation_dice: prediction/target dims differ");
  const auto a = prediction_maps(probs), b = target_maps(target);
  const std::size_t C = probs.dim(0);
  if (C == 1) return dice(channel_of(a, 0), channel_of(b, 0));
  double acc = 0;
  std::size_t k = 0;
  for (std::size_t c = 0; c < C; ++c) {
    auto ac = channel_of(a, c), bc = channel_of(b, c);
    const bool present = std::any_of(ac.data().begin(), ac.data().end(), [](auto v) { return v != 0; }) ||
                         std::any_of(bc.data().begin(), bc.data().end(), [](auto v) { return v != 0; });
    if (!present) continue;
    acc += dice(ac, bc);
    ++k;
  }
  return k == 0 ? 1.0 : acc / static_cast<double>(k);
}

// Mean fused Dice over a segmentation dataset.
inline double mean_dice(const Network<float>& net, const SliceStats& stats, const Dataset& ds) {
  double acc = 0;
  for (const auto& s : ds.samples) acc += segmentation_dice(predict(net, stats, s.image).fused, s.target);
  return acc / static_cast<double>(ds.samples.size());
}

// Depth metrics pooled over all valid pixels of a dataset.
inline DepthMetrics dataset_depth_metrics(const Network<float>& net, const SliceStats& stats, const Dataset& ds) {
  std::vector<float> p, g, v;
  for (const auto& s : ds.samples) {
    const auto f = predict(net, stats, s.image).fused;
    p.insert(p.end(), f.data().begin(), f.data().end());
    g.insert(g.end(), s.target.data().begin(), s.target.data().end());
    if (s.valid.empty())
      v.insert(v.end(), s.target.numel(), 1.0f);
    else
      v.insert(v.end(), s.valid.data().begin(), s.valid.data().end());
  }
  const Dims d{p.size()};
  return depth_metrics(Tensor<float>(d, std::move(p)), Tensor<float>(d, std::move(g)), Tensor<float>(d, std::move(v)));
}

}  // namespace slift
