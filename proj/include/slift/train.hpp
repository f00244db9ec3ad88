#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "arch.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "lifting.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace slift {

enum class ClipMode { norm, value };

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  AdamWConfig adamw;
  ScheduleConfig schedule;
  double grad_clip = 0.5;
  ClipMode clip_mode = ClipMode::norm;
  LossKind loss = LossKind::dice_bce;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;
  std::size_t select_s = 5;
  // Average per-slice losses over every epoch instead of the final one only.
  bool track_all_epochs = false;
  // Weighted kinds only: extra weight on pixels whose 4-neighbourhood crosses
  // the mask boundary. 0 gives uniform weights.
  double boundary_weight = 0.0;

  bool operator==(const TrainConfig& o) const {
    return epochs == o.epochs && learning_rate == o.learning_rate && adamw.beta1 == o.adamw.beta1 &&
           adamw.beta2 == o.adamw.beta2 && adamw.eps == o.adamw.eps && adamw.weight_decay == o.adamw.weight_decay &&
           schedule.kind == o.schedule.kind && schedule.t0 == o.schedule.t0 && schedule.t_mult == o.schedule.t_mult &&
           schedule.eta_min == o.schedule.eta_min && schedule.step == o.schedule.step &&
           schedule.gamma == o.schedule.gamma && grad_clip == o.grad_clip && clip_mode == o.clip_mode &&
           loss == o.loss && seed == o.seed && batch_size == o.batch_size && select_s == o.select_s &&
           track_all_epochs == o.track_all_epochs && boundary_weight == o.boundary_weight;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be >= 0");
    if (!(grad_clip > 0)) throw ConfigError("train: grad_clip must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (select_s < 1) throw ConfigError("train: select_s must be >= 1");
    if (boundary_weight < 0) throw ConfigError("train: boundary_weight must be >= 0");
    if (!(adamw.beta1 >= 0 && adamw.beta1 < 1 && adamw.beta2 >= 0 && adamw.beta2 < 1 && adamw.eps > 0 &&
          adamw.weight_decay >= 0))
      throw ConfigError("train: invalid AdamW hyperparameters");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double lr = 0.0;
  std::vector<double> per_slice;  // this epoch's mean loss per slice
};

struct Checkpoint {
  ArchSpec arch;
  TrainConfig train;
  SliceStats stats;
  std::size_t epoch = 0;
  std::uint64_t rng_digest = 0;
  Network<float> net;
};

struct TrainHooks {
  std::function<void(const EpochRecord&, const Network<float>&)> on_epoch;
};

// 1 + w on pixels with a 4-neighbour of different label, 1 elsewhere.
inline Tensor<float> boundary_weights(const Tensor<float>& mask, double w) {
  const auto& d = mask.dims();
  Tensor<float> out(d, 1.0f);
  const std::size_t H = d[1], W = d[2], plane = H * W;
  for (std::size_t c = 0; c < d[0]; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const float v = mask[c * plane + y * W + x];
        const bool edge = (y > 0 && mask[c * plane + (y - 1) * W + x] != v) ||
                          (y + 1 < H && mask[c * plane + (y + 1) * W + x] != v) ||
                          (x > 0 && mask[c * plane + y * W + x - 1] != v) ||
                          (x + 1 < W && mask[c * plane + y * W + x + 1] != v);
        if (edge) out[c * plane + y * W + x] = static_cast<float>(1.0 + w);
      }
  return out;
}

// Weights a training run starts from.
inline Network<float> initial_network(const ArchSpec& spec, const TrainConfig& cfg) {
  return Network<float>::build(spec, derive_seed(cfg.seed, 0x1417));
}

inline void check_task_compat(const Dataset& ds, const ArchSpec& spec, LossKind loss) {
  if (ds.in_channels != spec.in_channels)
    throw ConfigError("dataset has " + std::to_string(ds.in_channels) + " input channels, arch expects " +
                      std::to_string(spec.in_channels));
  if (ds.classes != spec.out_channels)
    throw ConfigError("dataset has " + std::to_string(ds.classes) + " target channels, arch expects " +
                      std::to_string(spec.out_channels));
  const bool depth = ds.task == Task::depth;
  if (depth != (spec.head == Head::depth)) throw ConfigError("arch head does not match dataset task");
  if (depth != loss_needs_mask(loss)) throw ConfigError("loss kind does not match dataset task");
  spec.validate_geometry(ds.height, ds.width);
}

// Dense slice supervision. Each step: lift the batch, forward, mean slice loss
// per sample, mean over the batch, backward, clip, AdamW. The learning rate is
// set per epoch by the schedule. Per-slice losses of the final epoch (or of all
// epochs) are averaged over samples and the s lowest are selected.
inline Checkpoint train(const Dataset& ds, const ArchSpec& spec, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  ds.validate();
  cfg.validate();
  check_task_compat(ds, spec, cfg.loss);
  if (cfg.select_s > spec.lift_depth)
    throw ConfigError("train: select_s = " + std::to_string(cfg.select_s) + " exceeds lift_depth " +
                      std::to_string(spec.lift_depth));

  auto net = initial_network(spec, cfg);
  AdamW<float> opt(cfg.adamw);
  Rng order_rng(derive_seed(cfg.seed, 0x0bde));
  const std::size_t m = spec.lift_depth, n = ds.samples.size();

  std::vector<Tensor<float>> weights;
  if (cfg.loss == LossKind::wbce_wiou && cfg.boundary_weight > 0)
    for (const auto& s : ds.samples) weights.push_back(boundary_weights(s.target, cfg.boundary_weight));

  std::vector<double> tracked(m, 0.0);
  std::size_t tracked_count = 0;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.learning_rate, epoch, cfg.schedule);
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order.begin(), order.end());
    const bool track = cfg.track_all_epochs || epoch + 1 == cfg.epochs;

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.per_slice.assign(m, 0.0);

    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(n, b0 + cfg.batch_size);
      std::vector<Tensor<float>> lifted;
      for (std::size_t i = b0; i < b1; ++i) lifted.push_back(lift(ds.samples[order[i]].image, m));
      net.zero_grad();
      auto logits = net.forward(Var<float>::constant(batch_of(lifted)));

      Var<float> total;
      for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t idx = order[i];
        const auto& s = ds.samples[idx];
        LossInputs<float> in;
        if (!s.valid.empty()) in.valid_mask = &s.valid;
        if (!weights.empty()) in.weights = &weights[idx];
        SliceLoss<float> sl;
        try {
          sl = slice_loss(logits, i - b0, s.target, cfg.loss, in);
        } catch (const NumericError& e) {
          throw NumericError("epoch " + std::to_string(epoch + 1) + ", sample " + s.id + ": " + e.what());
        }
        const auto v = sl.values();
        for (std::size_t z = 0; z < m; ++z) rec.per_slice[z] += v[z];
        if (track) {
          for (std::size_t z = 0; z < m; ++z) tracked[z] += v[z];
          ++tracked_count;
        }
        rec.mean_loss += static_cast<double>(sl.total.value()[0]);
        total = total ? add(total, sl.total) : sl.total;
      }
      if (b1 - b0 > 1) total = scale(total, 1.0f / static_cast<float>(b1 - b0));
      backward(total);
      if (!std::isfinite(global_grad_norm(net.params())))
        throw NumericError("epoch " + std::to_string(epoch + 1) + ", batch at sample " + ds.samples[order[b0]].id +
                           ": non-finite gradient");
      if (cfg.clip_mode == ClipMode::norm)
        clip_grad_norm(net.params(), cfg.grad_clip);
      else
        clip_grad_value(net.params(), cfg.grad_clip);
      opt.step(net.params(), lr);
    }
    net.zero_grad();
    rec.mean_loss /= static_cast<double>(n);
    for (auto& v : rec.per_slice) v /= static_cast<double>(n);
    if (hooks.on_epoch) hooks.on_epoch(rec, net);
  }

  for (auto& v : tracked) v /= static_cast<double>(tracked_count);
  Checkpoint ck;
  ck.arch = spec;
  ck.train = cfg;
  ck.stats = select_slices(tracked, cfg.select_s);
  ck.epoch = cfg.epochs;
  ck.rng_digest = order_rng.digest();
  ck.net = std::move(net);
  return ck;
}

}  // namespace slift
