#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "lifting.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace slift {

struct GradCheckOptions {
  double step = 1e-6;
  // Denominator floor: rel = |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-4;
  // Check at most this many elements per input (chosen by seeded sampling); 0 = all.
  std::size_t max_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;      // "<input>[<index>]"
  std::size_t checked = 0;
  std::size_t skipped = 0;  // one-sided differences disagree: a kink lies inside the step
};

// Central differences of a scalar function of the given leaves against the
// reverse-mode gradient. `f` must rebuild the graph from the current leaf
// values on every call.
inline GradCheckReport check_gradients(const std::function<Var<double>()>& f, std::vector<NamedParam<double>>& inputs,
                                       const GradCheckOptions& opt = {}) {
  for (auto& in : inputs) in.var.zero_grad();
  auto loss = f();
  backward(loss);
  const double f0 = loss.value()[0];

  GradCheckReport rep;
  Rng rng(derive_seed(opt.seed, 0x9c));
  for (auto& in : inputs) {
    auto& value = in.var.mutable_value();
    const std::size_t n = value.numel();
    Tensor<double> analytic = in.var.has_grad() ? in.var.grad() : Tensor<double>(value.dims());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (opt.max_per_input > 0 && n > opt.max_per_input) {
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(opt.max_per_input);
      std::sort(idx.begin(), idx.end());
    }
    for (auto i : idx) {
      const double orig = value[i];
      value[i] = orig + opt.step;
      const double fp = f().value()[0];
      value[i] = orig - opt.step;
      const double fm = f().value()[0];
      value[i] = orig;
      const double numeric = (fp - fm) / (2 * opt.step);
      const double fwd = (fp - f0) / opt.step, bwd = (f0 - fm) / opt.step;
      if (std::abs(fwd - bwd) > 1e-3 * std::max({std::abs(fwd), std::abs(bwd), opt.floor})) {
        ++rep.skipped;
        continue;
      }
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
      ++rep.checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst = in.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

struct NetworkGradCheck {
  GradCheckReport report;
  std::size_t parameters = 0;
};

// End-to-end check on a tiny lifted network: mean slice loss of a random
// input/target pair, differentiated w.r.t. every parameter.
inline NetworkGradCheck gradcheck_network(std::uint64_t seed, const GradCheckOptions& opt = {}) {
  auto spec = sl_unet(2, 1, 2, 3, 2, 1);
  auto net = Network<double>::build(spec, seed);
  Rng rng(derive_seed(seed, 0x77));
  auto image = random_tensor<double>(Dims{2, 8, 8}, rng, 0.0, 1.0);
  Tensor<double> target(Dims{1, 8, 8});
  for (std::size_t i = 0; i < target.numel(); ++i) target[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  const auto lifted = lift(image, spec.lift_depth).reshaped(Dims{1, 2, spec.lift_depth, 8, 8});
  auto f = [&] {
    auto logits = net.forward(Var<double>::constant(lifted));
    return slice_loss(logits, 0, target, LossKind::dice_bce).total;
  };
  NetworkGradCheck out;
  out.parameters = net.parameter_count();
  out.report = check_gradients(f, net.params(), opt);
  return out;
}

}  // namespace slift
