#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "slift/optim.hpp"

using namespace slift;

namespace {

std::vector<NamedParam<double>> one_param(std::vector<double> v) {
  const std::size_t n = v.size();
  return {{"w", Var<double>::leaf(Tensor<double>(Dims{n}, std::move(v)), true)}};
}

void set_grad(NamedParam<double>& p, std::vector<double> g) {
  p.var.zero_grad();
  const std::size_t n = g.size();
  p.var.node()->accumulate(Tensor<double>(Dims{n}, std::move(g)));
}

}  // namespace

TEST(AdamW, StepOnSquareDescends) {
  auto ps = one_param({1.0});
  AdamW<double> opt({0.9, 0.999, 1e-8, 0.0});
  set_grad(ps[0], {2.0});  // d/dw w^2
  opt.step(ps, 0.1);
  EXPECT_LT(ps[0].var.value()[0], 1.0);
}

// Scalar re-derivation of the update, run side by side for 10 steps.
TEST(AdamW, TrajectoryMatchesScalarOracle) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01, lr = 0.05;
  auto ps = one_param({0.7, -1.3, 2.0});
  AdamW<double> opt({b1, b2, eps, wd});
  double w[3] = {0.7, -1.3, 2.0}, m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  for (int t = 1; t <= 10; ++t) {
    std::vector<double> g(3);
    for (int i = 0; i < 3; ++i) g[i] = 2 * w[i] + std::sin(double(t + i));  // arbitrary gradient stream
    set_grad(ps[0], g);
    opt.step(ps, lr);
    for (int i = 0; i < 3; ++i) {
      w[i] = w[i] * (1 - lr * wd);
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      w[i] -= lr * mh / (std::sqrt(vh) + eps);
      EXPECT_NEAR(ps[0].var.value()[i], w[i], 1e-12);
    }
  }
  EXPECT_EQ(opt.steps(), 10u);
}

TEST(AdamW, ZeroLearningRateLeavesWeights) {
  auto ps = one_param({0.5, -0.5});
  AdamW<double> opt;
  set_grad(ps[0], {1.0, -3.0});
  opt.step(ps, 0.0);
  EXPECT_EQ(ps[0].var.value().vec(), (std::vector<double>{0.5, -0.5}));
}

TEST(Schedule, CosineEndpointsAndRestarts) {
  ScheduleConfig s;  // T0 = 10, Tmult = 2
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-3, 0, s), 1e-3);
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0.0, 10, 10), 0.0);
  EXPECT_NEAR(scheduled_lr(1e-3, 5, s), 5e-4, 1e-18);
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-3, 10, s), 1e-3);  // first restart
  EXPECT_NEAR(scheduled_lr(1e-3, 20, s), 5e-4, 1e-18);  // half of the 20-epoch period
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-3, 30, s), 1e-3);  // second restart
  s.eta_min = 1e-5;
  EXPECT_NEAR(cosine_lr(1e-3, 1e-5, 3, 3), 1e-5, 1e-18);
  EXPECT_NEAR(scheduled_lr(1e-3, 3, s), 1e-5 + 0.5 * (1e-3 - 1e-5) * (1 + std::cos(std::numbers::pi * 0.3)), 1e-18);
}

TEST(Schedule, StepDecayAndConstant) {
  ScheduleConfig s;
  s.kind = ScheduleKind::step_decay;
  s.step = 3;
  s.gamma = 0.5;
  EXPECT_DOUBLE_EQ(scheduled_lr(1.0, 2, s), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(1.0, 3, s), 0.5);
  EXPECT_DOUBLE_EQ(scheduled_lr(1.0, 7, s), 0.25);
  s.kind = ScheduleKind::constant;
  EXPECT_EQ(scheduled_lr(0.3, 99, s), 0.3);
}

TEST(Clip, GlobalNormBoundAndDirection) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<NamedParam<double>> ps{{"a", Var<double>::leaf(Tensor<double>(Dims{3}), true)},
                                       {"b", Var<double>::leaf(Tensor<double>(Dims{4}), true)}};
    std::vector<double> before;
    for (auto& p : ps) {
      std::vector<double> g(p.var.value().numel());
      const double s = std::pow(10.0, rng.uniform(-3, 3));
      for (auto& e : g) e = s * rng.uniform(-1, 1);
      before.insert(before.end(), g.begin(), g.end());
      set_grad(p, g);
    }
    const double pre = clip_grad_norm(ps, 0.5);
    std::vector<double> after;
    for (auto& p : ps) after.insert(after.end(), p.var.grad().data().begin(), p.var.grad().data().end());
    double na = 0, nb = 0, d = 0;
    for (std::size_t i = 0; i < after.size(); ++i) {
      na += after[i] * after[i];
      nb += before[i] * before[i];
      d += after[i] * before[i];
    }
    EXPECT_NEAR(pre, std::sqrt(nb), 1e-12 * std::sqrt(nb));
    EXPECT_LE(std::sqrt(na), 0.5 + 1e-9);
    EXPECT_GE(d / std::sqrt(na * nb), 1 - 1e-9);
    if (pre <= 0.5) {
      EXPECT_EQ(after, before);
    }
  }
}

TEST(Clip, ValueModeClampsElements) {
  auto ps = one_param({0, 0, 0});
  set_grad(ps[0], {2.0, -0.1, -7.0});
  clip_grad_value(ps, 0.5);
  EXPECT_EQ(ps[0].var.grad().vec(), (std::vector<double>{0.5, -0.1, -0.5}));
  EXPECT_THROW(clip_grad_value(ps, 0.0), ConfigError);
  EXPECT_THROW(clip_grad_norm(ps, -1.0), ConfigError);
}
