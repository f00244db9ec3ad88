#include <gtest/gtest.h>

#include <cmath>

#include "slift/gradcheck.hpp"
#include "slift/losses.hpp"

using namespace slift;

namespace {

Tensor<double> t3(std::size_t c, std::size_t y, std::size_t x, std::vector<double> v) {
  return Tensor<double>(Dims{c, y, x}, std::move(v));
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double value(LossKind k, const Tensor<double>& pred, const Tensor<double>& target, const LossInputs<double>& in = {}) {
  return loss_primitive(k, Var<double>::constant(pred), target, in).value()[0];
}

}  // namespace

TEST(LossPrimitive, PerfectDiceIsNearZero) {
  auto target = t3(1, 2, 2, {1, 0, 1, 1});
  auto logits = t3(1, 2, 2, {60, -60, 60, 60});  // sigmoid saturates to exactly 0/1 in double
  EXPECT_LE(value(LossKind::dice, logits, target), 2 * kLossSmooth);
  EXPECT_LE(value(LossKind::iou, logits, target), 2 * kLossSmooth);
}

TEST(LossPrimitive, DiceAndIouFormulas) {
  auto target = t3(1, 1, 3, {1, 0, 1});
  auto logits = t3(1, 1, 3, {0.3, -1.2, 2.0});
  double pq = 0, sp = 0, sq = 0;
  for (int i = 0; i < 3; ++i) {
    const double p = sig(logits[i]);
    pq += p * target[i];
    sp += p;
    sq += target[i];
  }
  const double e = 1e-6;
  EXPECT_NEAR(value(LossKind::dice, logits, target), 1 - (2 * pq + e) / (sp + sq + e), 1e-14);
  EXPECT_NEAR(value(LossKind::iou, logits, target), 1 - (pq + e) / (sp + sq - pq + e), 1e-14);
}

TEST(LossPrimitive, BceFromLogitsIsStable) {
  auto target = t3(1, 1, 2, {1, 0});
  auto logits = t3(1, 1, 2, {800, -800});
  EXPECT_EQ(value(LossKind::bce, logits, target), 0.0);
  auto bad = t3(1, 1, 2, {-800, 800});
  EXPECT_NEAR(value(LossKind::bce, bad, target), 800.0, 1e-9);
  auto mid = t3(1, 1, 2, {0.5, -0.25});
  const double want = -(std::log(sig(0.5)) + std::log(1 - sig(-0.25))) / 2;
  EXPECT_NEAR(value(LossKind::bce, mid, target), want, 1e-14);
}

TEST(LossPrimitive, CompositesAreUnitWeightSums) {
  Rng rng(1);
  auto logits = random_tensor<double>(Dims{2, 3, 3}, rng, -2, 2);
  Tensor<double> target(Dims{2, 3, 3});
  for (auto& v : target.data()) v = rng.uniform() < 0.5 ? 1 : 0;
  EXPECT_NEAR(value(LossKind::dice_bce, logits, target),
              value(LossKind::dice, logits, target) + value(LossKind::bce, logits, target), 1e-14);
  EXPECT_NEAR(value(LossKind::wbce_wiou, logits, target),
              value(LossKind::bce, logits, target) + value(LossKind::iou, logits, target), 1e-14);
  EXPECT_NEAR(value(LossKind::masked_mse_l1, logits, target),
              value(LossKind::masked_mse, logits, target) + value(LossKind::masked_l1, logits, target), 1e-14);
}

TEST(LossPrimitive, MaskedLossesOnTwoByTwoFixture) {
  auto pred = t3(1, 2, 2, {1.0, 2.0, 3.0, 4.0});
  auto gt = t3(1, 2, 2, {1.5, 2.0, 1.0, 8.0});
  // errors: -0.5, 0, 2, -4
  auto full = t3(1, 2, 2, {1, 1, 1, 1});
  auto half = t3(1, 2, 2, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(value(LossKind::masked_l1, pred, gt, {&full}), (0.5 + 0 + 2 + 4) / 4.0);
  EXPECT_DOUBLE_EQ(value(LossKind::masked_mse, pred, gt, {&full}), (0.25 + 0 + 4 + 16) / 4.0);
  EXPECT_DOUBLE_EQ(value(LossKind::masked_l1, pred, gt, {&half}), (0.5 + 2) / 2.0);
  EXPECT_DOUBLE_EQ(value(LossKind::masked_mse, pred, gt, {&half}), (0.25 + 4) / 2.0);
  EXPECT_DOUBLE_EQ(value(LossKind::masked_mse_l1, pred, gt, {&half}), 2.125 + 1.25);
  // Full mask equals the unmasked default.
  EXPECT_EQ(value(LossKind::masked_l1, pred, gt, {&full}), value(LossKind::masked_l1, pred, gt));
}

TEST(LossPrimitive, MaskErrors) {
  auto pred = t3(1, 2, 2, {1, 2, 3, 4});
  auto none = t3(1, 2, 2, {0, 0, 0, 0});
  auto nonbinary = t3(1, 2, 2, {0.5, 1, 1, 1});
  EXPECT_THROW(value(LossKind::masked_l1, pred, pred, {&none}), InvalidMaskError);
  EXPECT_THROW(value(LossKind::masked_mse, pred, pred, {&nonbinary}), InvalidMaskError);
  auto wrong = Tensor<double>(Dims{1, 3, 2}, 1.0);
  EXPECT_THROW(value(LossKind::masked_l1, pred, pred, {&wrong}), ShapeError);
  EXPECT_THROW(value(LossKind::dice, pred, t3(1, 1, 4, {0, 0, 0, 0})), ShapeError);
}

TEST(LossPrimitive, BoundaryWeightsEmphasisePixels) {
  auto target = t3(1, 1, 2, {1, 0});
  auto logits = t3(1, 1, 2, {-1, -1});
  auto w = t3(1, 1, 2, {3, 1});
  // Weighted BCE puts 3/4 of the mass on the misclassified positive pixel.
  const double want = (3 * std::log1p(std::exp(1.0)) + 1 * std::log1p(std::exp(-1.0))) / 4;
  LossInputs<double> in;
  in.weights = &w;
  const double got = value(LossKind::wbce_wiou, logits, target, in);
  const double p = sig(-1);
  const double iou = 1 - (3 * p + 1e-6) / (3 * p + p + 3 - 3 * p + 1e-6);
  EXPECT_NEAR(got, want + iou, 1e-12);
}

TEST(LossPrimitive, GradientsF64) {
  Rng rng(2);
  Tensor<double> target(Dims{2, 3, 3});
  for (auto& v : target.data()) v = rng.uniform() < 0.4 ? 1 : 0;
  auto mask = Tensor<double>(Dims{1, 3, 3}, 1.0);
  mask[4] = 0;
  auto weights = random_tensor<double>(Dims{2, 3, 3}, rng, 0.5, 2);
  for (auto kind : {LossKind::dice, LossKind::bce, LossKind::iou, LossKind::dice_bce, LossKind::wbce_wiou,
                    LossKind::masked_mse, LossKind::masked_l1, LossKind::masked_mse_l1}) {
    std::vector<NamedParam<double>> in{{"logits", Var<double>::leaf(random_tensor<double>(Dims{2, 3, 3}, rng, -2, 2), true)}};
    LossInputs<double> li;
    li.valid_mask = &mask;
    li.weights = &weights;
    auto f = [&] { return loss_primitive(kind, in[0].var, target, li); };
    auto rep = check_gradients(f, in);
    EXPECT_LT(rep.max_rel_error, 1e-4) << int(kind) << " " << rep.worst;
  }
}

TEST(SliceLoss, IdenticalSlicesShareOneValue) {
  Rng rng(3);
  auto plane = random_tensor<double>(Dims{1, 4, 4}, rng, -1, 1);
  Tensor<double> logits(Dims{1, 1, 3, 4, 4});
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t i = 0; i < 16; ++i) logits[z * 16 + i] = plane[i];
  Tensor<double> target(Dims{1, 4, 4}, 1.0);
  auto sl = slice_loss(Var<double>::constant(logits), 0, target, LossKind::dice_bce);
  auto v = sl.values();
  EXPECT_EQ(v[0], v[1]);
  EXPECT_EQ(v[1], v[2]);
  EXPECT_NEAR(sl.total.value()[0], v[0], 1e-15);
}

TEST(SliceLoss, TwoSlicesAverage) {
  Tensor<double> logits(Dims{1, 1, 2, 1, 2}, std::vector<double>{1, 2, -1, 0.5});
  Tensor<double> target(Dims{1, 1, 2}, std::vector<double>{1, 0});
  auto sl = slice_loss(Var<double>::constant(logits), 0, target, LossKind::bce);
  const auto v = sl.values();
  EXPECT_DOUBLE_EQ(sl.total.value()[0], (v[0] + v[1]) / 2);
}

TEST(SliceLoss, MatchesPerSliceLoopOracle) {
  Rng rng(4);
  auto logits = random_tensor<double>(Dims{2, 2, 5, 3, 4}, rng, -3, 3);
  Tensor<double> target(Dims{2, 3, 4});
  for (auto& v : target.data()) v = rng.uniform() < 0.5 ? 1 : 0;
  auto sl = slice_loss(Var<double>::constant(logits), 1, target, LossKind::dice_bce);
  double acc = 0;
  for (std::size_t z = 0; z < 5; ++z) {
    Tensor<double> s(Dims{2, 3, 4});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 12; ++i) s[c * 12 + i] = logits[((1 * 2 + c) * 5 + z) * 12 + i];
    const double want = value(LossKind::dice_bce, s, target);
    EXPECT_NEAR(sl.values()[z], want, 1e-12);
    acc += want;
  }
  EXPECT_NEAR(sl.total.value()[0], acc / 5, 1e-6);
}

TEST(SliceLoss, ShapeErrors) {
  Tensor<double> logits(Dims{1, 1, 2, 2, 2});
  EXPECT_THROW(slice_loss(Var<double>::constant(logits), 0, Tensor<double>(Dims{1, 2, 3}), LossKind::bce), ShapeError);
  EXPECT_THROW(slice_loss(Var<double>::constant(Tensor<double>(Dims{1, 2, 2})), 0, Tensor<double>(Dims{1, 2, 2}),
                          LossKind::bce),
               ShapeError);
}

// Gradient of the slice-mean loss == mean of per-slice gradients from separate
// backward passes.
TEST(SliceLoss, MeanOfSliceGradientsIdentity) {
  Rng rng(5);
  auto base = random_tensor<double>(Dims{1, 1, 4, 3, 3}, rng, -2, 2);
  Tensor<double> target(Dims{1, 3, 3});
  for (auto& v : target.data()) v = rng.uniform() < 0.5 ? 1 : 0;
  auto w = Var<double>::leaf(random_tensor<double>(Dims{1, 1, 4, 3, 3}, rng), true);
  auto logits = [&] { return mul(w, Var<double>::constant(base)); };
  backward(slice_loss(logits(), 0, target, LossKind::dice_bce).total);
  const auto joint = w.grad();
  Tensor<double> acc(joint.dims());
  for (std::size_t z = 0; z < 4; ++z) {
    w.zero_grad();
    backward(slice_loss(logits(), 0, target, LossKind::dice_bce).per_slice[z]);
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += w.grad()[i] / 4;
  }
  EXPECT_LT(max_abs_diff(joint, acc), 1e-12);
}
