#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "slift/lifting.hpp"
#include "slift/model.hpp"

using namespace slift;

TEST(Lift, EverySliceEqualsTheInput) {
  Rng rng(1);
  auto img = random_tensor<float>(Dims{3, 5, 4}, rng);
  auto l = lift(img, 6);
  ASSERT_EQ(l.dims(), (Dims{3, 6, 5, 4}));
  for (std::size_t z = 0; z < 6; ++z) EXPECT_TRUE(bit_identical(slice_at(l, z), img));
  EXPECT_TRUE(bit_identical(lift(img, 1).reshaped(img.dims()), img));
}

TEST(Lift, Errors) {
  EXPECT_THROW(lift(Tensor<float>(Dims{3, 4}), 2), ShapeError);
  EXPECT_THROW(lift(Tensor<float>(Dims{1, 2, 2}), 0), ConfigError);
}

TEST(ReplicateTarget, MatchesLift) {
  Tensor<float> m(Dims{1, 2, 2}, std::vector<float>{0, 1, 1, 0});
  auto r = replicate_target(m, 3);
  for (std::size_t z = 0; z < 3; ++z) EXPECT_EQ(slice_at(r, z), m);
}

TEST(SelectSlices, MatchesSortOracle) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = 1 + rng.below(20), s = 1 + rng.below(m);
    std::vector<double> v(m);
    // Coarse values force ties.
    for (auto& e : v) e = double(rng.below(6)) * 0.25;
    auto st = select_slices(v, s);
    std::vector<std::pair<double, std::size_t>> pairs;
    for (std::size_t z = 0; z < m; ++z) pairs.emplace_back(v[z], z);
    std::sort(pairs.begin(), pairs.end());
    std::vector<std::size_t> want;
    for (std::size_t k = 0; k < s; ++k) want.push_back(pairs[k].second);
    std::sort(want.begin(), want.end());
    ASSERT_EQ(st.selected, want);
    ASSERT_EQ(st.s, s);
    ASSERT_EQ(st.per_slice_loss, v);
  }
}

TEST(SelectSlices, Errors) {
  EXPECT_THROW(select_slices({1, 2}, 3), ConfigError);
  EXPECT_THROW(select_slices({1, 2}, 0), ConfigError);
  EXPECT_THROW(select_slices({1, std::nan("")}, 1), NumericError);
}

TEST(SelectSlices, UnselectedIsTheComplement) {
  auto st = select_slices({0.3, 0.1, 0.5, 0.2}, 2);
  EXPECT_EQ(st.selected, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(st.unselected(), (std::vector<std::size_t>{0, 2}));
}

TEST(FuseSlices, SigmoidOfSummedLogits) {
  Tensor<float> logits(Dims{1, 3, 1, 2}, std::vector<float>{1, -1, 2, 0.5f, -3, 4});
  auto f = fuse_slices(logits, {2, 0});
  EXPECT_EQ(f[0], stable_sigmoid(1.0f + -3.0f));
  EXPECT_EQ(f[1], stable_sigmoid(-1.0f + 4.0f));
}

TEST(FuseSlices, IdenticalSlicesGiveSigmoidOfScaledLogit) {
  Rng rng(3);
  auto plane = random_tensor<float>(Dims{1, 4, 4}, rng, -3, 3);
  auto logits = lift(plane, 8);
  auto f = fuse_slices(logits, {0, 2, 5});
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(f[i], stable_sigmoid(plane[i] + plane[i] + plane[i]));
}

TEST(FuseSlices, SoftmaxAndMeanModes) {
  Tensor<double> logits(Dims{2, 2, 1, 1}, std::vector<double>{1, 2, 0, 1});
  auto sm = fuse_slices(logits, {0, 1}, Fusion::softmax);
  EXPECT_NEAR(sm[0], std::exp(3.0) / (std::exp(3.0) + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(sm[0] + sm[1], 1.0, 1e-15);
  auto mn = fuse_slices(logits, {0, 1}, Fusion::mean);
  EXPECT_EQ(mn[0], 1.5);
  EXPECT_EQ(mn[1], 0.5);
}

TEST(FuseSlices, SelectionErrors) {
  Tensor<float> logits(Dims{1, 3, 2, 2});
  EXPECT_THROW(fuse_slices(logits, {}), ConfigError);
  EXPECT_THROW(fuse_slices(logits, {1, 1}), ConfigError);
  EXPECT_THROW(fuse_slices(logits, {3}), ConfigError);
}

TEST(Decode, ThresholdAndArgmaxTies) {
  Tensor<float> p1(Dims{1, 1, 3}, std::vector<float>{0.5f, 0.51f, 0.2f});
  EXPECT_EQ(decode_segmentation(p1).vec(), (std::vector<std::uint8_t>{0, 1, 0}));
  Tensor<float> p3(Dims{3, 1, 2}, std::vector<float>{0.4f, 0.2f, 0.4f, 0.2f, 0.2f, 0.6f});
  EXPECT_EQ(decode_segmentation(p3).vec(), (std::vector<std::uint8_t>{0, 2}));
}

TEST(LiftedNetwork, UnitZKernelGivesIdenticalSlicesAndExactFusion) {
  auto spec = sl_unet(3, 1, 4, 6, 3, 1);
  spec.kernel = {1, 3, 3};
  auto net = Network<float>::build(spec, 5);
  Rng rng(4);
  auto img = random_tensor<float>(Dims{3, 16, 16}, rng, 0, 1);
  auto out = net.infer(lift(img, 6).reshaped(Dims{1, 3, 6, 16, 16}));
  auto logits = out.reshaped(Dims{1, 6, 16, 16});
  const auto s0 = slice_at(logits, 0);
  for (std::size_t z = 1; z < 6; ++z) ASSERT_TRUE(bit_identical(slice_at(logits, z), s0));
  const std::vector<std::size_t> sel{1, 3, 4};
  auto f = fuse_slices(logits, sel);
  for (std::size_t i = 0; i < s0.numel(); ++i) ASSERT_EQ(f[i], stable_sigmoid(s0[i] + s0[i] + s0[i]));
}
