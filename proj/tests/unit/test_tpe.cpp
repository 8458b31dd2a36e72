// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "fingerspell/datamodel.hpp"
#include "fingerspell/error.hpp"
#include "fingerspell/gradcheck.hpp"
#include "fingerspell/ops.hpp"
#include "fingerspell/params.hpp"
#include "fingerspell/random.hpp"
#include "fingerspell/tpe.hpp"
#include "test_util.hpp"

using namespace fsr;
using fsr::testing::random_tensor;

namespace {

KeypointLayout small_layout() {
  KeypointLayout l;
  l.left_hand = 3;
  l.right_hand = 3;
  l.pose = 2;
  l.pose_pairs = {{0, 1}};
  return l;
}

TpeConfig small_tpe(int modules = 1) {
  TpeConfig c;
  c.c1 = 4;
  c.c2 = 8;
  c.tube_kernel = 2;
  c.tube_stride = 2;
  c.feature_dim = 5;
  c.conv_modules = modules;
  c.conv_module_kernel = 3;
  return c;
}

KeypointClip random_clip(int64_t len, const KeypointLayout& layout, Rng& rng) {
  return {random_tensor({len, layout.total(), 3}, rng, 0.0, 1.0), layout};
}

ParamSet make_params(const TpeConfig& cfg, const KeypointLayout& layout, uint64_t seed) {
  ParamSet p;
  Rng rng(seed);
  add_tpe_params(p, cfg, layout, rng);
  return p;
}

}  // namespace

TEST(Tpe, DefaultTubeMapsThirtyTwoToTen) {
  const TpeConfig cfg;
  EXPECT_EQ(cfg.c2, 32);
  EXPECT_EQ(cfg.tube_extent(), 10);
  EXPECT_EQ((cfg.c2 - cfg.tube_kernel) / cfg.tube_stride + 1, cfg.tube_extent());
}

TEST(Tpe, FullSizeStageShapes) {
  TpeConfig cfg;
  cfg.feature_dim = 7;
  const KeypointLayout layout;
  ASSERT_EQ(layout.total(), 54);
  const ParamSet p = make_params(cfg, layout, 1);
  EXPECT_EQ(p.get("tpe.conv2.w").dim(0), 32);
  EXPECT_EQ(p.get("tpe.proj.w").dim(1), 10 * 54);
  Rng rng(2);
  NoGradGuard ng;
  const Var out = tpe_forward(Var(random_tensor({2, 3, 40, 54}, rng, 0, 1)), {40, 40}, cfg, layout, p);
  EXPECT_EQ(out.value().shape(), (Shape{2, 40, 7}));
}

TEST(Tpe, SingleFrameClip) {
  const auto layout = small_layout();
  const auto cfg = small_tpe();
  const ParamSet p = make_params(cfg, layout, 3);
  Rng rng(4);
  const std::vector<KeypointClip> clips{random_clip(1, layout, rng)};
  const auto batch = pad_keypoint_batch(clips);
  EXPECT_EQ(tpe_forward(batch, cfg, layout, p).value().shape(), (Shape{1, 1, 5}));
  const auto enc = tpe_encode(batch, cfg, layout, p);
  EXPECT_EQ(enc[0].value().shape(), (Shape{1, 5}));
}

TEST(Tpe, ZeroInputZeroBiasGivesZero) {
  const auto layout = small_layout();
  const auto cfg = small_tpe();
  const ParamSet p = make_params(cfg, layout, 5);  // biases start at zero
  const Var out = tpe_forward(Var(Tensor({2, 3, 4, layout.total()})), {4, 2}, cfg, layout, p);
  for (int64_t i = 0; i < out.value().size(); ++i) EXPECT_EQ(out.value()[i], 0.0);
}

TEST(Tpe, PaddedFramesAreZero) {
  const auto layout = small_layout();
  const auto cfg = small_tpe();
  ParamSet p = make_params(cfg, layout, 6);
  for (auto& e : p.entries())
    if (e.name.ends_with(".b")) e.var.mutable_value().fill(0.3);
  Rng rng(7);
  const std::vector<KeypointClip> clips{random_clip(2, layout, rng), random_clip(5, layout, rng)};
  const Tensor out = tpe_forward(pad_keypoint_batch(clips), cfg, layout, p).value();
  for (int64_t t = 2; t < 5; ++t)
    for (int64_t f = 0; f < 5; ++f) EXPECT_EQ(out[(0 * 5 + t) * 5 + f], 0.0);
}

TEST(Tpe, PaddingIndependence) {
  const auto layout = small_layout();
  const auto cfg = small_tpe(2);
  ParamSet p = make_params(cfg, layout, 8);
  for (auto& e : p.entries())
    if (e.name.ends_with(".b")) e.var.mutable_value().fill(0.1);
  Rng rng(9);
  const KeypointClip clip = random_clip(6, layout, rng);
  const std::vector<KeypointClip> alone{clip};
  const Tensor ref = tpe_encode(pad_keypoint_batch(alone), cfg, layout, p)[0].value();
  for (const int64_t extra : {1, 17}) {
    const std::vector<KeypointClip> mixed{random_clip(3, layout, rng), clip};
    const auto batch = pad_keypoint_batch(mixed, 6 + extra);
    ASSERT_EQ(batch.max_length(), 6 + extra);
    const Tensor got = tpe_encode(batch, cfg, layout, p)[1].value();
    ASSERT_EQ(got.shape(), ref.shape());
    for (int64_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-6) << extra;
  }
}

TEST(Tpe, KeypointMismatchThrows) {
  const auto layout = small_layout();
  const auto cfg = small_tpe();
  const ParamSet p = make_params(cfg, layout, 10);
  EXPECT_THROW(tpe_forward(Var(Tensor({1, 3, 2, 9})), {2}, cfg, layout, p), ShapeError);
  KeypointLayout other = layout;
  other.pose = 4;
  other.pose_pairs = {{0, 1}, {2, 3}};
  EXPECT_THROW(tpe_forward(Var(Tensor({1, 3, 2, other.total()})), {2}, cfg, other, p), ShapeError);
}

TEST(Tpe, GroupSelection) {
  const auto layout = small_layout();
  auto cfg = small_tpe();
  cfg.groups = {"hands"};
  const ParamSet p = make_params(cfg, layout, 11);
  EXPECT_EQ(p.get("tpe.proj.w").dim(1), cfg.tube_extent() * 6);
  Rng rng(12);
  const Tensor x = random_tensor({1, 3, 3, layout.total()}, rng, 0, 1);
  Tensor y = x;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t t = 0; t < 3; ++t)
      for (int64_t k = 6; k < 8; ++k) y[(c * 3 + t) * 8 + k] = 5.0;  // pose values are ignored
  EXPECT_TRUE(fsr::testing::bitwise_equal(tpe_forward(Var(x), {3}, cfg, layout, p).value(),
                                          tpe_forward(Var(y), {3}, cfg, layout, p).value()));
}

TEST(ConvModule, ZeroParamsIsIdentity) {
  ParamSet p;
  Rng rng(13);
  add_conv_module_params(p, "cm", 6, 7, 2, rng);
  for (auto& e : p.entries()) e.var.mutable_value().fill(0.0);
  const Tensor x = random_tensor({9, 6}, rng, -1, 1);
  EXPECT_TRUE(fsr::testing::bitwise_equal(conv_module(Var(x), p, "cm").value(), x));
}

TEST(ConvModule, ShapePreserved) {
  ParamSet p;
  Rng rng(14);
  add_conv_module_params(p, "cm", 8, 7, 2, rng);
  for (const int64_t t : {1, 2, 100})
    EXPECT_EQ(conv_module(Var(random_tensor({t, 8}, rng, -1, 1)), p, "cm").value().shape(), (Shape{t, 8}));
}

TEST(ConvModule, StackDepthIsConfig) {
  const auto layout = small_layout();
  for (const int m : {0, 1, 2, 3}) {
    const auto cfg = small_tpe(m);
    const ParamSet p = make_params(cfg, layout, 15);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(p.contains("tpe.cm" + std::to_string(i) + ".dw.w"), i < m);
  }
  auto bad = small_tpe();
  bad.conv_modules = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Tpe, GradientCheckAndNoDeadParameters) {
  const auto layout = small_layout();
  const auto cfg = small_tpe(1);
  ParamSet p = make_params(cfg, layout, 16);
  Rng rng(17);
  const std::vector<KeypointClip> clips{random_clip(4, layout, rng), random_clip(2, layout, rng)};
  const auto batch = pad_keypoint_batch(clips);
  const Tensor w0 = random_tensor({4, 5}, rng, -1, 1), w1 = random_tensor({2, 5}, rng, -1, 1);
  const auto forward = [&] {
    const auto out = tpe_encode(batch, cfg, layout, p);
    return nn::add(nn::sum(nn::mul(out[0], Var(w0))), nn::sum(nn::mul(out[1], Var(w1))));
  };
  GradCheckOptions opts;
  opts.max_entries = 8;
  const auto report = grad_check(p, graph_objective(p, forward), opts);
  EXPECT_TRUE(report.passed) << report.max_rel_error;

  p.zero_grad();
  forward().backward();
  for (const auto& e : p.entries()) {
    double norm = 0;
    for (int64_t i = 0; i < e.var.grad().size(); ++i) norm += std::abs(e.var.grad()[i]);
    EXPECT_GT(norm, 0.0) << e.name;
  }
}
