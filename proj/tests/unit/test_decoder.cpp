// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "fingerspell/decoder.hpp"
#include "fingerspell/error.hpp"
#include "fingerspell/gradcheck.hpp"
#include "fingerspell/ops.hpp"
#include "fingerspell/params.hpp"
#include "fingerspell/random.hpp"
#include "test_util.hpp"

using namespace fsr;
using fsr::testing::random_tensor;

namespace {

Tensor log_probs(int64_t t, const std::vector<double>& probs_row_major) {
  const auto v = static_cast<int64_t>(probs_row_major.size()) / t;
  Tensor lp({t, v});
  for (int64_t i = 0; i < lp.size(); ++i) lp[i] = std::log(probs_row_major[static_cast<size_t>(i)]);
  return lp;
}

Tensor random_log_probs(int64_t t, int64_t v, Rng& rng, double scale = 2.0) {
  return nn::log_softmax(Var(random_tensor({t, v}, rng, -scale, scale))).value();
}

LabelSequence random_label(int64_t max_len, int64_t v, Rng& rng) {
  LabelSequence l;
  const auto n = rng.integer(0, max_len);
  for (int64_t i = 0; i < n; ++i) l.ids.push_back(static_cast<int32_t>(rng.integer(1, v - 1)));
  return l;
}

// Exhaustive best label: sum path probabilities per collapsed label.
LabelSequence exhaustive_best(const Tensor& lp) {
  const int64_t t = lp.dim(0), v = lp.dim(1);
  std::map<std::vector<int32_t>, double> mass;
  std::vector<int32_t> path(static_cast<size_t>(t), 0);
  while (true) {
    double p = 1.0;
    for (int64_t i = 0; i < t; ++i) p *= std::exp(lp[i * v + path[static_cast<size_t>(i)]]);
    mass[ctc_collapse(path).ids] += p;
    int64_t k = 0;
    while (k < t && ++path[static_cast<size_t>(k)] == v) path[static_cast<size_t>(k++)] = 0;
    if (k == t) break;
  }
  auto best = mass.begin();
  for (auto it = mass.begin(); it != mass.end(); ++it)
    if (it->second > best->second) best = it;  // map order: smaller label kept on ties
  return {best->first};
}

}  // namespace

TEST(Ctc, SingleFrameOracle) {
  const Tensor lp = log_probs(1, {0.4, 0.6});
  EXPECT_NEAR(ctc_loss(lp, {{1}}), -std::log(0.6), 1e-12);
  EXPECT_NEAR(ctc_loss(lp, {{1}}), 0.5108, 5e-5);
  EXPECT_NEAR(ctc_loss_bruteforce(lp, {{1}}), -std::log(0.6), 1e-12);
}

TEST(Ctc, TwoFrameOracle) {
  const Tensor lp = log_probs(2, {0.5, 0.5, 0.5, 0.5});
  EXPECT_NEAR(ctc_loss(lp, {{1}}), -std::log(0.75), 1e-12);
  EXPECT_NEAR(ctc_loss(lp, {{1}}), 0.2877, 5e-5);
  EXPECT_NEAR(ctc_path_probability_bruteforce(lp, {{1}}), 0.75, 1e-12);
}

TEST(Ctc, EmptyLabelIsBlankPath) {
  Rng rng(1);
  const Tensor lp = random_log_probs(5, 4, rng);
  double expect = 0;
  for (int64_t t = 0; t < 5; ++t) expect -= lp[t * 4];
  EXPECT_NEAR(ctc_loss(lp, {}), expect, 1e-12);
}

TEST(Ctc, MinFrames) {
  EXPECT_EQ(ctc_min_frames({}), 0);
  EXPECT_EQ(ctc_min_frames({{1, 2, 3}}), 3);
  EXPECT_EQ(ctc_min_frames({{1, 1, 2, 2, 2}}), 8);
}

TEST(Ctc, InfeasibleLabelThrows) {
  Rng rng(2);
  const Tensor lp = random_log_probs(2, 3, rng);
  EXPECT_THROW(ctc_loss(lp, {{1, 1}}), InfeasibleAlignment);
  EXPECT_THROW(ctc_loss(lp, {{1, 2, 1}}), InfeasibleAlignment);
  EXPECT_EQ(ctc_path_probability_bruteforce(lp, {{1, 2, 1}}), 0.0);
  EXPECT_TRUE(std::isinf(ctc_loss_bruteforce(lp, {{1, 1}})));
  EXPECT_THROW(ctc_loss(lp, {{3}}), ShapeError);
}

TEST(Ctc, BruteForceTooLargeThrows) {
  const Tensor lp({30, 4});
  EXPECT_THROW(ctc_path_probability_bruteforce(lp, {{1}}), std::invalid_argument);
}

TEST(Ctc, MatchesBruteForceOnRandomInstances) {
  Rng rng(3);
  for (int n = 0; n < 300; ++n) {
    const int64_t t = rng.integer(1, 6), v = rng.integer(2, 4);
    const Tensor lp = random_log_probs(t, v, rng);
    const LabelSequence label = random_label(3, v, rng);
    const double brute = ctc_path_probability_bruteforce(lp, label);
    if (ctc_min_frames(label) > t) {
      EXPECT_EQ(brute, 0.0);
      continue;
    }
    const double loss = ctc_loss(lp, label);
    EXPECT_GE(loss, 0.0);
    EXPECT_NEAR(std::exp(-loss), brute, 1e-9);
  }
}

TEST(Ctc, CertainPathGivesZeroLoss) {
  const Tensor lp = log_probs(3, {0, 1, 0, 1, 0, 0, 0, 0, 1});
  EXPECT_EQ(ctc_loss(lp, {{1, 2}}), 0.0);
}

TEST(Ctc, GradientCheck) {
  Rng rng(4);
  ParamSet p;
  Var logits = p.add("logits", random_tensor({6, 4}, rng, -1, 1));
  const LabelSequence label{{1, 3, 3}};
  const auto report = grad_check(p, graph_objective(p, [&] { return ctc_loss(nn::log_softmax(logits), label); }));
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Ctc, BatchLossIsSampleMean) {
  Rng rng(5);
  const Tensor a = random_log_probs(4, 3, rng), b = random_log_probs(6, 3, rng);
  const LabelSequence la{{1}}, lb{{2, 1}};
  const double got = ctc_batch_loss({Var(a), Var(b)}, {la, lb}).value()[0];
  EXPECT_NEAR(got, 0.5 * (ctc_loss(a, la) + ctc_loss(b, lb)), 1e-12);
  EXPECT_THROW(ctc_batch_loss({Var(a)}, {la, lb}), ShapeError);
}

TEST(Greedy, CollapseExamples) {
  EXPECT_EQ(ctc_collapse({1, 1, 0, 2, 2}).ids, (std::vector<int32_t>{1, 2}));
  EXPECT_TRUE(ctc_collapse({0, 0, 0}).empty());
  EXPECT_EQ(ctc_collapse({1, 0, 1}).ids, (std::vector<int32_t>{1, 1}));
}

TEST(Greedy, ArgmaxPath) {
  // argmaxes a, a, blank, b, b
  const Tensor lp = log_probs(5, {0.1, 0.8, 0.1, 0.2, 0.7, 0.1, 0.6, 0.3, 0.1, 0.1, 0.2, 0.7, 0.3, 0.3, 0.4});
  EXPECT_EQ(greedy_decode(lp).ids, (std::vector<int32_t>{1, 2}));
}

TEST(Greedy, NeverBlankNeverLongerThanT) {
  Rng rng(6);
  for (int n = 0; n < 200; ++n) {
    const int64_t t = rng.integer(1, 10);
    const auto out = greedy_decode(random_log_probs(t, 4, rng, 4.0));
    EXPECT_LE(static_cast<int64_t>(out.size()), t);
    for (const auto id : out.ids) EXPECT_GT(id, 0);
  }
}

TEST(Beam, BestLabelDiffersFromBestPath) {
  const Tensor lp = log_probs(2, {0.6, 0.4, 0.6, 0.4});
  EXPECT_TRUE(greedy_decode(lp).empty());                          // path "--" has 0.36
  EXPECT_EQ(beam_decode(lp, 4).ids, (std::vector<int32_t>{1}));  // label "a" has 0.64
}

TEST(Beam, MatchesExhaustiveSearch) {
  Rng rng(7);
  for (int n = 0; n < 200; ++n) {
    const int64_t t = rng.integer(1, 4), v = 3;
    const Tensor lp = random_log_probs(t, v, rng, 3.0);
    EXPECT_EQ(beam_decode(lp, 64), exhaustive_best(lp)) << n;
  }
}

TEST(Beam, SingleFrame) {
  EXPECT_EQ(beam_decode(log_probs(1, {0.2, 0.1, 0.7}), 3).ids, (std::vector<int32_t>{2}));
  EXPECT_TRUE(beam_decode(log_probs(1, {0.5, 0.3, 0.2}), 3).empty());
}

TEST(Beam, TieBreakPrefersSmallerLabel) {
  const Tensor lp = log_probs(1, {0.2, 0.4, 0.4});
  EXPECT_EQ(beam_decode(lp, 1).ids, (std::vector<int32_t>{1}));
  EXPECT_EQ(beam_decode(lp, 5).ids, (std::vector<int32_t>{1}));
  EXPECT_EQ(greedy_decode(lp).ids, (std::vector<int32_t>{1}));
}

TEST(Beam, WidthBelowOneThrows) {
  EXPECT_THROW(beam_decode(log_probs(1, {0.5, 0.5}), 0), std::invalid_argument);
}

TEST(DecodeHead, ShapesAndNormalisedRows) {
  for (const auto kind : {nn::RnnKind::gru, nn::RnnKind::lstm, nn::RnnKind::none}) {
    DecoderConfig cfg;
    cfg.rnn = kind;
    cfg.hidden = 5;
    ParamSet p;
    Rng rng(8);
    add_decoder_params(p, cfg, 6, 4, rng);
    for (const int64_t t : {1, 3, 9}) {
      const Tensor lp = decode_head(Var(random_tensor({t, 6}, rng, -1, 1)), t, cfg, p).value();
      ASSERT_EQ(lp.shape(), (Shape{t, 4}));
      for (int64_t r = 0; r < t; ++r) {
        double s = 0;
        for (int64_t c = 0; c < 4; ++c) s += std::exp(lp[r * 4 + c]);
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
    EXPECT_THROW(decode_head(Var(Tensor({3, 7})), 3, cfg, p), ShapeError);
  }
}

TEST(DecodeHead, PlainLinearHasNoRecurrentParams) {
  DecoderConfig cfg;
  cfg.rnn = nn::RnnKind::none;
  ParamSet p;
  Rng rng(9);
  add_decoder_params(p, cfg, 6, 4, rng);
  for (const auto& e : p.entries()) EXPECT_EQ(e.name.find("rnn"), std::string::npos) << e.name;
}

TEST(DecodeHead, GradientCheck) {
  DecoderConfig cfg;
  cfg.hidden = 3;
  ParamSet p;
  Rng rng(10);
  add_decoder_params(p, cfg, 4, 3, rng);
  const Tensor x = random_tensor({5, 4}, rng, -1, 1);
  GradCheckOptions opts;
  opts.max_entries = 8;
  const auto report =
      grad_check(p, graph_objective(p, [&] { return ctc_loss(decode_head(Var(x), 4, cfg, p), LabelSequence{{1, 2}}); }),
                 opts);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}
