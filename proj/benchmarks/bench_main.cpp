// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "fingerspell/config.hpp"
#include "fingerspell/decoder.hpp"
#include "fingerspell/ops.hpp"
#include "fingerspell/params.hpp"
#include "fingerspell/random.hpp"
#include "fingerspell/tsam.hpp"

using namespace fsr;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  Rng rng(1);
  const int64_t c = state.range(0);
  const Var x(random_tensor({8, c, 16, 16}, rng)), w(random_tensor({c, c, 3, 3}, rng));
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv(x, w, Var(), {{1, 1}, {1, 1}, 1}).value().data());
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(16)->Arg(32);

void BM_CtcForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const int64_t t = state.range(0);
  const Tensor lp = nn::log_softmax(Var(random_tensor({t, 7}, rng))).value();
  LabelSequence label;
  for (int64_t i = 0; i < t / 4; ++i) label.ids.push_back(static_cast<int32_t>(1 + i % 6));
  for (auto _ : state) benchmark::DoNotOptimize(ctc_forward_backward(lp, label).loss);
}
BENCHMARK(BM_CtcForwardBackward)->Arg(20)->Arg(80)->Arg(320);

// Packed (per-sequence shift) against the pad-to-max baseline on a skewed
// length distribution: one long clip, several short ones.
void BM_TsamForward(benchmark::State& state) {
  Rng rng(3);
  TsamConfig cfg = default_config(Modality::rgb, "tiny").model.tsam;
  cfg.shift_type = state.range(0) == 0 ? ShiftType::tsam : ShiftType::tsm;
  ParamSet params;
  add_tsam_params(params, cfg, rng);
  const std::vector<int64_t> lengths{16, 4, 6, 6};
  const Var frames(random_tensor({32, 3, cfg.input_size, cfg.input_size}, rng));
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(tsam_forward(frames, lengths, cfg, params).size());
  state.SetLabel(to_string(cfg.shift_type));
}
BENCHMARK(BM_TsamForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
