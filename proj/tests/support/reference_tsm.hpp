// SPDX-License-Identifier: Apache-2.0
#pragma once

// Straightforward per-sequence TSM encoder used as an oracle for the packed
// TSAM path: each clip runs through the backbone on its own, the shift is
// written out with explicit loops, and every block shifts.

#include <string>
#include <vector>

#include "fingerspell/ops.hpp"
#include "fingerspell/params.hpp"
#include "fingerspell/tsam.hpp"

namespace fsr::testing {

/// Plain TSM shift of a (T, C, H, W) tensor: channels [0, n) take frame t-1,
/// channels [n, 2n) take frame t+1, zeros at the clip ends.
inline Tensor reference_shift(const Tensor& x, double fraction) {
  const int64_t T = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto n = static_cast<int64_t>(fraction * static_cast<double>(C));
  Tensor y = x;
  for (int64_t t = 0; t < T; ++t)
    for (int64_t c = 0; c < 2 * n; ++c) {
      const int64_t src = c < n ? t - 1 : t + 1;
      for (int64_t p = 0; p < hw; ++p)
        y[(t * C + c) * hw + p] = (src < 0 || src >= T) ? 0.0 : x[(src * C + c) * hw + p];
    }
  return y;
}

inline Var reference_conv_norm(const Var& x, const ParamSet& p, const std::string& name, int64_t kernel,
                               int64_t stride) {
  const int64_t pad = kernel / 2;
  const Var y = nn::conv(x, p.get(name + ".w"), Var(), {{stride, stride}, {pad, pad}, 1});
  return nn::frame_norm(y, p.get(name + ".g"), p.get(name + ".b"));
}

inline Var reference_act(const Var& x, Activation a) { return a == Activation::relu ? nn::relu(x) : nn::silu(x); }

/// One clip (T, C, H, W) -> (T, F); forward only.
inline Tensor reference_tsm_clip(const Tensor& clip, const TsamConfig& cfg, const ParamSet& p,
                                 const std::string& prefix = "tsam") {
  NoGradGuard no_grad;
  Var x = reference_act(reference_conv_norm(Var(clip), p, prefix + ".stem", 3, cfg.stem_stride), cfg.activation);
  int64_t in = cfg.stem_channels;
  for (size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& b = cfg.blocks[i];
    const std::string name = prefix + ".b" + std::to_string(i);
    const Var shifted(reference_shift(x.value(), cfg.shift_fraction));
    Var y = reference_act(reference_conv_norm(shifted, p, name + ".conv1", 3, b.stride), cfg.activation);
    y = reference_conv_norm(y, p, name + ".conv2", 3, 1);
    const bool project = in != b.channels || b.stride != 1;
    const Var shortcut = project ? reference_conv_norm(x, p, name + ".down", 1, b.stride) : x;
    x = reference_act(nn::add(y, shortcut), cfg.activation);
    in = b.channels;
  }
  const Var pooled = cfg.reduction == Reduction::avgpool ? nn::spatial_mean(x)
                                                          : nn::reshape(x, {x.dim(0), x.value().size() / x.dim(0)});
  // temporal conv1d over (T, D) with same padding, written out directly
  const Tensor& f = pooled.value();
  const Tensor& w = p.get(prefix + ".temporal.w").value();
  const Tensor& bias = p.get(prefix + ".temporal.b").value();
  const int64_t T = f.dim(0), D = f.dim(1), F = w.dim(0), K = w.dim(2);
  Tensor out({T, F});
  for (int64_t t = 0; t < T; ++t)
    for (int64_t o = 0; o < F; ++o) {
      double s = bias[o];
      for (int64_t k = 0; k < K; ++k) {
        const int64_t src = t + k - K / 2;
        if (src < 0 || src >= T) continue;
        for (int64_t d = 0; d < D; ++d) s += w[(o * D + d) * K + k] * f[src * D + d];
      }
      out[t * F + o] = s;
    }
  return out;
}

}  // namespace fsr::testing
