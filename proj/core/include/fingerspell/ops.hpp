// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fingerspell/autograd.hpp"

/// Differentiable kernels. Every function builds a graph node whose backward
/// closure implements the exact derivative.
namespace fsr::nn {

// Elementwise arithmetic ----------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Multiply by a constant tensor of the same shape (no gradient to `mask`).
Var mul_const(const Var& a, const Tensor& mask);
/// `a` broadcast-multiplied by a scalar variable of shape {} or {1}.
Var mul_scalar(const Var& a, const Var& s);

Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var silu(const Var& x);

// Reductions ----------------------------------------------------------------

Var sum(const Var& x);
Var mean(const Var& x);
/// Sum of x ⊙ w for a constant w; handy for projecting outputs to a scalar.
Var dot_const(const Var& x, const Tensor& w);
/// Average over every axis after the first two: (B, C, ...) -> (B, C).
Var spatial_mean(const Var& x);

// Shape manipulation --------------------------------------------------------

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<int>& perm);
/// Contiguous range [start, start + length) along `axis`.
Var slice(const Var& x, int axis, int64_t start, int64_t length);
/// Concatenate along `axis`; all other extents must agree.
Var concat(const std::vector<Var>& parts, int axis);
/// Gather entries of the last axis at `indices`.
Var select_last(const Var& x, const std::vector<int64_t>& indices);

// Layers --------------------------------------------------------------------

/// Affine map over the last axis: y = x W^T + b, W is (D_out, D_in).
/// `bias` may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);

struct ConvSpec {
  std::vector<int64_t> stride;   // one per spatial dim; empty means all 1
  std::vector<int64_t> padding;  // one per spatial dim; empty means all 0
  int64_t groups = 1;
};

/// Output extent of one spatial axis.
int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t pad);

/// N-d cross-correlation with zero padding, N in {1, 2, 3}.
/// input (B, C_in, *spatial), weight (C_out, C_in / groups, *kernel),
/// bias (C_out) or undefined.
Var conv(const Var& input, const Var& weight, const Var& bias, const ConvSpec& spec);

/// Numerically stable log-softmax over the last axis.
Var log_softmax(const Var& x);

/// Normalise each slice along the last axis to zero mean, unit variance, then
/// apply per-feature gain and offset. Statistics never cross slices.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Normalise each sample of (B, C, *spatial) over all of (C, *spatial) with a
/// per-channel gain and offset (one group).
Var frame_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Gated linear unit on the last axis: first half ⊙ sigmoid(second half).
Var glu(const Var& x);

/// Temporal shift on (T, C, ...): channels [0, n) move forward one frame
/// (frame 0 gets zeros), channels [n, 2n) move backward (last frame gets
/// zeros), n = floor(fraction * C).
Var temporal_shift(const Var& x, double fraction);

/// Same shift applied independently to each of `groups` equal-length clips
/// laid out contiguously along axis 0 (the fixed-length TSM layout).
Var temporal_shift_grouped(const Var& x, int64_t groups, double fraction);

/// Shift on a packed batch: sequence i occupies `lengths[i]` consecutive
/// frames and is shifted only when `active[i]`; other frames pass through.
Var temporal_shift_packed(const Var& x, const std::vector<int64_t>& lengths, const std::vector<bool>& active,
                          double fraction);

}  // namespace fsr::nn
