// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/tpe.hpp"

#include "fingerspell/error.hpp"
#include "fingerspell/ops.hpp"
#include "fingerspell/params.hpp"

namespace fsr {
namespace {

/// 1 where the index along `time_axis` is below the clip's length, else 0.
/// Axis 0 indexes the clip.
Tensor frame_mask(const Shape& shape, int time_axis, const std::vector<int64_t>& lengths) {
  Tensor m(shape);
  int64_t inner = 1;
  for (size_t a = static_cast<size_t>(time_axis) + 1; a < shape.size(); ++a) inner *= shape[a];
  int64_t outer = 1;  // axes between the clip axis and the time axis
  for (int a = 1; a < time_axis; ++a) outer *= shape[static_cast<size_t>(a)];
  const int64_t n = shape[static_cast<size_t>(time_axis)];
  for (int64_t b = 0; b < shape[0]; ++b)
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t t = 0; t < std::min(n, lengths[static_cast<size_t>(b)]); ++t)
        std::fill_n(m.data() + ((b * outer + o) * n + t) * inner, inner, 1.0);
  return m;
}

Var masked(const Var& x, int time_axis, const std::vector<int64_t>& lengths) {
  return nn::mul_const(x, frame_mask(x.shape(), time_axis, lengths));
}

}  // namespace

int64_t TpeConfig::tube_extent() const { return nn::conv_out_extent(c2, tube_kernel, tube_stride, 0); }

std::vector<int64_t> TpeConfig::keypoint_indices(const KeypointLayout& layout) const {
  std::vector<int64_t> idx;
  if (groups.empty()) {
    for (int64_t k = 0; k < layout.total(); ++k) idx.push_back(k);
    return idx;
  }
  for (const auto& g : groups) {
    auto part = layout.group_indices(g);
    idx.insert(idx.end(), part.begin(), part.end());
  }
  return idx;
}

void TpeConfig::validate() const {
  if (c1 < 1 || c2 < 1 || feature_dim < 1) throw ConfigError("tpe channel counts must be positive");
  if (tube_kernel < 1 || tube_stride < 1 || tube_kernel > c2) throw ConfigError("tpe tube kernel/stride invalid");
  if (conv_modules < 0) throw ConfigError("tpe.conv_modules must be >= 0");
  if (conv_module_kernel < 1 || conv_module_kernel % 2 == 0) throw ConfigError("tpe.conv_module_kernel must be odd");
  if (conv_module_expansion < 2 || conv_module_expansion % 2 != 0) {
    throw ConfigError("tpe.conv_module_expansion must be even and >= 2");
  }
}

void add_tpe_params(ParamSet& params, const TpeConfig& cfg, const KeypointLayout& layout, Rng& rng,
                    const std::string& prefix) {
  cfg.validate();
  const auto k = static_cast<int64_t>(cfg.keypoint_indices(layout).size());
  params.add_uniform(prefix + ".conv1.w", {cfg.c1, 3, 3, 3}, 3 * 9, rng);
  params.add_zeros(prefix + ".conv1.b", {cfg.c1});
  params.add_uniform(prefix + ".conv2.w", {cfg.c2, cfg.c1, 3, 3}, cfg.c1 * 9, rng);
  params.add_zeros(prefix + ".conv2.b", {cfg.c2});
  params.add_uniform(prefix + ".tube.w", {1, 1, cfg.tube_kernel, 1, 1}, cfg.tube_kernel, rng);
  params.add_zeros(prefix + ".tube.b", {1});
  const int64_t flat = cfg.tube_extent() * k;
  params.add_uniform(prefix + ".proj.w", {cfg.feature_dim, flat}, flat, rng);
  params.add_zeros(prefix + ".proj.b", {cfg.feature_dim});
  for (int i = 0; i < cfg.conv_modules; ++i) {
    add_conv_module_params(params, prefix + ".cm" + std::to_string(i), cfg.feature_dim, cfg.conv_module_kernel,
                           cfg.conv_module_expansion, rng);
  }
}

Var tpe_forward(const Var& coords, const std::vector<int64_t>& lengths, const TpeConfig& cfg,
                const KeypointLayout& layout, const ParamSet& params, const std::string& prefix) {
  if (coords.value().rank() != 4 || coords.dim(1) != 3) throw ShapeError("tpe_forward expects (bs, 3, N, K)");
  const int64_t bs = coords.dim(0), n = coords.dim(2);
  if (static_cast<int64_t>(lengths.size()) != bs) throw ShapeError("tpe_forward: one length per clip");
  if (coords.dim(3) != layout.total()) {
    throw ShapeError("tpe_forward: batch has " + std::to_string(coords.dim(3)) + " keypoints, layout expects " +
                     std::to_string(layout.total()));
  }
  const auto idx = cfg.keypoint_indices(layout);
  const auto k = static_cast<int64_t>(idx.size());
  const int64_t flat = params.get(prefix + ".proj.w").dim(1);
  if (flat != cfg.tube_extent() * k) throw ShapeError("tpe_forward: keypoint count does not match the parameters");

  Var x = cfg.groups.empty() ? coords : nn::select_last(coords, idx);
  const nn::ConvSpec same{{1, 1}, {1, 1}, 1};
  x = masked(nn::silu(nn::conv(x, params.get(prefix + ".conv1.w"), params.get(prefix + ".conv1.b"), same)), 2, lengths);
  x = masked(nn::silu(nn::conv(x, params.get(prefix + ".conv2.w"), params.get(prefix + ".conv2.b"), same)), 2, lengths);
  x = nn::reshape(x, {bs, 1, cfg.c2, n, k});
  x = nn::conv(x, params.get(prefix + ".tube.w"), params.get(prefix + ".tube.b"), {{cfg.tube_stride, 1, 1}, {0, 0, 0}, 1});
  x = masked(nn::silu(x), 3, lengths);
  const int64_t e = x.dim(2);
  x = nn::reshape(nn::permute(nn::reshape(x, {bs, e, n, k}), {0, 2, 1, 3}), {bs, n, e * k});
  x = nn::linear(x, params.get(prefix + ".proj.w"), params.get(prefix + ".proj.b"));
  return masked(x, 1, lengths);
}

Var tpe_forward(const PaddedKeypointBatch& batch, const TpeConfig& cfg, const KeypointLayout& layout,
                const ParamSet& params, const std::string& prefix) {
  return tpe_forward(Var(batch.coords), batch.lengths, cfg, layout, params, prefix);
}

void add_conv_module_params(ParamSet& params, const std::string& name, int64_t dim, int64_t kernel,
                            int64_t expansion, Rng& rng) {
  const int64_t inner = expansion * dim / 2;
  params.add_constant(name + ".ln1.g", {dim}, 1.0);
  params.add_zeros(name + ".ln1.b", {dim});
  params.add_uniform(name + ".pw1.w", {expansion * dim, dim}, dim, rng);
  params.add_zeros(name + ".pw1.b", {expansion * dim});
  params.add_uniform(name + ".dw.w", {inner, 1, kernel}, kernel, rng);
  params.add_zeros(name + ".dw.b", {inner});
  params.add_constant(name + ".ln2.g", {inner}, 1.0);
  params.add_zeros(name + ".ln2.b", {inner});
  params.add_uniform(name + ".pw2.w", {dim, inner}, inner, rng);
  params.add_zeros(name + ".pw2.b", {dim});
}

Var conv_module(const Var& x, const ParamSet& p, const std::string& name) {
  if (x.value().rank() != 2) throw ShapeError("conv_module expects (T, F)");
  const int64_t t = x.dim(0);
  Var y = nn::layer_norm(x, p.get(name + ".ln1.g"), p.get(name + ".ln1.b"));
  y = nn::glu(nn::linear(y, p.get(name + ".pw1.w"), p.get(name + ".pw1.b")));
  const int64_t c = y.dim(1);
  const auto& dw = p.get(name + ".dw.w");
  y = nn::reshape(nn::permute(y, {1, 0}), {1, c, t});
  y = nn::conv(y, dw, p.get(name + ".dw.b"), {{1}, {dw.dim(2) / 2}, c});
  y = nn::permute(nn::reshape(y, {c, t}), {1, 0});
  y = nn::silu(nn::layer_norm(y, p.get(name + ".ln2.g"), p.get(name + ".ln2.b")));
  y = nn::linear(y, p.get(name + ".pw2.w"), p.get(name + ".pw2.b"));
  return nn::add(x, y);
}

std::vector<Var> tpe_encode(const PaddedKeypointBatch& batch, const TpeConfig& cfg, const KeypointLayout& layout,
                            const ParamSet& params, const std::string& prefix) {
  Var feats = tpe_forward(batch, cfg, layout, params, prefix);
  const int64_t f = feats.dim(2);
  std::vector<Var> out;
  for (size_t i = 0; i < batch.lengths.size(); ++i) {
    const int64_t len = batch.lengths[i];
    Var seq = nn::reshape(nn::slice(nn::slice(feats, 0, static_cast<int64_t>(i), 1), 1, 0, len), {len, f});
    for (int m = 0; m < cfg.conv_modules; ++m) seq = conv_module(seq, params, prefix + ".cm" + std::to_string(m));
    out.push_back(seq);
  }
  return out;
}

}  // namespace fsr
