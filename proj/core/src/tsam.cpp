// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/tsam.hpp"

#include <cmath>

#include "fingerspell/error.hpp"
#include "fingerspell/ops.hpp"
#include "fingerspell/params.hpp"

namespace fsr {

ShiftType parse_shift_type(const std::string& s) {
  if (s == "tsam") return ShiftType::tsam;
  if (s == "tsm") return ShiftType::tsm;
  if (s == "none") return ShiftType::none;
  throw ConfigError("unknown shift type '" + s + "' (expected tsam, tsm or none)");
}

Reduction parse_reduction(const std::string& s) {
  if (s == "avgpool") return Reduction::avgpool;
  if (s == "flatten") return Reduction::flatten;
  throw ConfigError("unknown reduction '" + s + "' (expected avgpool or flatten)");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "silu") return Activation::silu;
  throw ConfigError("unknown activation '" + s + "' (expected relu or silu)");
}

std::string to_string(ShiftType v) {
  switch (v) {
    case ShiftType::tsam: return "tsam";
    case ShiftType::tsm: return "tsm";
    case ShiftType::none: return "none";
  }
  return "?";
}

std::string to_string(Reduction v) { return v == Reduction::avgpool ? "avgpool" : "flatten"; }
std::string to_string(Activation v) { return v == Activation::relu ? "relu" : "silu"; }

namespace {

int64_t conv3_extent(int64_t in, int64_t stride) { return nn::conv_out_extent(in, 3, stride, 1); }

Var activate(const Var& x, Activation a) { return a == Activation::relu ? nn::relu(x) : nn::silu(x); }

Var conv_norm(const Var& x, const ParamSet& p, const std::string& name, int64_t kernel, int64_t stride) {
  const int64_t pad = kernel / 2;
  Var y = nn::conv(x, p.get(name + ".w"), Var(), {{stride, stride}, {pad, pad}, 1});
  return nn::frame_norm(y, p.get(name + ".g"), p.get(name + ".b"));
}

void add_conv_norm(ParamSet& p, const std::string& name, int64_t in, int64_t out, int64_t kernel, Rng& rng) {
  p.add_uniform(name + ".w", {out, in, kernel, kernel}, in * kernel * kernel, rng);
  p.add_constant(name + ".g", {out}, 1.0);
  p.add_zeros(name + ".b", {out});
}

bool needs_projection(int64_t in, const TsamBlock& b) { return in != b.channels || b.stride != 1; }

int64_t reduced_width(const TsamConfig& cfg) {
  const auto [c, h, w] = cfg.backbone_output();
  return cfg.reduction == Reduction::avgpool ? c : c * h * w;
}

/// (L, D) -> (L, F) with a zero-padded 1D convolution over time.
Var temporal_conv(const Var& seq, const ParamSet& p, const std::string& prefix, int64_t kernel) {
  const int64_t len = seq.dim(0), d = seq.dim(1);
  Var x = nn::reshape(nn::permute(seq, {1, 0}), {1, d, len});
  Var y = nn::conv(x, p.get(prefix + ".temporal.w"), p.get(prefix + ".temporal.b"), {{1}, {kernel / 2}, 1});
  const int64_t f = y.dim(1);
  return nn::permute(nn::reshape(y, {f, len}), {1, 0});
}

}  // namespace

std::array<int64_t, 3> TsamConfig::backbone_output() const {
  int64_t h = conv3_extent(input_size, stem_stride), w = h, c = stem_channels;
  for (const auto& b : blocks) {
    h = conv3_extent(h, b.stride);
    w = conv3_extent(w, b.stride);
    c = b.channels;
  }
  return {c, h, w};
}

void TsamConfig::validate() const {
  if (blocks.empty()) throw ConfigError("tsam needs at least one block");
  if (in_channels < 1 || stem_channels < 1 || stem_stride < 1 || feature_dim < 1 || input_size < 1) {
    throw ConfigError("tsam sizes must be positive");
  }
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0) throw ConfigError("tsam.temporal_kernel must be odd");
  if (!(shift_fraction >= 0.0 && shift_fraction <= 0.5)) throw ConfigError("tsam.shift_fraction must lie in [0, 0.5]");
  int64_t in = stem_channels;
  for (const auto& b : blocks) {
    if (b.channels < 1 || b.stride < 1) throw ConfigError("tsam block sizes must be positive");
    const double shifted = 2.0 * shift_fraction * static_cast<double>(in);
    if (std::abs(shifted - std::round(shifted)) > 1e-9) {
      throw ConfigError("tsam.shift_fraction " + std::to_string(shift_fraction) + " does not give an integer " +
                        "channel count for a block with " + std::to_string(in) + " channels");
    }
    in = b.channels;
  }
  const auto out = backbone_output();
  if (out[1] < 1 || out[2] < 1) throw ConfigError("tsam input too small for the block strides");
}

TsamConfig TsamConfig::tiny(int64_t feature_dim) {
  TsamConfig cfg;
  cfg.feature_dim = feature_dim;
  return cfg;
}

TsamConfig TsamConfig::resnet34(int64_t feature_dim, int64_t input_size) {
  TsamConfig cfg;
  cfg.feature_dim = feature_dim;
  cfg.input_size = input_size;
  cfg.stem_channels = 64;
  cfg.activation = Activation::relu;
  cfg.blocks.clear();
  const std::array<std::pair<int, int64_t>, 4> stages{{{3, 64}, {4, 128}, {6, 256}, {3, 512}}};
  for (size_t s = 0; s < stages.size(); ++s)
    for (int i = 0; i < stages[s].first; ++i) cfg.blocks.push_back({stages[s].second, (s > 0 && i == 0) ? 2 : 1});
  return cfg;
}

void add_tsam_params(ParamSet& params, const TsamConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  add_conv_norm(params, prefix + ".stem", cfg.in_channels, cfg.stem_channels, 3, rng);
  int64_t in = cfg.stem_channels;
  for (size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& b = cfg.blocks[i];
    const std::string name = prefix + ".b" + std::to_string(i);
    add_conv_norm(params, name + ".conv1", in, b.channels, 3, rng);
    add_conv_norm(params, name + ".conv2", b.channels, b.channels, 3, rng);
    if (needs_projection(in, b)) add_conv_norm(params, name + ".down", in, b.channels, 1, rng);
    in = b.channels;
  }
  const int64_t d = reduced_width(cfg);
  params.add_uniform(prefix + ".temporal.w", {cfg.feature_dim, d, cfg.temporal_kernel}, d * cfg.temporal_kernel, rng);
  params.add_zeros(prefix + ".temporal.b", {cfg.feature_dim});
}

std::vector<Var> tsam_forward(const Var& frames, const std::vector<int64_t>& lengths, const TsamConfig& cfg,
                              const ParamSet& params, TsamTrace* trace, const std::string& prefix) {
  if (frames.value().rank() != 4) throw ShapeError("tsam_forward expects packed frames (bs, C, H, W)");
  if (lengths.empty()) throw ShapeError("tsam_forward: empty length list");
  int64_t total = 0, longest = 0;
  for (auto l : lengths) {
    if (l < 1) throw ShapeError("tsam_forward: sequence length " + std::to_string(l));
    total += l;
    longest = std::max(longest, l);
  }
  if (total != frames.dim(0)) {
    throw ShapeError("tsam_forward: lengths sum to " + std::to_string(total) + " but the batch holds " +
                     std::to_string(frames.dim(0)) + " frames");
  }
  const size_t n = lengths.size();
  const bool padded = cfg.shift_type == ShiftType::tsm;

  // The padded baseline materialises every clip at the longest length.
  Var x = frames;
  std::vector<int64_t> run_lengths = lengths;
  if (padded) {
    const auto& s = frames.shape();
    const int64_t frame = s[1] * s[2] * s[3];
    Tensor pad({static_cast<int64_t>(n) * longest, s[1], s[2], s[3]});
    int64_t at = 0;
    for (size_t i = 0; i < n; ++i) {
      std::copy_n(frames.value().data() + at * frame, lengths[i] * frame,
                  pad.data() + static_cast<int64_t>(i) * longest * frame);
      at += lengths[i];
    }
    x = Var(std::move(pad));
    run_lengths.assign(n, longest);
  }

  std::vector<int64_t> counter(n, 0);
  x = activate(conv_norm(x, params, prefix + ".stem", 3, cfg.stem_stride), cfg.activation);
  int64_t in = cfg.stem_channels;
  for (size_t bi = 0; bi < cfg.blocks.size(); ++bi) {
    const auto& b = cfg.blocks[bi];
    const std::string name = prefix + ".b" + std::to_string(bi);
    Var branch = x;
    if (cfg.shift_type == ShiftType::tsam) {
      std::vector<bool> active(n);
      bool any = false;
      for (size_t i = 0; i < n; ++i) {
        active[i] = !cfg.count_shift || counter[i] < lengths[i];
        if (active[i]) ++counter[i];
        any = any || active[i];
      }
      if (any) branch = nn::temporal_shift_packed(x, run_lengths, active, cfg.shift_fraction);
    } else if (cfg.shift_type == ShiftType::tsm) {
      branch = nn::temporal_shift_grouped(x, static_cast<int64_t>(n), cfg.shift_fraction);
      for (auto& c : counter) ++c;
    }
    Var y = activate(conv_norm(branch, params, name + ".conv1", 3, b.stride), cfg.activation);
    y = conv_norm(y, params, name + ".conv2", 3, 1);
    Var shortcut = needs_projection(in, b) ? conv_norm(x, params, name + ".down", 1, b.stride) : x;
    x = activate(nn::add(y, shortcut), cfg.activation);
    in = b.channels;
  }
  if (trace) trace->shifts = counter;

  Var feats = cfg.reduction == Reduction::avgpool ? nn::spatial_mean(x)
                                                   : nn::reshape(x, {x.dim(0), x.value().size() / x.dim(0)});
  std::vector<Var> out;
  out.reserve(n);
  int64_t at = 0;
  for (size_t i = 0; i < n; ++i) {
    Var seq = temporal_conv(nn::slice(feats, 0, at, run_lengths[i]), params, prefix, cfg.temporal_kernel);
    if (padded) seq = nn::slice(seq, 0, 0, lengths[i]);
    out.push_back(seq);
    at += run_lengths[i];
  }
  return out;
}

std::vector<Var> tsam_forward(const PackedFrameBatch& batch, const TsamConfig& cfg, const ParamSet& params,
                              TsamTrace* trace, const std::string& prefix) {
  batch.validate();
  return tsam_forward(Var(batch.frames), batch.lengths, cfg, params, trace, prefix);
}

}  // namespace fsr
