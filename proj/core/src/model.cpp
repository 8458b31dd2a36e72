// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/model.hpp"

#include "fingerspell/error.hpp"
#include "fingerspell/ops.hpp"
#include "fingerspell/random.hpp"

namespace fsr {

Modality parse_modality(const std::string& s) {
  if (s == "rgb") return Modality::rgb;
  if (s == "kp") return Modality::kp;
  if (s == "rgb+kp") return Modality::rgb_kp;
  throw ConfigError("unknown modality '" + s + "' (expected rgb, kp or rgb+kp)");
}

Fusion parse_fusion(const std::string& s) {
  if (s == "sum") return Fusion::sum;
  if (s == "concat") return Fusion::concat;
  if (s == "product") return Fusion::product;
  if (s == "weighted") return Fusion::weighted;
  throw ConfigError("unknown fusion '" + s + "' (expected sum, concat, product or weighted)");
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::rgb: return "rgb";
    case Modality::kp: return "kp";
    case Modality::rgb_kp: return "rgb+kp";
  }
  return "?";
}

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::sum: return "sum";
    case Fusion::concat: return "concat";
    case Fusion::product: return "product";
    case Fusion::weighted: return "weighted";
  }
  return "?";
}

int64_t ModelConfig::decoder_input_dim() const {
  return modality == Modality::rgb_kp && fusion == Fusion::concat ? 2 * feature_dim : feature_dim;
}

void ModelConfig::finalize() {
  tsam.feature_dim = feature_dim;
  tsam.input_size = input.size;
  tpe.feature_dim = feature_dim;
  validate();
}

void ModelConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("model.feature_dim must be positive");
  if (tsam.feature_dim != feature_dim || tpe.feature_dim != feature_dim) {
    throw ConfigError("rgb and keypoint encoders must emit the same feature width");
  }
  if (input.size < 1) throw ConfigError("input.size must be positive");
  for (double s : input.std)
    if (!(s > 0.0)) throw ConfigError("input.std entries must be positive");
  make_alphabet();
  layout.validate();
  if (uses_rgb()) tsam.validate();
  if (uses_kp()) tpe.validate();
  decoder.validate();
}

Var fuse(const Var& rgb, const Var& kp, Fusion mode, const std::array<double, 2>& weights) {
  if (rgb.shape() != kp.shape()) {
    throw ShapeError("cannot fuse streams of shape " + shape_string(rgb.shape()) + " and " + shape_string(kp.shape()) +
                     "; rgb and keypoint inputs must be time-aligned");
  }
  switch (mode) {
    case Fusion::sum: return nn::add(rgb, kp);
    case Fusion::concat: return nn::concat({rgb, kp}, rgb.value().rank() - 1);
    case Fusion::product: return nn::mul(rgb, kp);
    case Fusion::weighted: return nn::add(nn::scale(rgb, weights[0]), nn::scale(kp, weights[1]));
  }
  throw ConfigError("unknown fusion mode");
}

Sample sanitize_sample(const Sample& sample, const ModelConfig& cfg) {
  Sample out = sample;
  if (cfg.uses_kp()) {
    if (!out.keypoints) throw DataError("sample has no keypoint clip");
    out.keypoints = fill_missing(*out.keypoints);
  } else {
    out.keypoints.reset();
  }
  if (cfg.uses_rgb()) {
    if (!out.frames) throw DataError("sample has no frame clip");
    const FrameClip& f = *out.frames;
    f.validate();
    const int64_t s = cfg.input.size;
    if (f.channels() != 3) throw DataError("frame clip has " + std::to_string(f.channels()) + " channels, expected 3");
    if (f.height() < s || f.width() < s) {
      throw DataError("frames of " + std::to_string(f.height()) + "x" + std::to_string(f.width()) +
                      " are smaller than input.size " + std::to_string(s));
    }
    if (f.height() != s || f.width() != s) {
      const int64_t y0 = (f.height() - s) / 2, x0 = (f.width() - s) / 2;
      FrameClip crop{Tensor({f.length(), 3, s, s})};
      for (int64_t p = 0; p < f.length() * 3; ++p)
        for (int64_t y = 0; y < s; ++y)
          std::copy_n(f.frames.data() + (p * f.height() + y0 + y) * f.width() + x0, s,
                      crop.frames.data() + (p * s + y) * s);
      out.frames = std::move(crop);
    }
  } else {
    out.frames.reset();
  }
  if (out.keypoints && out.frames && out.keypoints->length() != out.frames->length()) {
    throw DataError("keypoint clip has " + std::to_string(out.keypoints->length()) + " frames but frame clip has " +
                    std::to_string(out.frames->length()) + "; the streams must be time-aligned");
  }
  return out;
}

Sample normalize_sample(const Sample& sample, const ModelConfig& cfg) {
  Sample out = sample;
  if (out.frames) out.frames = normalize_frames(*out.frames, cfg.input.mean, cfg.input.std);
  return out;
}

void add_model_params(ParamSet& params, const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (cfg.uses_rgb()) {
    Rng rng(derive_seed(seed, "tsam"));
    add_tsam_params(params, cfg.tsam, rng);
  }
  if (cfg.uses_kp()) {
    Rng rng(derive_seed(seed, "tpe"));
    add_tpe_params(params, cfg.tpe, cfg.layout, rng);
  }
  Rng rng(derive_seed(seed, "decoder"));
  add_decoder_params(params, cfg.decoder, cfg.decoder_input_dim(), cfg.make_alphabet().num_classes(), rng);
  params.round_to_storage();
}

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) { add_model_params(params_, cfg_, seed); }

Model::Model(ModelConfig cfg, ParamSet params) : cfg_(std::move(cfg)) {
  ParamSet expected;
  add_model_params(expected, cfg_, 0);
  if (expected.count() != params.count()) {
    throw DataError("parameter count " + std::to_string(params.count()) + " does not match the model (" +
                    std::to_string(expected.count()) + ")");
  }
  for (const auto& e : expected.entries()) {
    const Var found = params.find(e.name);
    if (!found.defined()) throw DataError("missing parameter " + e.name);
    if (found.shape() != e.var.shape()) {
      throw DataError("parameter " + e.name + " has shape " + shape_string(found.shape()) + ", expected " +
                      shape_string(e.var.shape()));
    }
  }
  params_ = std::move(params);
}

std::vector<Var> Model::encode(const std::vector<Sample>& batch) const {
  if (batch.empty()) throw ShapeError("empty batch");
  std::vector<Var> rgb, kp;
  if (cfg_.uses_rgb()) {
    std::vector<FrameClip> clips;
    for (const auto& s : batch) {
      if (!s.frames) throw DataError("sample has no frame clip");
      clips.push_back(*s.frames);
    }
    rgb = tsam_forward(pack_batch(clips), cfg_.tsam, params_);
  }
  if (cfg_.uses_kp()) {
    std::vector<KeypointClip> clips;
    for (const auto& s : batch) {
      if (!s.keypoints) throw DataError("sample has no keypoint clip");
      clips.push_back(*s.keypoints);
    }
    kp = tpe_encode(pad_keypoint_batch(clips), cfg_.tpe, cfg_.layout, params_);
  }
  if (cfg_.modality == Modality::rgb) return rgb;
  if (cfg_.modality == Modality::kp) return kp;
  std::vector<Var> out;
  for (size_t i = 0; i < batch.size(); ++i) {
    if (rgb[i].dim(0) != kp[i].dim(0)) {
      throw DataError("rgb and keypoint streams differ in length (" + std::to_string(rgb[i].dim(0)) + " vs " +
                      std::to_string(kp[i].dim(0)) + ")");
    }
    out.push_back(fuse(rgb[i], kp[i], cfg_.fusion, cfg_.fusion_weights));
  }
  return out;
}

std::vector<Var> Model::forward(const std::vector<Sample>& batch) const {
  std::vector<Var> out;
  for (const Var& f : encode(batch)) out.push_back(decode_head(f, f.dim(0), cfg_.decoder, params_));
  return out;
}

}  // namespace fsr
