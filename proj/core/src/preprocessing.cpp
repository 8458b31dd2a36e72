// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fingerspell/error.hpp"
#include "fingerspell/random.hpp"

namespace fsr {
namespace {

bool is_present(const double* p) { return p[0] != 0.0 || p[1] != 0.0 || p[2] != 0.0; }

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

template <typename Clip>
Clip gather_frames(const Clip& clip, const Tensor& src, const std::vector<int64_t>& idx) {
  Shape shape = src.shape();
  const int64_t frame = src.size() / shape[0];
  shape[0] = static_cast<int64_t>(idx.size());
  Tensor out(shape);
  for (size_t t = 0; t < idx.size(); ++t)
    std::copy_n(src.data() + idx[t] * frame, frame, out.data() + static_cast<int64_t>(t) * frame);
  Clip result = clip;
  if constexpr (std::is_same_v<Clip, KeypointClip>)
    result.coords = std::move(out);
  else
    result.frames = std::move(out);
  return result;
}

void check_rate(double rate) {
  if (!(rate >= 0.5 && rate <= 1.5)) {
    throw std::invalid_argument("resample rate " + std::to_string(rate) + " outside [0.5, 1.5]");
  }
}

}  // namespace

KeypointClip fill_missing(const KeypointClip& clip) {
  KeypointClip out = clip;
  for (auto& v : out.coords.values())
    if (std::isnan(v)) v = 0.0;
  return out;
}

FrameClip normalize_frames(const FrameClip& clip, const std::array<double, 3>& mean,
                           const std::array<double, 3>& std) {
  clip.validate();
  if (clip.channels() != 3) throw ShapeError("normalize_frames expects 3 channels");
  FrameClip out = clip;
  const int64_t plane = clip.height() * clip.width();
  for (int64_t t = 0; t < clip.length(); ++t)
    for (int64_t c = 0; c < 3; ++c) {
      double* p = out.frames.data() + (t * 3 + c) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - mean[c]) / std[c];
    }
  return out;
}

int64_t resampled_length(int64_t length, double rate) {
  check_rate(rate);
  return std::max<int64_t>(1, std::llround(static_cast<double>(length) * rate));
}

std::vector<int64_t> resample_indices(int64_t length, double rate) {
  const int64_t out = resampled_length(length, rate);
  std::vector<int64_t> idx(static_cast<size_t>(out));
  for (int64_t t = 0; t < out; ++t) idx[t] = t * length / out;
  return idx;
}

KeypointClip resample(const KeypointClip& clip, double rate) {
  clip.validate();
  return gather_frames(clip, clip.coords, resample_indices(clip.length(), rate));
}

FrameClip resample(const FrameClip& clip, double rate) {
  clip.validate();
  return gather_frames(clip, clip.frames, resample_indices(clip.length(), rate));
}

std::array<double, 2> present_centroid(const KeypointClip& clip) {
  double sx = 0.0, sy = 0.0;
  int64_t n = 0;
  const int64_t points = clip.coords.size() / 3;
  for (int64_t i = 0; i < points; ++i) {
    const double* p = clip.coords.data() + i * 3;
    if (!is_present(p)) continue;
    sx += p[0];
    sy += p[1];
    ++n;
  }
  if (n == 0) return {0.5, 0.5};
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

KeypointClip spatial_affine(const KeypointClip& clip, const AffineParams& params) {
  clip.validate();
  const auto [cx, cy] = present_centroid(clip);
  const double c = std::cos(radians(params.degrees)), s = std::sin(radians(params.degrees));
  // M = R * Shear * scale
  const double m00 = c * params.scale, m01 = (c * params.shear - s) * params.scale;
  const double m10 = s * params.scale, m11 = (s * params.shear + c) * params.scale;
  KeypointClip out = clip;
  const int64_t points = clip.coords.size() / 3;
  for (int64_t i = 0; i < points; ++i) {
    double* p = out.coords.data() + i * 3;
    if (!is_present(p)) continue;
    const double dx = p[0] - cx, dy = p[1] - cy;
    p[0] = cx + m00 * dx + m01 * dy + params.shift_x;
    p[1] = cy + m10 * dx + m11 * dy + params.shift_y;
  }
  return out;
}

int64_t temporal_mask_length(int64_t length, double size) {
  return std::llround(size * static_cast<double>(length));
}

KeypointClip temporal_mask(const KeypointClip& clip, int64_t start, int64_t count) {
  clip.validate();
  if (start < 0 || count < 0 || start + count > clip.length()) throw std::invalid_argument("temporal_mask: window");
  KeypointClip out = clip;
  const int64_t frame = clip.keypoints() * 3;
  std::fill_n(out.coords.data() + start * frame, count * frame, 0.0);
  return out;
}

KeypointClip spatial_mask(const KeypointClip& clip, const MaskBox& box) {
  clip.validate();
  KeypointClip out = clip;
  const int64_t points = clip.coords.size() / 3;
  for (int64_t i = 0; i < points; ++i) {
    double* p = out.coords.data() + i * 3;
    if (!is_present(p)) continue;
    if (p[0] >= box.x0 && p[0] <= box.x1 && p[1] >= box.y0 && p[1] <= box.y1) p[0] = p[1] = p[2] = 0.0;
  }
  return out;
}

MaskBox sample_mask_box(const KeypointClip& clip, double size, Rng& rng) {
  double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
  const int64_t points = clip.coords.size() / 3;
  for (int64_t i = 0; i < points; ++i) {
    const double* p = clip.coords.data() + i * 3;
    if (!is_present(p)) continue;
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  if (xmin > xmax) return {1.0, 1.0, 0.0, 0.0};  // nothing present: empty box
  const double w = size * (xmax - xmin), h = size * (ymax - ymin);
  const double x0 = rng.uniform(xmin, xmax - w), y0 = rng.uniform(ymin, ymax - h);
  return {x0, y0, x0 + w, y0 + h};
}

KeypointClip horizontal_flip(const KeypointClip& clip) {
  clip.validate();
  const auto perm = clip.layout.flip_permutation();
  const int64_t k = clip.keypoints();
  KeypointClip out = clip;
  for (int64_t t = 0; t < clip.length(); ++t)
    for (int64_t j = 0; j < k; ++j) {
      const double* src = clip.coords.data() + (t * k + perm[j]) * 3;
      double* dst = out.coords.data() + (t * k + j) * 3;
      dst[0] = is_present(src) ? 1.0 - src[0] : src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  return out;
}

FrameClip horizontal_flip(const FrameClip& clip) {
  clip.validate();
  FrameClip out = clip;
  const int64_t rows = clip.length() * clip.channels() * clip.height(), w = clip.width();
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = clip.frames.data() + r * w;
    double* dst = out.frames.data() + r * w;
    for (int64_t x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
  }
  return out;
}

FrameClip rotate_frames(const FrameClip& clip, double degrees) {
  clip.validate();
  if (degrees == 0.0) return clip;
  const int64_t planes = clip.length() * clip.channels(), h = clip.height(), w = clip.width();
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
  const double c = std::cos(radians(degrees)), s = std::sin(radians(degrees));
  FrameClip out{Tensor(clip.frames.shape())};
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      // inverse map: destination pixel back into the source frame
      const double dx = static_cast<double>(j) - cx, dy = static_cast<double>(i) - cy;
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      const auto x0 = static_cast<int64_t>(std::floor(sx)), y0 = static_cast<int64_t>(std::floor(sy));
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      const int64_t xs[2] = {x0, x0 + 1}, ys[2] = {y0, y0 + 1};
      const double wx[2] = {1.0 - fx, fx}, wy[2] = {1.0 - fy, fy};
      for (int64_t p = 0; p < planes; ++p) {
        const double* src = clip.frames.data() + p * h * w;
        double acc = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            if (ys[a] >= 0 && ys[a] < h && xs[b] >= 0 && xs[b] < w) acc += wy[a] * wx[b] * src[ys[a] * w + xs[b]];
        out.frames[p * h * w + i * w + j] = acc;
      }
    }
  return out;
}

void AugmentSpec::validate() const {
  for (double p : {resample_p, affine_p, temporal_mask_p, spatial_mask_p, flip_p, rotation_p})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probability outside [0, 1]");
  for (const Range& r : {resample_rate, affine_scale, affine_shear, affine_shift, affine_degrees, temporal_mask_size,
                         spatial_mask_size, rotation_degrees})
    if (!(r.lo <= r.hi)) throw ConfigError("augmentation range with lo > hi");
  if (resample_rate.lo < 0.5 || resample_rate.hi > 1.5) throw ConfigError("resample rate range must lie in [0.5, 1.5]");
  if (temporal_mask_size.lo < 0.0 || temporal_mask_size.hi > 0.4) {
    throw ConfigError("temporal mask size must lie in [0, 0.4]");
  }
}

AugmentSpec AugmentSpec::disabled() {
  AugmentSpec spec;
  spec.resample_p = spec.affine_p = spec.temporal_mask_p = spec.spatial_mask_p = spec.flip_p = spec.rotation_p = 0.0;
  return spec;
}

Sample apply_pipeline(const Sample& sample, const AugmentSpec& spec, uint64_t seed) {
  Rng rng(seed);
  Sample out = sample;
  const bool kp = out.keypoints.has_value();
  const bool rgb = out.frames.has_value();
  const bool kp_only = kp && !rgb;

  // Every draw happens regardless of gating so that streams stay aligned.
  auto u = [&](const AugmentSpec::Range& r) { return rng.uniform(r.lo, r.hi); };

  const bool do_resample = rng.bernoulli(spec.resample_p);
  const double rate = u(spec.resample_rate);
  if (do_resample && kp) {
    out.keypoints = resample(*out.keypoints, rate);
    if (rgb) out.frames = resample(*out.frames, rate);
  }

  const bool do_affine = rng.bernoulli(spec.affine_p);
  AffineParams ap{u(spec.affine_scale), u(spec.affine_shear), u(spec.affine_shift), u(spec.affine_shift),
                  u(spec.affine_degrees)};
  if (do_affine && kp_only) out.keypoints = spatial_affine(*out.keypoints, ap);

  const bool do_tmask = rng.bernoulli(spec.temporal_mask_p);
  const double tsize = u(spec.temporal_mask_size);
  const double tpos = rng.uniform();
  if (do_tmask && kp_only) {
    const int64_t len = out.keypoints->length();
    const int64_t count = temporal_mask_length(len, tsize);
    const auto start = static_cast<int64_t>(std::floor(tpos * static_cast<double>(len - count + 1)));
    out.keypoints = temporal_mask(*out.keypoints, std::min(start, len - count), count);
  }

  const bool do_smask = rng.bernoulli(spec.spatial_mask_p);
  const double ssize = u(spec.spatial_mask_size);
  Rng box_rng(rng.next());
  if (do_smask && kp_only) out.keypoints = spatial_mask(*out.keypoints, sample_mask_box(*out.keypoints, ssize, box_rng));

  if (rng.bernoulli(spec.flip_p)) {
    if (kp) out.keypoints = horizontal_flip(*out.keypoints);
    if (rgb) out.frames = horizontal_flip(*out.frames);
  }

  const bool do_rotate = rng.bernoulli(spec.rotation_p);
  const double angle = u(spec.rotation_degrees);
  if (do_rotate && rgb) out.frames = rotate_frames(*out.frames, angle);

  return out;
}

}  // namespace fsr
