// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "fingerspell/error.hpp"
#include "fingerspell/ops.hpp"
#include "fingerspell/params.hpp"

namespace fsr {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_lp(const Tensor& lp) {
  if (lp.rank() != 2 || lp.dim(0) < 1 || lp.dim(1) < 1) {
    throw ShapeError("log-probabilities must be (T, V) with T >= 1, got " + shape_string(lp.shape()));
  }
}

}  // namespace

nn::RnnSpec DecoderConfig::rnn_spec(int64_t input_dim) const {
  nn::RnnSpec spec;
  spec.kind = rnn;
  spec.input_dim = input_dim;
  spec.hidden = hidden;
  spec.layers = layers;
  spec.bidirectional = bidirectional;
  return spec;
}

void DecoderConfig::validate() const {
  if (rnn == nn::RnnKind::none) return;
  if (layers < 1) throw ConfigError("decoder.layers must be >= 1 when an RNN is used");
  if (hidden < 1) throw ConfigError("decoder.hidden must be >= 1");
}

void add_decoder_params(ParamSet& params, const DecoderConfig& cfg, int64_t input_dim, int64_t num_classes, Rng& rng,
                        const std::string& prefix) {
  cfg.validate();
  const auto spec = cfg.rnn_spec(input_dim);
  nn::add_rnn_params(params, prefix + ".rnn", spec, rng);
  const int64_t d = spec.output_dim();
  params.add_uniform(prefix + ".out.w", {num_classes, d}, d, rng);
  params.add_zeros(prefix + ".out.b", {num_classes});
}

Var decode_head(const Var& features, int64_t length, const DecoderConfig& cfg, const ParamSet& params,
                const std::string& prefix) {
  if (features.value().rank() != 2) throw ShapeError("decode_head expects (T, F)");
  if (length < 1 || length > features.dim(0)) throw ShapeError("decode_head: length out of range");
  const auto spec = cfg.rnn_spec(features.dim(1));
  const auto& w = params.get(prefix + ".out.w");
  if (w.dim(1) != spec.output_dim()) {
    throw ShapeError("decode_head: feature width " + std::to_string(features.dim(1)) + " does not match the head");
  }
  Var h = nn::rnn_forward(features, length, spec, params, prefix + ".rnn");
  return nn::log_softmax(nn::linear(h, w, params.get(prefix + ".out.b")));
}

int64_t ctc_min_frames(const LabelSequence& label) {
  int64_t n = static_cast<int64_t>(label.size());
  for (size_t i = 1; i < label.size(); ++i)
    if (label.ids[i] == label.ids[i - 1]) ++n;
  return n;
}

CtcResult ctc_forward_backward(const Tensor& lp, const LabelSequence& label, bool with_grad) {
  check_lp(lp);
  const int64_t t_len = lp.dim(0), v = lp.dim(1);
  for (auto id : label.ids)
    if (id < 1 || id >= v) throw ShapeError("label index " + std::to_string(id) + " outside the class range");
  if (t_len < ctc_min_frames(label)) {
    throw InfeasibleAlignment("label of length " + std::to_string(label.size()) + " needs at least " +
                              std::to_string(ctc_min_frames(label)) + " frames, got " + std::to_string(t_len));
  }
  // blank-interleaved label: b l1 b l2 ... b
  const auto s_len = static_cast<int64_t>(2 * label.size() + 1);
  std::vector<int32_t> ext(static_cast<size_t>(s_len), Alphabet::kBlank);
  for (size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label.ids[i];
  auto skip_allowed = [&](int64_t s) { return s >= 2 && ext[s] != Alphabet::kBlank && ext[s] != ext[s - 2]; };
  auto at = [&](int64_t t, int64_t s) { return lp[t * v + ext[s]]; };

  std::vector<double> alpha(static_cast<size_t>(t_len * s_len), kNegInf);
  alpha[0] = at(0, 0);
  if (s_len > 1) alpha[1] = at(0, 1);
  for (int64_t t = 1; t < t_len; ++t)
    for (int64_t s = 0; s < s_len; ++s) {
      const double* prev = alpha.data() + (t - 1) * s_len;
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (skip_allowed(s)) acc = log_add(acc, prev[s - 2]);
      if (acc != kNegInf) alpha[t * s_len + s] = acc + at(t, s);
    }
  const double* last = alpha.data() + (t_len - 1) * s_len;
  const double log_p = s_len > 1 ? log_add(last[s_len - 1], last[s_len - 2]) : last[0];

  CtcResult r;
  r.loss = -log_p;
  if (!with_grad) return r;

  // beta excludes the emission at its own frame
  std::vector<double> beta(static_cast<size_t>(t_len * s_len), kNegInf);
  beta[(t_len - 1) * s_len + s_len - 1] = 0.0;
  if (s_len > 1) beta[(t_len - 1) * s_len + s_len - 2] = 0.0;
  for (int64_t t = t_len - 2; t >= 0; --t)
    for (int64_t s = 0; s < s_len; ++s) {
      const double* next = beta.data() + (t + 1) * s_len;
      double acc = next[s] + at(t + 1, s);
      if (s + 1 < s_len) acc = log_add(acc, next[s + 1] + at(t + 1, s + 1));
      if (s + 2 < s_len && skip_allowed(s + 2)) acc = log_add(acc, next[s + 2] + at(t + 1, s + 2));
      beta[t * s_len + s] = acc;
    }
  r.grad = Tensor(lp.shape());
  for (int64_t t = 0; t < t_len; ++t)
    for (int64_t s = 0; s < s_len; ++s) {
      const double a = alpha[t * s_len + s], b = beta[t * s_len + s];
      if (a == kNegInf || b == kNegInf) continue;
      r.grad[t * v + ext[s]] -= std::exp(a + b - log_p);
    }
  return r;
}

double ctc_loss(const Tensor& lp, const LabelSequence& label) { return ctc_forward_backward(lp, label, false).loss; }

Var ctc_loss(const Var& lp, const LabelSequence& label) {
  const bool need = grad_enabled() && lp.requires_grad();
  CtcResult r = ctc_forward_backward(lp.value(), label, need);
  return make_result(Tensor::scalar(r.loss), {lp.node()}, [grad = std::move(r.grad)](Node& self) {
    Node& in = *self.inputs[0];
    if (in.requires_grad) in.grad_buffer().add_(grad, self.grad[0]);
  });
}

Var ctc_batch_loss(const std::vector<Var>& lps, const std::vector<LabelSequence>& labels) {
  if (lps.empty() || lps.size() != labels.size()) throw ShapeError("ctc_batch_loss: one label per sample required");
  Var total = ctc_loss(lps[0], labels[0]);
  for (size_t i = 1; i < lps.size(); ++i) total = nn::add(total, ctc_loss(lps[i], labels[i]));
  return nn::scale(total, 1.0 / static_cast<double>(lps.size()));
}

LabelSequence ctc_collapse(const std::vector<int32_t>& path) {
  LabelSequence out;
  int32_t prev = -1;
  for (int32_t k : path) {
    if (k != prev && k != Alphabet::kBlank) out.ids.push_back(k);
    prev = k;
  }
  return out;
}

double ctc_path_probability_bruteforce(const Tensor& lp, const LabelSequence& label, int64_t max_paths) {
  check_lp(lp);
  const int64_t t_len = lp.dim(0), v = lp.dim(1);
  double count = 1.0;
  for (int64_t t = 0; t < t_len; ++t) count *= static_cast<double>(v);
  if (count > static_cast<double>(max_paths)) throw std::invalid_argument("ctc brute force: too many paths");
  std::vector<int32_t> path(static_cast<size_t>(t_len), 0);
  double total = 0.0;
  while (true) {
    if (ctc_collapse(path) == label) {
      double logp = 0.0;
      for (int64_t t = 0; t < t_len; ++t) logp += lp[t * v + path[t]];
      total += std::exp(logp);
    }
    int64_t t = t_len - 1;  // odometer increment
    while (t >= 0 && ++path[t] == v) path[t--] = 0;
    if (t < 0) break;
  }
  return total;
}

double ctc_loss_bruteforce(const Tensor& lp, const LabelSequence& label, int64_t max_paths) {
  const double p = ctc_path_probability_bruteforce(lp, label, max_paths);
  return p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity();
}

LabelSequence greedy_decode(const Tensor& lp) {
  check_lp(lp);
  const int64_t t_len = lp.dim(0), v = lp.dim(1);
  std::vector<int32_t> path(static_cast<size_t>(t_len));
  for (int64_t t = 0; t < t_len; ++t) {
    const double* row = lp.data() + t * v;
    path[t] = static_cast<int32_t>(std::max_element(row, row + v) - row);
  }
  return ctc_collapse(path);
}

LabelSequence beam_decode(const Tensor& lp, int width) {
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  check_lp(lp);
  const int64_t t_len = lp.dim(0), v = lp.dim(1);
  struct Score {
    double blank = kNegInf, label = kNegInf;  // ending in blank / in the last label
    double total() const { return log_add(blank, label); }
  };
  using Prefix = std::vector<int32_t>;
  // highest total first; map order breaks ties towards the smaller prefix
  auto prune = [width](const std::map<Prefix, Score>& all) {
    std::vector<std::pair<Prefix, Score>> items(all.begin(), all.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
    if (items.size() > static_cast<size_t>(width)) items.resize(static_cast<size_t>(width));
    return items;
  };

  std::vector<std::pair<Prefix, Score>> beam{{Prefix{}, Score{0.0, kNegInf}}};
  for (int64_t t = 0; t < t_len; ++t) {
    const double* row = lp.data() + t * v;
    std::map<Prefix, Score> next;
    for (const auto& [prefix, sc] : beam) {
      auto& same = next[prefix];
      same.blank = log_add(same.blank, sc.total() + row[Alphabet::kBlank]);
      for (int32_t c = 1; c < v; ++c) {
        Prefix ext = prefix;
        ext.push_back(c);
        auto& grown = next[ext];
        if (!prefix.empty() && prefix.back() == c) {
          auto& stay = next[prefix];
          stay.label = log_add(stay.label, sc.label + row[c]);
          grown.label = log_add(grown.label, sc.blank + row[c]);
        } else {
          grown.label = log_add(grown.label, sc.total() + row[c]);
        }
      }
    }
    beam = prune(next);
  }
  return LabelSequence{beam.front().first};
}

}  // namespace fsr
