// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fingerspell/datamodel.hpp"
#include "fingerspell/recurrent.hpp"

namespace fsr {

class ParamSet;
class Rng;

struct DecoderConfig {
  nn::RnnKind rnn = nn::RnnKind::gru;
  int64_t hidden = 64;
  int layers = 2;
  bool bidirectional = true;

  nn::RnnSpec rnn_spec(int64_t input_dim) const;
  void validate() const;
};

void add_decoder_params(ParamSet& params, const DecoderConfig& cfg, int64_t input_dim, int64_t num_classes, Rng& rng,
                        const std::string& prefix = "dec");

/// Recurrent encoder (length-aware), linear layer to |A| + 1 classes, then
/// log-softmax: (T, F) -> (T, |A| + 1).
Var decode_head(const Var& features, int64_t length, const DecoderConfig& cfg, const ParamSet& params,
                const std::string& prefix = "dec");

// CTC ----------------------------------------------------------------------

/// Fewest frames that can emit `label`: its length plus one blank between
/// each pair of equal neighbours.
int64_t ctc_min_frames(const LabelSequence& label);

struct CtcResult {
  double loss = 0.0;  // -log p(label | lp)
  Tensor grad;        // d loss / d lp, same shape as lp
};

/// Log-space forward-backward over the blank-interleaved label.
/// lp is (T, V) log-probabilities with the blank in column 0. Throws
/// InfeasibleAlignment when T < ctc_min_frames(label).
CtcResult ctc_forward_backward(const Tensor& lp, const LabelSequence& label, bool with_grad = true);
double ctc_loss(const Tensor& lp, const LabelSequence& label);
/// Differentiable scalar loss for one sample.
Var ctc_loss(const Var& lp, const LabelSequence& label);
/// Mean of the per-sample losses.
Var ctc_batch_loss(const std::vector<Var>& lps, const std::vector<LabelSequence>& labels);

/// Sum of path probabilities by explicit enumeration of all V^T paths.
/// Throws std::invalid_argument when V^T exceeds `max_paths`.
double ctc_path_probability_bruteforce(const Tensor& lp, const LabelSequence& label, int64_t max_paths = 1 << 22);
/// -log of the above; +inf when no path emits the label.
double ctc_loss_bruteforce(const Tensor& lp, const LabelSequence& label, int64_t max_paths = 1 << 22);

/// Remove repeats, then blanks.
LabelSequence ctc_collapse(const std::vector<int32_t>& path);

/// Best path: per-frame argmax (lowest index on ties), then collapse.
LabelSequence greedy_decode(const Tensor& lp);

/// Prefix beam search keeping `width` label prefixes per frame. Equal scores
/// are broken in favour of the lexicographically smaller label.
LabelSequence beam_decode(const Tensor& lp, int width);

}  // namespace fsr
