// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "fingerspell/autograd.hpp"

namespace fsr {
class ParamSet;
class Rng;
}

namespace fsr::nn {

/// Weights of one GRU direction (PyTorch gate order r, z, n):
///   r = sigmoid(Wx_r x + bx_r + Wh_r h + bh_r)
///   z = sigmoid(Wx_z x + bx_z + Wh_z h + bh_z)
///   n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
///   h' = (1 - z) * n + z * h
struct GruWeights {
  Var wx;  // (3H, D)
  Var wh;  // (3H, H)
  Var bx;  // (3H)
  Var bh;  // (3H)
};

/// Weights of one LSTM direction (gate order i, f, g, o).
struct LstmWeights {
  Var wx;  // (4H, D)
  Var wh;  // (4H, H)
  Var b;   // (4H)
};

/// Runs one GRU direction over x (T, D) from a zero state. Only frames
/// [0, length) are real; the reverse direction starts at length - 1. Rows at
/// or beyond `length` are zero in the (T, H) output.
Var gru(const Var& x, int64_t length, const GruWeights& w, bool reverse);
Var lstm(const Var& x, int64_t length, const LstmWeights& w, bool reverse);

enum class RnnKind { gru, lstm, none };

RnnKind parse_rnn_kind(const std::string& s);
std::string to_string(RnnKind kind);

struct RnnSpec {
  RnnKind kind = RnnKind::gru;
  int64_t input_dim = 0;
  int64_t hidden = 0;
  int layers = 2;
  bool bidirectional = true;

  int64_t output_dim() const;
};

/// Register the parameters of a stacked (bi)directional RNN under `prefix`.
void add_rnn_params(ParamSet& params, const std::string& prefix, const RnnSpec& spec,
                    Rng& rng);

/// Stacked, length-aware recurrent encoder over x (T, D); output (T, output_dim).
Var rnn_forward(const Var& x, int64_t length, const RnnSpec& spec, const ParamSet& params,
                const std::string& prefix);

/// The two-layer bidirectional GRU used by the decoder head.
Var bigru(const Var& x, int64_t length, int layers, const ParamSet& params,
          const std::string& prefix);

}  // namespace fsr::nn
