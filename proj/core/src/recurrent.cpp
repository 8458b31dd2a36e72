// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/recurrent.hpp"

#include <Eigen/Core>
#include <cmath>

#include "fingerspell/error.hpp"
#include "fingerspell/ops.hpp"
#include "fingerspell/params.hpp"
#include "fingerspell/random.hpp"

namespace fsr::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_length(const Var& x, int64_t length) {
  if (x.value().rank() != 2) throw ShapeError("rnn: input must be (T, D), got " + shape_string(x.shape()));
  if (length < 1 || length > x.dim(0)) {
    throw ShapeError("rnn: true length " + std::to_string(length) + " outside [1, " + std::to_string(x.dim(0)) +
                     "]");
  }
}

/// Input projection for the real frames only, so results for frames
/// [0, length) do not depend on how many padding rows follow.
RowMat project_inputs(const Var& x, int64_t length, const Var& wx, const Var* bias) {
  const int64_t d = x.dim(1), g = wx.dim(0);
  if (wx.dim(1) != d) throw ShapeError("rnn: input width " + std::to_string(d) + " does not match weights");
  RowMat gx = ConstMatMap(x.value().data(), length, d) * ConstMatMap(wx.value().data(), g, d).transpose();
  if (bias)
    for (int64_t t = 0; t < length; ++t)
      for (int64_t j = 0; j < g; ++j) gx(t, j) += bias->value()[j];
  return gx;
}

}  // namespace

Var gru(const Var& x, int64_t length, const GruWeights& w, bool reverse) {
  check_length(x, length);
  const int64_t T = x.dim(0), D = x.dim(1), H = w.wh.dim(1);
  if (w.wx.dim(0) != 3 * H || w.wh.dim(0) != 3 * H) throw ShapeError("gru: weights must have 3H rows");
  const RowMat gx = project_inputs(x, length, w.wx, &w.bx);

  // Saved per real frame, indexed by frame position.
  RowMat r(length, H), z(length, H), n(length, H), hprev(length, H), ghn(length, H);
  Tensor y({T, H});
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  ConstMatMap Wh(w.wh.value().data(), 3 * H, H);
  ConstVecMap bh(w.bh.value().data(), 3 * H);
  for (int64_t s = 0; s < length; ++s) {
    const int64_t t = reverse ? length - 1 - s : s;
    const Eigen::VectorXd gh = Wh * h + bh;
    hprev.row(t) = h.transpose();
    for (int64_t j = 0; j < H; ++j) {
      const double rj = sigm(gx(t, j) + gh[j]);
      const double zj = sigm(gx(t, H + j) + gh[H + j]);
      const double nj = std::tanh(gx(t, 2 * H + j) + rj * gh[2 * H + j]);
      r(t, j) = rj;
      z(t, j) = zj;
      n(t, j) = nj;
      ghn(t, j) = gh[2 * H + j];
      h[j] = (1.0 - zj) * nj + zj * h[j];
      y[t * H + j] = h[j];
    }
  }

  return make_result(
      std::move(y), {x.node(), w.wx.node(), w.wh.node(), w.bx.node(), w.bh.node()},
      [=, r = std::move(r), z = std::move(z), n = std::move(n), hprev = std::move(hprev),
       ghn = std::move(ghn)](Node& self) {
        const auto& whv = self.inputs[2]->value;
        ConstMatMap Wh(whv.data(), 3 * H, H);
        RowMat dgx(length, 3 * H);
        Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
        Eigen::VectorXd dgh(3 * H);
        RowMat dWh = RowMat::Zero(3 * H, H);
        Eigen::VectorXd dbh = Eigen::VectorXd::Zero(3 * H);
        for (int64_t s = length - 1; s >= 0; --s) {
          const int64_t t = reverse ? length - 1 - s : s;
          Eigen::VectorXd dh_prev(H);
          for (int64_t j = 0; j < H; ++j) {
            const double dh = self.grad[t * H + j] + dh_next[j];
            const double rj = r(t, j), zj = z(t, j), nj = n(t, j);
            const double dn_pre = dh * (1.0 - zj) * (1.0 - nj * nj);
            const double dz_pre = dh * (hprev(t, j) - nj) * zj * (1.0 - zj);
            const double dr_pre = dn_pre * ghn(t, j) * rj * (1.0 - rj);
            dgx(t, j) = dr_pre;
            dgx(t, H + j) = dz_pre;
            dgx(t, 2 * H + j) = dn_pre;
            dgh[j] = dr_pre;
            dgh[H + j] = dz_pre;
            dgh[2 * H + j] = dn_pre * rj;
            dh_prev[j] = dh * zj;
          }
          dh_next = dh_prev + Wh.transpose() * dgh;
          dWh.noalias() += dgh * hprev.row(t);
          dbh += dgh;
        }
        if (self.inputs[0]->requires_grad) {
          MatMap dX(self.inputs[0]->grad_buffer().data(), T, D);
          dX.topRows(length).noalias() += dgx * ConstMatMap(self.inputs[1]->value.data(), 3 * H, D);
        }
        if (self.inputs[1]->requires_grad) {
          MatMap dWx(self.inputs[1]->grad_buffer().data(), 3 * H, D);
          dWx.noalias() += dgx.transpose() * ConstMatMap(self.inputs[0]->value.data(), length, D);
        }
        if (self.inputs[2]->requires_grad) MatMap(self.inputs[2]->grad_buffer().data(), 3 * H, H) += dWh;
        if (self.inputs[3]->requires_grad)
          VecMap(self.inputs[3]->grad_buffer().data(), 3 * H) += dgx.colwise().sum().transpose();
        if (self.inputs[4]->requires_grad) VecMap(self.inputs[4]->grad_buffer().data(), 3 * H) += dbh;
      });
}

Var lstm(const Var& x, int64_t length, const LstmWeights& w, bool reverse) {
  check_length(x, length);
  const int64_t T = x.dim(0), D = x.dim(1), H = w.wh.dim(1);
  if (w.wx.dim(0) != 4 * H || w.wh.dim(0) != 4 * H) throw ShapeError("lstm: weights must have 4H rows");
  const RowMat gx = project_inputs(x, length, w.wx, &w.b);

  RowMat gates(length, 4 * H), c(length, H), cprev(length, H), hprev(length, H);
  Tensor y({T, H});
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H), cell = Eigen::VectorXd::Zero(H);
  ConstMatMap Wh(w.wh.value().data(), 4 * H, H);
  for (int64_t s = 0; s < length; ++s) {
    const int64_t t = reverse ? length - 1 - s : s;
    const Eigen::VectorXd pre = gx.row(t).transpose() + Wh * h;
    hprev.row(t) = h.transpose();
    cprev.row(t) = cell.transpose();
    for (int64_t j = 0; j < H; ++j) {
      const double i = sigm(pre[j]), f = sigm(pre[H + j]), g = std::tanh(pre[2 * H + j]),
                   o = sigm(pre[3 * H + j]);
      gates(t, j) = i;
      gates(t, H + j) = f;
      gates(t, 2 * H + j) = g;
      gates(t, 3 * H + j) = o;
      cell[j] = f * cell[j] + i * g;
      c(t, j) = cell[j];
      h[j] = o * std::tanh(cell[j]);
      y[t * H + j] = h[j];
    }
  }

  return make_result(
      std::move(y), {x.node(), w.wx.node(), w.wh.node(), w.b.node()},
      [=, gates = std::move(gates), c = std::move(c), cprev = std::move(cprev),
       hprev = std::move(hprev)](Node& self) {
        ConstMatMap Wh(self.inputs[2]->value.data(), 4 * H, H);
        RowMat dpre(length, 4 * H);
        Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H), dc_next = Eigen::VectorXd::Zero(H);
        RowMat dWh = RowMat::Zero(4 * H, H);
        for (int64_t s = length - 1; s >= 0; --s) {
          const int64_t t = reverse ? length - 1 - s : s;
          for (int64_t j = 0; j < H; ++j) {
            const double i = gates(t, j), f = gates(t, H + j), g = gates(t, 2 * H + j), o = gates(t, 3 * H + j);
            const double tc = std::tanh(c(t, j));
            const double dh = self.grad[t * H + j] + dh_next[j];
            const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dpre(t, j) = dc * g * i * (1.0 - i);
            dpre(t, H + j) = dc * cprev(t, j) * f * (1.0 - f);
            dpre(t, 2 * H + j) = dc * i * (1.0 - g * g);
            dpre(t, 3 * H + j) = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
          }
          dh_next = Wh.transpose() * dpre.row(t).transpose();
          dWh.noalias() += dpre.row(t).transpose() * hprev.row(t);
        }
        if (self.inputs[0]->requires_grad) {
          MatMap dX(self.inputs[0]->grad_buffer().data(), T, D);
          dX.topRows(length).noalias() += dpre * ConstMatMap(self.inputs[1]->value.data(), 4 * H, D);
        }
        if (self.inputs[1]->requires_grad) {
          MatMap dWx(self.inputs[1]->grad_buffer().data(), 4 * H, D);
          dWx.noalias() += dpre.transpose() * ConstMatMap(self.inputs[0]->value.data(), length, D);
        }
        if (self.inputs[2]->requires_grad) MatMap(self.inputs[2]->grad_buffer().data(), 4 * H, H) += dWh;
        if (self.inputs[3]->requires_grad)
          VecMap(self.inputs[3]->grad_buffer().data(), 4 * H) += dpre.colwise().sum().transpose();
      });
}

RnnKind parse_rnn_kind(const std::string& s) {
  if (s == "gru") return RnnKind::gru;
  if (s == "lstm") return RnnKind::lstm;
  if (s == "none") return RnnKind::none;
  throw ConfigError("unknown rnn type '" + s + "' (expected gru, lstm or none)");
}

std::string to_string(RnnKind kind) {
  switch (kind) {
    case RnnKind::gru:
      return "gru";
    case RnnKind::lstm:
      return "lstm";
    case RnnKind::none:
      return "none";
  }
  return "none";
}

int64_t RnnSpec::output_dim() const {
  if (kind == RnnKind::none) return input_dim;
  return hidden * (bidirectional ? 2 : 1);
}

namespace {

std::string dir_prefix(const std::string& prefix, int layer, bool backward) {
  return prefix + ".l" + std::to_string(layer) + (backward ? ".bwd" : ".fwd");
}

}  // namespace

void add_rnn_params(ParamSet& params, const std::string& prefix, const RnnSpec& spec, Rng& rng) {
  if (spec.kind == RnnKind::none) return;
  if (spec.layers < 1) throw ConfigError("rnn layers must be >= 1");
  if (spec.hidden < 1) throw ConfigError("rnn hidden size must be >= 1");
  const int64_t gates = spec.kind == RnnKind::gru ? 3 : 4;
  const int dirs = spec.bidirectional ? 2 : 1;
  int64_t in = spec.input_dim;
  for (int l = 0; l < spec.layers; ++l) {
    for (int d = 0; d < dirs; ++d) {
      const std::string p = dir_prefix(prefix, l, d == 1);
      // PyTorch convention: recurrent layers use fan_in = hidden size.
      params.add_uniform(p + ".wx", {gates * spec.hidden, in}, spec.hidden, rng);
      params.add_uniform(p + ".wh", {gates * spec.hidden, spec.hidden}, spec.hidden, rng);
      if (spec.kind == RnnKind::gru) {
        params.add_zeros(p + ".bx", {gates * spec.hidden});
        params.add_zeros(p + ".bh", {gates * spec.hidden});
      } else {
        params.add_zeros(p + ".b", {gates * spec.hidden});
      }
    }
    in = spec.hidden * dirs;
  }
}

Var rnn_forward(const Var& x, int64_t length, const RnnSpec& spec, const ParamSet& params,
                const std::string& prefix) {
  if (spec.kind == RnnKind::none) return x;
  Var h = x;
  const int dirs = spec.bidirectional ? 2 : 1;
  for (int l = 0; l < spec.layers; ++l) {
    std::vector<Var> outs;
    for (int d = 0; d < dirs; ++d) {
      const std::string p = dir_prefix(prefix, l, d == 1);
      if (spec.kind == RnnKind::gru) {
        GruWeights w{params.get(p + ".wx"), params.get(p + ".wh"), params.get(p + ".bx"), params.get(p + ".bh")};
        outs.push_back(gru(h, length, w, d == 1));
      } else {
        LstmWeights w{params.get(p + ".wx"), params.get(p + ".wh"), params.get(p + ".b")};
        outs.push_back(lstm(h, length, w, d == 1));
      }
    }
    h = outs.size() == 1 ? outs[0] : concat(outs, 1);
  }
  return h;
}

Var bigru(const Var& x, int64_t length, int layers, const ParamSet& params, const std::string& prefix) {
  RnnSpec spec;
  spec.kind = RnnKind::gru;
  spec.input_dim = x.dim(1);
  spec.hidden = params.get(prefix + ".l0.fwd.wh").dim(1);
  spec.layers = layers;
  spec.bidirectional = true;
  return rnn_forward(x, length, spec, params, prefix);
}

}  // namespace fsr::nn
