// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "fingerspell/error.hpp"

namespace fsr::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

/// Gradient buffer of input `i`, or nullptr if it does not need one.
Tensor* input_grad(Node& self, size_t i) {
  auto& in = self.inputs[i];
  if (!in || !in->requires_grad) return nullptr;
  return &in->grad_buffer();
}

const Tensor& input_value(const Node& self, size_t i) { return self.inputs[i]->value; }

template <typename F>
Var unary(const Var& x, F&& f, std::function<void(Node&)> backward) {
  Tensor y(x.shape());
  const auto& xv = x.value();
  for (int64_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result(std::move(y), {x.node()}, std::move(backward));
}

int64_t count_shift_channels(double fraction, int64_t channels) {
  if (fraction < 0.0 || fraction > 0.5) throw ShapeError("shift fraction must lie in [0, 0.5]");
  return static_cast<int64_t>(std::floor(fraction * static_cast<double>(channels) + 1e-9));
}

}  // namespace

// Elementwise ----------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  y.add_(b.value());
  return make_result(std::move(y), {a.node(), b.node()}, [](Node& self) {
    for (size_t i = 0; i < 2; ++i)
      if (auto* g = input_grad(self, i)) g->add_(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  y.add_(b.value(), -1.0);
  return make_result(std::move(y), {a.node(), b.node()}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) g->add_(self.grad);
    if (auto* g = input_grad(self, 1)) g->add_(self.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y(a.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(y), {a.node(), b.node()}, [](Node& self) {
    const auto& av = input_value(self, 0);
    const auto& bv = input_value(self, 1);
    if (auto* g = input_grad(self, 0))
      for (int64_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (auto* g = input_grad(self, 1))
      for (int64_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

Var scale(const Var& a, double s) {
  Tensor y = a.value();
  for (auto& v : y.values()) v *= s;
  return make_result(std::move(y), {a.node()}, [s](Node& self) {
    if (auto* g = input_grad(self, 0)) g->add_(self.grad, s);
  });
}

Var mul_const(const Var& a, const Tensor& mask) {
  if (mask.shape() != a.shape()) throw ShapeError("mul_const: mask shape mismatch");
  Tensor y(a.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * mask[i];
  return make_result(std::move(y), {a.node()}, [mask](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (int64_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * mask[i];
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw ShapeError("mul_scalar: scale must hold one element");
  const double k = s.value()[0];
  Tensor y = a.value();
  for (auto& v : y.values()) v *= k;
  return make_result(std::move(y), {a.node(), s.node()}, [](Node& self) {
    const double k = input_value(self, 1)[0];
    if (auto* g = input_grad(self, 0)) g->add_(self.grad, k);
    if (auto* g = input_grad(self, 1)) {
      const auto& av = input_value(self, 0);
      double acc = 0.0;
      for (int64_t i = 0; i < av.size(); ++i) acc += self.grad[i] * av[i];
      (*g)[0] += acc;
    }
  });
}

Var sigmoid(const Var& x) {
  auto f = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  return unary(x, f, [](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (int64_t i = 0; i < g->size(); ++i) {
        const double s = self.value[i];
        (*g)[i] += self.grad[i] * s * (1.0 - s);
      }
  });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (int64_t i = 0; i < g->size(); ++i) {
        const double t = self.value[i];
        (*g)[i] += self.grad[i] * (1.0 - t * t);
      }
  });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](Node& self) {
    const auto& xv = input_value(self, 0);
    if (auto* g = input_grad(self, 0))
      for (int64_t i = 0; i < g->size(); ++i)
        if (xv[i] > 0.0) (*g)[i] += self.grad[i];
  });
}

Var silu(const Var& x) {
  return unary(x, [](double v) { return v / (1.0 + std::exp(-v)); }, [](Node& self) {
    const auto& xv = input_value(self, 0);
    if (auto* g = input_grad(self, 0))
      for (int64_t i = 0; i < g->size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-xv[i]));
        (*g)[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
      }
  });
}

// Reductions -----------------------------------------------------------------

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return make_result(Tensor::scalar(acc), {x.node()}, [](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (auto& v : g->values()) v += self.grad[0];
  });
}

Var mean(const Var& x) {
  const auto n = static_cast<double>(std::max<int64_t>(1, x.value().size()));
  return scale(sum(x), 1.0 / n);
}

Var dot_const(const Var& x, const Tensor& w) {
  if (w.size() != x.value().size()) throw ShapeError("dot_const: size mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < w.size(); ++i) acc += x.value()[i] * w[i];
  return make_result(Tensor::scalar(acc), {x.node()}, [w](Node& self) {
    if (auto* g = input_grad(self, 0)) g->add_(w, self.grad[0]);
  });
}

Var spatial_mean(const Var& x) {
  if (x.value().rank() < 2) throw ShapeError("spatial_mean expects (B, C, ...)");
  const int64_t b = x.dim(0), c = x.dim(1);
  const int64_t s = x.value().size() / std::max<int64_t>(1, b * c);
  Tensor y({b, c});
  const double* xv = x.value().data();
  for (int64_t i = 0; i < b * c; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < s; ++j) acc += xv[i * s + j];
    y[i] = acc / static_cast<double>(s);
  }
  return make_result(std::move(y), {x.node()}, [s](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const double inv = 1.0 / static_cast<double>(s);
      for (int64_t i = 0; i < self.grad.size(); ++i)
        for (int64_t j = 0; j < s; ++j) (*g)[i * s + j] += self.grad[i] * inv;
    }
  });
}

// Shape manipulation ---------------------------------------------------------

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_result(std::move(y), {x.node()}, [](Node& self) {
    if (auto* g = input_grad(self, 0)) g->add_(self.grad);
  });
}

Var permute(const Var& x, const std::vector<int>& perm) {
  const auto& in_shape = x.shape();
  const int r = static_cast<int>(in_shape.size());
  if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: rank mismatch");
  std::vector<int64_t> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  Shape out_shape(r);
  std::vector<int64_t> gather_strides(r);
  for (int i = 0; i < r; ++i) {
    out_shape[i] = in_shape[perm[i]];
    gather_strides[i] = in_strides[perm[i]];
  }
  // source offset of every output element, in output order
  const int64_t n = x.value().size();
  std::vector<int64_t> src(static_cast<size_t>(n));
  std::vector<int64_t> idx(r, 0);
  int64_t off = 0;
  for (int64_t k = 0; k < n; ++k) {
    src[k] = off;
    for (int a = r - 1; a >= 0; --a) {
      ++idx[a];
      off += gather_strides[a];
      if (idx[a] < out_shape[a]) break;
      off -= gather_strides[a] * idx[a];
      idx[a] = 0;
    }
  }
  Tensor y(out_shape);
  for (int64_t k = 0; k < n; ++k) y[k] = x.value()[src[k]];
  return make_result(std::move(y), {x.node()}, [src = std::move(src)](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (size_t k = 0; k < src.size(); ++k) (*g)[src[k]] += self.grad[static_cast<int64_t>(k)];
  });
}

Var slice(const Var& x, int axis, int64_t start, int64_t length) {
  const auto& shape = x.shape();
  if (axis < 0) axis += static_cast<int>(shape.size());
  if (axis < 0 || axis >= static_cast<int>(shape.size())) throw ShapeError("slice: bad axis");
  if (start < 0 || length < 0 || start + length > shape[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside extent " + std::to_string(shape[axis]));
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const int64_t extent = shape[axis];
  Shape out_shape = shape;
  out_shape[axis] = length;
  Tensor y(out_shape);
  const double* xv = x.value().data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(xv + (o * extent + start) * inner, length * inner, y.data() + o * length * inner);
  return make_result(std::move(y), {x.node()}, [=](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < length * inner; ++i)
          (*g)[(o * extent + start) * inner + i] += self.grad[o * length * inner + i];
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts[0].shape();
  if (axis < 0) axis += static_cast<int>(shape.size());
  if (axis < 0 || axis >= static_cast<int>(shape.size())) throw ShapeError("concat: bad axis");
  std::vector<int64_t> extents;
  int64_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != shape[i]) throw ShapeError("concat: extent mismatch");
    extents.push_back(s[axis]);
    total += s[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  shape[axis] = total;
  Tensor y(shape);
  std::vector<NodePtr> inputs;
  int64_t at = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].value().data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(src + o * extents[p] * inner, extents[p] * inner, y.data() + (o * total + at) * inner);
    at += extents[p];
    inputs.push_back(parts[p].node());
  }
  return make_result(std::move(y), std::move(inputs), [=](Node& self) {
    int64_t at = 0;
    for (size_t p = 0; p < extents.size(); ++p) {
      if (auto* g = input_grad(self, p))
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < extents[p] * inner; ++i)
            (*g)[o * extents[p] * inner + i] += self.grad[(o * total + at) * inner + i];
      at += extents[p];
    }
  });
}

Var select_last(const Var& x, const std::vector<int64_t>& indices) {
  const auto& shape = x.shape();
  if (shape.empty()) throw ShapeError("select_last: scalar input");
  const int64_t d = shape.back();
  for (auto i : indices)
    if (i < 0 || i >= d) throw ShapeError("select_last: index out of range");
  const int64_t rows = x.value().size() / std::max<int64_t>(1, d);
  const auto k = static_cast<int64_t>(indices.size());
  Shape out_shape = shape;
  out_shape.back() = k;
  Tensor y(out_shape);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < k; ++j) y[r * k + j] = x.value()[r * d + indices[j]];
  return make_result(std::move(y), {x.node()}, [=](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < k; ++j) (*g)[r * d + indices[j]] += self.grad[r * k + j];
  });
}

// Layers ---------------------------------------------------------------------

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const auto& ws = weight.shape();
  if (ws.size() != 2) throw ShapeError("linear: weight must be (D_out, D_in)");
  const int64_t dout = ws[0], din = ws[1];
  if (x.shape().empty() || x.shape().back() != din) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + " does not end in D_in = " +
                     std::to_string(din));
  }
  if (bias.defined() && bias.value().size() != dout) throw ShapeError("linear: bias size mismatch");
  const int64_t rows = x.value().size() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor y(out_shape);
  ConstMatMap X(x.value().data(), rows, din);
  ConstMatMap W(weight.value().data(), dout, din);
  MatMap Y(y.data(), rows, dout);
  Y.noalias() = X * W.transpose();
  if (bias.defined())
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t o = 0; o < dout; ++o) Y(r, o) += bias.value()[o];

  std::vector<NodePtr> inputs{x.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result(std::move(y), std::move(inputs), [rows, din, dout](Node& self) {
    ConstMatMap dY(self.grad.data(), rows, dout);
    if (auto* g = input_grad(self, 0)) {
      MatMap dX(g->data(), rows, din);
      dX.noalias() += dY * ConstMatMap(input_value(self, 1).data(), dout, din);
    }
    if (auto* g = input_grad(self, 1)) {
      MatMap dW(g->data(), dout, din);
      dW.noalias() += dY.transpose() * ConstMatMap(input_value(self, 0).data(), rows, din);
    }
    if (self.inputs.size() > 2)
      if (auto* g = input_grad(self, 2))
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t o = 0; o < dout; ++o) (*g)[o] += dY(r, o);
  });
}

int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t pad) {
  if (stride < 1) throw ShapeError("conv: stride must be >= 1");
  const int64_t span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

namespace {

/// Geometry of one convolution with spatial rank padded to 3.
struct ConvGeom {
  int64_t batch = 0, cin = 0, cout = 0, groups = 1;
  std::array<int64_t, 3> in{1, 1, 1}, k{1, 1, 1}, st{1, 1, 1}, pd{0, 0, 0}, out{1, 1, 1};

  int64_t cin_g() const { return cin / groups; }
  int64_t cout_g() const { return cout / groups; }
  int64_t kvol() const { return k[0] * k[1] * k[2]; }
  int64_t in_vol() const { return in[0] * in[1] * in[2]; }
  int64_t out_vol() const { return out[0] * out[1] * out[2]; }
  int64_t col_rows() const { return cin_g() * kvol(); }
};

void im2col(const ConvGeom& g, const double* x, double* cols) {
  const int64_t P = g.out_vol();
  int64_t row = 0;
  for (int64_t c = 0; c < g.cin_g(); ++c) {
    const double* xc = x + c * g.in_vol();
    for (int64_t kz = 0; kz < g.k[0]; ++kz)
      for (int64_t ky = 0; ky < g.k[1]; ++ky)
        for (int64_t kx = 0; kx < g.k[2]; ++kx, ++row) {
          double* dst = cols + row * P;
          int64_t p = 0;
          for (int64_t oz = 0; oz < g.out[0]; ++oz) {
            const int64_t iz = oz * g.st[0] - g.pd[0] + kz;
            const bool zok = iz >= 0 && iz < g.in[0];
            for (int64_t oy = 0; oy < g.out[1]; ++oy) {
              const int64_t iy = oy * g.st[1] - g.pd[1] + ky;
              const bool yok = zok && iy >= 0 && iy < g.in[1];
              const double* src = xc + (iz * g.in[1] + iy) * g.in[2];
              for (int64_t ox = 0; ox < g.out[2]; ++ox, ++p) {
                const int64_t ix = ox * g.st[2] - g.pd[2] + kx;
                dst[p] = (yok && ix >= 0 && ix < g.in[2]) ? src[ix] : 0.0;
              }
            }
          }
        }
  }
}

void col2im_add(const ConvGeom& g, const double* cols, double* dx) {
  const int64_t P = g.out_vol();
  int64_t row = 0;
  for (int64_t c = 0; c < g.cin_g(); ++c) {
    double* dxc = dx + c * g.in_vol();
    for (int64_t kz = 0; kz < g.k[0]; ++kz)
      for (int64_t ky = 0; ky < g.k[1]; ++ky)
        for (int64_t kx = 0; kx < g.k[2]; ++kx, ++row) {
          const double* src = cols + row * P;
          int64_t p = 0;
          for (int64_t oz = 0; oz < g.out[0]; ++oz) {
            const int64_t iz = oz * g.st[0] - g.pd[0] + kz;
            const bool zok = iz >= 0 && iz < g.in[0];
            for (int64_t oy = 0; oy < g.out[1]; ++oy) {
              const int64_t iy = oy * g.st[1] - g.pd[1] + ky;
              const bool yok = zok && iy >= 0 && iy < g.in[1];
              double* dst = dxc + (iz * g.in[1] + iy) * g.in[2];
              for (int64_t ox = 0; ox < g.out[2]; ++ox, ++p) {
                const int64_t ix = ox * g.st[2] - g.pd[2] + kx;
                if (yok && ix >= 0 && ix < g.in[2]) dst[ix] += src[p];
              }
            }
          }
        }
  }
}

ConvGeom make_geom(const Shape& xs, const Shape& ws, const ConvSpec& spec) {
  const int nd = static_cast<int>(xs.size()) - 2;
  if (nd < 1 || nd > 3) throw ShapeError("conv: input must be (B, C, *spatial) with 1-3 spatial dims");
  if (static_cast<int>(ws.size()) != nd + 2) {
    throw ShapeError("conv: kernel rank " + std::to_string(ws.size()) + " does not match input " +
                     shape_string(xs));
  }
  ConvGeom g;
  g.batch = xs[0];
  g.cin = xs[1];
  g.cout = ws[0];
  g.groups = spec.groups;
  if (g.groups < 1 || g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw ShapeError("conv: channels not divisible by groups");
  }
  if (ws[1] != g.cin_g()) {
    throw ShapeError("conv: kernel expects " + std::to_string(ws[1] * g.groups) + " input channels, got " +
                     std::to_string(g.cin));
  }
  if (!spec.stride.empty() && static_cast<int>(spec.stride.size()) != nd) throw ShapeError("conv: stride rank");
  if (!spec.padding.empty() && static_cast<int>(spec.padding.size()) != nd) throw ShapeError("conv: padding rank");
  for (int i = 0; i < nd; ++i) {
    const int a = 3 - nd + i;
    g.in[a] = xs[2 + i];
    g.k[a] = ws[2 + i];
    g.st[a] = spec.stride.empty() ? 1 : spec.stride[i];
    g.pd[a] = spec.padding.empty() ? 0 : spec.padding[i];
    g.out[a] = conv_out_extent(g.in[a], g.k[a], g.st[a], g.pd[a]);
    if (g.out[a] <= 0) {
      throw ShapeError("conv: non-positive output extent along spatial axis " + std::to_string(i) + " (in " +
                       std::to_string(g.in[a]) + ", kernel " + std::to_string(g.k[a]) + ")");
    }
  }
  return g;
}

}  // namespace

Var conv(const Var& input, const Var& weight, const Var& bias, const ConvSpec& spec) {
  const ConvGeom g = make_geom(input.shape(), weight.shape(), spec);
  if (bias.defined() && bias.value().size() != g.cout) throw ShapeError("conv: bias size mismatch");
  const int nd = input.value().rank() - 2;

  Shape out_shape{g.batch, g.cout};
  for (int i = 0; i < nd; ++i) out_shape.push_back(g.out[3 - nd + i]);
  Tensor y(out_shape);

  const int64_t P = g.out_vol(), K = g.col_rows();
  std::vector<double> cols(static_cast<size_t>(K * P));
  const double* xv = input.value().data();
  const double* wv = weight.value().data();
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t gr = 0; gr < g.groups; ++gr) {
      im2col(g, xv + (b * g.cin + gr * g.cin_g()) * g.in_vol(), cols.data());
      MatMap Y(y.data() + (b * g.cout + gr * g.cout_g()) * P, g.cout_g(), P);
      Y.noalias() = ConstMatMap(wv + gr * g.cout_g() * K, g.cout_g(), K) * ConstMatMap(cols.data(), K, P);
    }
  if (bias.defined())
    for (int64_t b = 0; b < g.batch; ++b)
      for (int64_t c = 0; c < g.cout; ++c) {
        double* yc = y.data() + (b * g.cout + c) * P;
        const double bc = bias.value()[c];
        for (int64_t p = 0; p < P; ++p) yc[p] += bc;
      }

  std::vector<NodePtr> inputs{input.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result(std::move(y), std::move(inputs), [g](Node& self) {
    const int64_t P = g.out_vol(), K = g.col_rows();
    const double* xv = input_value(self, 0).data();
    const double* wv = input_value(self, 1).data();
    Tensor* gx = input_grad(self, 0);
    Tensor* gw = input_grad(self, 1);
    Tensor* gb = self.inputs.size() > 2 ? input_grad(self, 2) : nullptr;
    std::vector<double> cols(static_cast<size_t>(K * P));
    std::vector<double> dcols(gx ? static_cast<size_t>(K * P) : 0);
    for (int64_t b = 0; b < g.batch; ++b)
      for (int64_t gr = 0; gr < g.groups; ++gr) {
        ConstMatMap dY(self.grad.data() + (b * g.cout + gr * g.cout_g()) * P, g.cout_g(), P);
        if (gw) {
          im2col(g, xv + (b * g.cin + gr * g.cin_g()) * g.in_vol(), cols.data());
          MatMap dW(gw->data() + gr * g.cout_g() * K, g.cout_g(), K);
          dW.noalias() += dY * ConstMatMap(cols.data(), K, P).transpose();
        }
        if (gx) {
          MatMap dC(dcols.data(), K, P);
          dC.noalias() = ConstMatMap(wv + gr * g.cout_g() * K, g.cout_g(), K).transpose() * dY;
          col2im_add(g, dcols.data(), gx->data() + (b * g.cin + gr * g.cin_g()) * g.in_vol());
        }
      }
    if (gb)
      for (int64_t b = 0; b < g.batch; ++b)
        for (int64_t c = 0; c < g.cout; ++c) {
          const double* dy = self.grad.data() + (b * g.cout + c) * P;
          double acc = 0.0;
          for (int64_t p = 0; p < P; ++p) acc += dy[p];
          (*gb)[c] += acc;
        }
  });
}

Var log_softmax(const Var& x) {
  if (x.shape().empty()) throw ShapeError("log_softmax: scalar input");
  const int64_t v = x.shape().back();
  const int64_t rows = x.value().size() / std::max<int64_t>(1, v);
  Tensor y(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.value().data() + r * v;
    double m = xr[0];
    for (int64_t j = 1; j < v; ++j) m = std::max(m, xr[j]);
    double s = 0.0;
    for (int64_t j = 0; j < v; ++j) s += std::exp(xr[j] - m);
    // subtract the max first so large inputs keep full precision
    const double log_s = std::log(s);
    for (int64_t j = 0; j < v; ++j) y[r * v + j] = (xr[j] - m) - log_s;
  }
  return make_result(std::move(y), {x.node()}, [rows, v](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (int64_t r = 0; r < rows; ++r) {
        const double* gy = self.grad.data() + r * v;
        const double* yr = self.value.data() + r * v;
        double gs = 0.0;
        for (int64_t j = 0; j < v; ++j) gs += gy[j];
        for (int64_t j = 0; j < v; ++j) (*g)[r * v + j] += gy[j] - std::exp(yr[j]) * gs;
      }
  });
}

namespace {

/// Shared normalisation core: rows of length `n`, channel of element j in a
/// row is j / per_channel.
Var normalize_rows(const Var& x, const Var& gamma, const Var& beta, int64_t rows, int64_t n,
                   int64_t per_channel, double eps) {
  const int64_t channels = n / per_channel;
  if (gamma.value().size() != channels || beta.value().size() != channels) {
    throw ShapeError("normalisation: gain/offset must have " + std::to_string(channels) + " entries");
  }
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(static_cast<size_t>(rows));
  const double* xv = x.value().data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * n;
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int64_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * is;
      const int64_t c = j / per_channel;
      xhat[r * n + j] = h;
      y[r * n + j] = gamma.value()[c] * h + beta.value()[c];
    }
  }
  return make_result(
      std::move(y), {x.node(), gamma.node(), beta.node()},
      [rows, n, per_channel, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = input_value(self, 1);
        Tensor* gx = input_grad(self, 0);
        Tensor* gg = input_grad(self, 1);
        Tensor* gbeta = input_grad(self, 2);
        std::vector<double> dxhat(static_cast<size_t>(n));
        for (int64_t r = 0; r < rows; ++r) {
          const double* gy = self.grad.data() + r * n;
          const double* h = xhat.data() + r * n;
          double m1 = 0.0, m2 = 0.0;
          for (int64_t j = 0; j < n; ++j) {
            const int64_t c = j / per_channel;
            if (gg) (*gg)[c] += gy[j] * h[j];
            if (gbeta) (*gbeta)[c] += gy[j];
            dxhat[j] = gy[j] * gv[c];
            m1 += dxhat[j];
            m2 += dxhat[j] * h[j];
          }
          if (!gx) continue;
          m1 /= static_cast<double>(n);
          m2 /= static_cast<double>(n);
          for (int64_t j = 0; j < n; ++j) (*gx)[r * n + j] += inv_std[r] * (dxhat[j] - m1 - h[j] * m2);
        }
      });
}

}  // namespace

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.shape().empty()) throw ShapeError("layer_norm: scalar input");
  const int64_t d = x.shape().back();
  return normalize_rows(x, gamma, beta, x.value().size() / std::max<int64_t>(1, d), d, 1, eps);
}

Var frame_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.value().rank() < 2) throw ShapeError("frame_norm expects (B, C, ...)");
  const int64_t b = x.dim(0), c = x.dim(1);
  const int64_t n = x.value().size() / std::max<int64_t>(1, b);
  return normalize_rows(x, gamma, beta, b, n, n / std::max<int64_t>(1, c), eps);
}

Var glu(const Var& x) {
  if (x.shape().empty() || x.shape().back() % 2 != 0) throw ShapeError("glu: last axis must be even");
  const int64_t d2 = x.shape().back(), d = d2 / 2;
  const int64_t rows = x.value().size() / std::max<int64_t>(1, d2);
  Shape out_shape = x.shape();
  out_shape.back() = d;
  Tensor y(out_shape);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) {
      const double a = x.value()[r * d2 + j];
      const double s = 1.0 / (1.0 + std::exp(-x.value()[r * d2 + d + j]));
      y[r * d + j] = a * s;
    }
  return make_result(std::move(y), {x.node()}, [rows, d, d2](Node& self) {
    if (auto* g = input_grad(self, 0)) {
      const auto& xv = input_value(self, 0);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < d; ++j) {
          const double a = xv[r * d2 + j];
          const double s = 1.0 / (1.0 + std::exp(-xv[r * d2 + d + j]));
          const double gy = self.grad[r * d + j];
          (*g)[r * d2 + j] += gy * s;
          (*g)[r * d2 + d + j] += gy * a * s * (1.0 - s);
        }
    }
  });
}

namespace {

/// `groups` clips of `t_len` frames each; `n` channels shift per direction.
struct ShiftSegment {
  int64_t offset, length;
};

struct ShiftPlan {
  std::vector<ShiftSegment> segments;  // only segments listed here are shifted
  int64_t channels, inner, n;
};

// Frames outside every listed segment pass through unchanged.
template <bool Backward>
void apply_shift(const ShiftPlan& s, int64_t total, const double* src, double* dst) {
  const int64_t frame = s.channels * s.inner;
  // per frame: [begin, end) of its shifted segment, or begin = -1
  std::vector<std::pair<int64_t, int64_t>> seg_of(static_cast<size_t>(total), {-1, -1});
  for (const auto& seg : s.segments)
    for (int64_t t = 0; t < seg.length; ++t) seg_of[seg.offset + t] = {seg.offset, seg.offset + seg.length};
  for (int64_t t = 0; t < total; ++t) {
    const auto [begin, end] = seg_of[t];
    for (int64_t c = 0; c < s.channels; ++c) {
      int64_t from = t;
      if (begin >= 0 && c < 2 * s.n) {
        from = c < s.n ? t - 1 : t + 1;
        if (from < begin || from >= end) continue;  // zero fill
      }
      const int64_t out = t * frame + c * s.inner, in = from * frame + c * s.inner;
      for (int64_t i = 0; i < s.inner; ++i) {
        if constexpr (Backward)
          dst[in + i] += src[out + i];
        else
          dst[out + i] = src[in + i];
      }
    }
  }
}

Var shift_with_plan(const Var& x, ShiftPlan plan) {
  const int64_t total = x.dim(0);
  Tensor y(x.shape());
  apply_shift<false>(plan, total, x.value().data(), y.data());
  return make_result(std::move(y), {x.node()}, [plan = std::move(plan), total](Node& self) {
    if (auto* g = input_grad(self, 0)) apply_shift<true>(plan, total, self.grad.data(), g->data());
  });
}

ShiftPlan make_plan(const Var& x, double fraction) {
  if (x.value().rank() < 2) throw ShapeError("temporal_shift expects (T, C, ...)");
  const int64_t total = x.dim(0), c = x.dim(1);
  return ShiftPlan{{}, c, x.value().size() / std::max<int64_t>(1, total * c), count_shift_channels(fraction, c)};
}

}  // namespace

Var temporal_shift_packed(const Var& x, const std::vector<int64_t>& lengths, const std::vector<bool>& active,
                          double fraction) {
  ShiftPlan plan = make_plan(x, fraction);
  if (active.size() != lengths.size()) throw ShapeError("temporal_shift_packed: one flag per sequence");
  int64_t at = 0;
  for (size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 1) throw ShapeError("temporal_shift_packed: sequence length < 1");
    if (active[i]) plan.segments.push_back({at, lengths[i]});
    at += lengths[i];
  }
  if (at != x.dim(0)) throw ShapeError("temporal_shift_packed: lengths do not sum to the frame count");
  return shift_with_plan(x, std::move(plan));
}

Var temporal_shift_grouped(const Var& x, int64_t groups, double fraction) {
  ShiftPlan plan = make_plan(x, fraction);
  const int64_t total = x.dim(0);
  if (groups < 1 || total % groups != 0) throw ShapeError("temporal_shift: frames not divisible into groups");
  for (int64_t g = 0; g < groups; ++g) plan.segments.push_back({g * (total / groups), total / groups});
  return shift_with_plan(x, std::move(plan));
}

Var temporal_shift(const Var& x, double fraction) { return temporal_shift_grouped(x, 1, fraction); }

}  // namespace fsr::nn
