#pragma once

// Reverse-mode differentiation over coarse tensor primitives. A Tape records
// nodes in creation order, which is already a topological order; backward()
// visits each node once in reverse.

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bnet2/conv.hpp"
#include "bnet2/tensor.hpp"

namespace bnet2 {

enum class OpKind {
  leaf,
  conv,
  conv_transpose,
  local_dense,
  swap_blocks,
  relu,
  add,
  sub,
  mul,
  scale,
  square,
  cube,
  sum,
  row_sum,
  mul_rows,
  linear_map,
  reshape,
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  bool valid() const noexcept { return tape != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var leaf(Tensor value, bool requires_grad = true) {
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op node. requires_grad is inherited from the inputs.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value,
             std::function<void(Tape&, std::size_t)> backward) {
    Node n;
    n.kind = kind;
    n.requires_grad = false;
    for (auto i : inputs) n.requires_grad |= nodes_.at(i).requires_grad;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  /// Reverse accumulation from a scalar loss.
  void backward(Var loss) {
    if (loss.tape != this) throw ValidationError("backward: loss lives on another tape");
    if (value(loss.id).size() != 1)
      throw DimensionError("backward: loss must be scalar, got shape " +
                           shape_string(value(loss.id).shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, k);
    }
  }

  /// Gradient of the last backward() with respect to `v` (zeros if unreached).
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.shape() == n.value.shape()) return n.grad;
    return Tensor(n.value.shape());
  }

  std::vector<Tensor> gradients(std::span<const Var> params) const {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(grad(p));
    return out;
  }

 private:
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline Tape& tape_of(Var a) {
  if (!a.valid()) throw ValidationError("operation on an unbound Var");
  return *a.tape;
}

inline void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ValidationError("operands live on different tapes");
}

inline bool wants(Tape& t, std::size_t id) { return t.requires_grad(id); }

}  // namespace detail

/// Non-overlapping convolution on x [batch, spatial, in_ch]. `bias` may be an
/// unbound Var for no bias.
inline Var conv1d(Var x, Var w, Var bias, const ConvGeometry& g) {
  Tape& t = detail::tape_of(x);
  detail::same_tape(x, w);
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("conv1d: input must be [batch, spatial, channels]");
  if (xv.dim(2) != g.in_channels)
    throw DimensionError("conv1d: axis 2 (channels) is " + std::to_string(xv.dim(2)) + ", expected " +
                         std::to_string(g.in_channels));
  if (xv.dim(1) % g.kernel != 0)
    throw DimensionError("conv1d: axis 1 (spatial) " + std::to_string(xv.dim(1)) +
                         " not divisible by stride " + std::to_string(g.kernel));
  if (w.value().shape() != g.weight_shape())
    throw DimensionError("conv1d: weights " + shape_string(w.value().shape()) + " expected " +
                         shape_string(g.weight_shape()));
  const bool has_bias = bias.valid();
  if (has_bias) {
    detail::same_tape(x, bias);
    if (bias.value().size() != g.out_channels) throw DimensionError("conv1d: bias length vs out channels");
  }
  const std::size_t batch = xv.dim(0), sout = xv.dim(1) / g.kernel;
  Tensor y({batch, sout, g.out_channels});
  conv_forward(g, xv.data().data(), batch * sout, w.value().data().data(),
               has_bias ? bias.value().data().data() : nullptr, y.data().data());
  std::vector<std::size_t> in{x.id, w.id};
  if (has_bias) in.push_back(bias.id);
  return t.record(OpKind::conv, std::move(in), std::move(y), [g, has_bias](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    const std::size_t xi = n.inputs[0], wi = n.inputs[1];
    const Tensor& xv = tp.value(xi);
    const std::size_t rows = n.value.dim(0) * n.value.dim(1);
    double* gx = detail::wants(tp, xi) ? tp.grad_buffer(xi).data().data() : nullptr;
    double* gw = detail::wants(tp, wi) ? tp.grad_buffer(wi).data().data() : nullptr;
    double* gb = (has_bias && detail::wants(tp, n.inputs[2])) ? tp.grad_buffer(n.inputs[2]).data().data()
                                                              : nullptr;
    conv_backward(g, xv.data().data(), rows, tp.value(wi).data().data(), n.grad.data().data(), gx, gw, gb);
  });
}

/// Transposed non-overlapping convolution: [batch, s, in] -> [batch, s*kernel, out].
inline Var conv_transpose1d(Var x, Var w, Var bias, const ConvGeometry& g) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("conv_transpose1d: input must be [batch, spatial, channels]");
  if (xv.dim(2) != g.in_channels) throw DimensionError("conv_transpose1d: axis 2 (channels) mismatch");
  if (w.value().shape() != g.weight_shape()) throw DimensionError("conv_transpose1d: weight shape mismatch");
  const bool has_bias = bias.valid();
  const std::size_t batch = xv.dim(0), s = xv.dim(1);
  Tensor y({batch, s * g.kernel, g.out_channels});
  conv_transpose_forward(g, xv.data().data(), batch * s, w.value().data().data(),
                         has_bias ? bias.value().data().data() : nullptr, y.data().data());
  std::vector<std::size_t> in{x.id, w.id};
  if (has_bias) in.push_back(bias.id);
  return t.record(OpKind::conv_transpose, std::move(in), std::move(y),
                  [g, has_bias](Tape& tp, std::size_t self) {
                    const auto& n = tp.node(self);
                    const std::size_t xi = n.inputs[0], wi = n.inputs[1];
                    const Tensor& xv = tp.value(xi);
                    const std::size_t rows = xv.dim(0) * xv.dim(1);
                    double* gx = detail::wants(tp, xi) ? tp.grad_buffer(xi).data().data() : nullptr;
                    double* gw = detail::wants(tp, wi) ? tp.grad_buffer(wi).data().data() : nullptr;
                    double* gb = (has_bias && detail::wants(tp, n.inputs[2]))
                                     ? tp.grad_buffer(n.inputs[2]).data().data()
                                     : nullptr;
                    conv_transpose_backward(g, xv.data().data(), rows, tp.value(wi).data().data(),
                                            n.grad.data().data(), gx, gw, gb);
                  });
}

/// Untied per-position dense blocks: x [batch, S, G*m], D [S, G, m, m]
/// (indexed [s, g, in, out]), bias [S, G*m].
inline Var local_dense(Var x, Var d, Var bias) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& dv = d.value();
  if (xv.rank() != 3 || dv.rank() != 4) throw DimensionError("local_dense: bad ranks");
  const std::size_t B = xv.dim(0), S = dv.dim(0), G = dv.dim(1), m = dv.dim(2);
  if (dv.dim(3) != m) throw DimensionError("local_dense: axis 3 of D must equal axis 2");
  if (xv.dim(1) != S) throw DimensionError("local_dense: axis 1 (spatial) mismatch");
  if (xv.dim(2) != G * m) throw DimensionError("local_dense: axis 2 (channels) mismatch");
  if (bias.value().size() != S * G * m) throw DimensionError("local_dense: bias size mismatch");
  Tensor y({B, S, G * m});
  const double* X = xv.data().data();
  const double* Dp = dv.data().data();
  const double* bp = bias.value().data().data();
  double* Y = y.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t g = 0; g < G; ++g) {
        const double* xr = X + (b * S + s) * G * m + g * m;
        double* yr = Y + (b * S + s) * G * m + g * m;
        const double* blk = Dp + (s * G + g) * m * m;
        for (std::size_t c = 0; c < m; ++c) yr[c] = bp[s * G * m + g * m + c];
        for (std::size_t q = 0; q < m; ++q) {
          const double a = xr[q];
          if (a == 0.0) continue;
          for (std::size_t c = 0; c < m; ++c) yr[c] += a * blk[q * m + c];
        }
      }
  return t.record(OpKind::local_dense, {x.id, d.id, bias.id}, std::move(y),
                  [B, S, G, m](Tape& tp, std::size_t self) {
                    const auto& n = tp.node(self);
                    const std::size_t xi = n.inputs[0], di = n.inputs[1], bi = n.inputs[2];
                    const double* X = tp.value(xi).data().data();
                    const double* Dp = tp.value(di).data().data();
                    const double* GY = n.grad.data().data();
                    double* gx = detail::wants(tp, xi) ? tp.grad_buffer(xi).data().data() : nullptr;
                    double* gd = detail::wants(tp, di) ? tp.grad_buffer(di).data().data() : nullptr;
                    double* gb = detail::wants(tp, bi) ? tp.grad_buffer(bi).data().data() : nullptr;
                    for (std::size_t b = 0; b < B; ++b)
                      for (std::size_t s = 0; s < S; ++s)
                        for (std::size_t g = 0; g < G; ++g) {
                          const std::size_t off = (b * S + s) * G * m + g * m;
                          const double* blk = Dp + (s * G + g) * m * m;
                          for (std::size_t q = 0; q < m; ++q)
                            for (std::size_t c = 0; c < m; ++c) {
                              const double gy = GY[off + c];
                              if (gx) gx[off + q] += gy * blk[q * m + c];
                              if (gd) gd[(s * G + g) * m * m + q * m + c] += gy * X[off + q];
                            }
                          if (gb)
                            for (std::size_t c = 0; c < m; ++c) gb[s * G * m + g * m + c] += GY[off + c];
                        }
                  });
}

/// Exchanges the spatial axis with the channel-block axis:
/// [batch, S, G*m] -> [batch, G, S*m], y[b, g, s*m + c] = x[b, s, g*m + c].
inline Var swap_blocks(Var x, std::size_t blocks, std::size_t block_width) {
  Tape& t = detail::tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(2) != blocks * block_width)
    throw DimensionError("swap_blocks: axis 2 must equal blocks*block_width");
  const std::size_t B = xv.dim(0), S = xv.dim(1), G = blocks, m = block_width;
  Tensor y({B, G, S * m});
  auto permute = [B, S, G, m](const double* src, double* dst, bool forward) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t g = 0; g < G; ++g)
          for (std::size_t c = 0; c < m; ++c) {
            const std::size_t xi = (b * S + s) * G * m + g * m + c;
            const std::size_t yi = (b * G + g) * S * m + s * m + c;
            if (forward)
              dst[yi] = src[xi];
            else
              dst[xi] += src[yi];
          }
  };
  permute(xv.data().data(), y.data().data(), true);
  return t.record(OpKind::swap_blocks, {x.id}, std::move(y), [permute](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    permute(n.grad.data().data(), tp.grad_buffer(n.inputs[0]).data().data(), false);
  });
}

inline Var relu(Var x) {
  Tape& t = detail::tape_of(x);
  Tensor y = x.value();
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return t.record(OpKind::relu, {x.id}, std::move(y), [](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    Tensor& gx = tp.grad_buffer(n.inputs[0]);
    const Tensor& xv = tp.value(n.inputs[0]);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0.0) gx[i] += n.grad[i];
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return t.record(OpKind::add, {a.id, b.id}, std::move(y), [](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    for (int k = 0; k < 2; ++k) {
      if (!detail::wants(tp, n.inputs[k])) continue;
      Tensor& g = tp.grad_buffer(n.inputs[k]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return t.record(OpKind::sub, {a.id, b.id}, std::move(y), [](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    for (int k = 0; k < 2; ++k) {
      if (!detail::wants(tp, n.inputs[k])) continue;
      Tensor& g = tp.grad_buffer(n.inputs[k]);
      const double s = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return t.record(OpKind::mul, {a.id, b.id}, std::move(y), [](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    for (int k = 0; k < 2; ++k) {
      if (!detail::wants(tp, n.inputs[k])) continue;
      Tensor& g = tp.grad_buffer(n.inputs[k]);
      const Tensor& other = tp.value(n.inputs[1 - k]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * other[i];
    }
  });
}

inline Var scale(Var a, double s) {
  Tape& t = detail::tape_of(a);
  Tensor y = a.value();
  for (auto& v : y.data()) v *= s;
  return t.record(OpKind::scale, {a.id}, std::move(y), [s](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    Tensor& g = tp.grad_buffer(n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

inline Var square(Var a) {
  Tape& t = detail::tape_of(a);
  Tensor y = a.value();
  for (auto& v : y.data()) v *= v;
  return t.record(OpKind::square, {a.id}, std::move(y), [](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    Tensor& g = tp.grad_buffer(n.inputs[0]);
    const Tensor& xv = tp.value(n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * xv[i] * n.grad[i];
  });
}

inline Var cube(Var a) {
  Tape& t = detail::tape_of(a);
  Tensor y = a.value();
  for (auto& v : y.data()) v = v * v * v;
  return t.record(OpKind::cube, {a.id}, std::move(y), [](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    Tensor& g = tp.grad_buffer(n.inputs[0]);
    const Tensor& xv = tp.value(n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * xv[i] * xv[i] * n.grad[i];
  });
}

/// Sum of all entries, shape [1].
inline Var sum(Var a) {
  Tape& t = detail::tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return t.record(OpKind::sum, {a.id}, Tensor({1}, std::vector<double>{s}), [](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    Tensor& g = tp.grad_buffer(n.inputs[0]);
    const double gs = n.grad[0];
    for (auto& v : g.data()) v += gs;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// [rows, n] -> [rows], summing each row. Leading axes other than the last
/// are flattened into rows.
inline Var row_sum(Var a) {
  Tape& t = detail::tape_of(a);
  const Tensor& av = a.value();
  const std::size_t n = av.shape().back(), rows = av.size() / n;
  Tensor y({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += av[r * n + c];
    y[r] = s;
  }
  return t.record(OpKind::row_sum, {a.id}, std::move(y), [n, rows](Tape& tp, std::size_t self) {
    const auto& nd = tp.node(self);
    Tensor& g = tp.grad_buffer(nd.inputs[0]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += nd.grad[r];
  });
}

/// Multiplies every row of a [rows, n] by the vector w [n].
inline Var mul_rows(Var a, Var w) {
  Tape& t = detail::tape_of(a);
  detail::same_tape(a, w);
  const Tensor& av = a.value();
  const std::size_t n = av.shape().back(), rows = av.size() / n;
  if (w.value().size() != n) throw DimensionError("mul_rows: weight length vs last axis");
  Tensor y = av;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] *= w.value()[c];
  return t.record(OpKind::mul_rows, {a.id, w.id}, std::move(y), [n, rows](Tape& tp, std::size_t self) {
    const auto& nd = tp.node(self);
    const std::size_t ai = nd.inputs[0], wi = nd.inputs[1];
    const Tensor& av = tp.value(ai);
    const Tensor& wv = tp.value(wi);
    if (detail::wants(tp, ai)) {
      Tensor& g = tp.grad_buffer(ai);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += nd.grad[r * n + c] * wv[c];
    }
    if (detail::wants(tp, wi)) {
      Tensor& g = tp.grad_buffer(wi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += nd.grad[r * n + c] * av[r * n + c];
    }
  });
}

/// Right-multiplies a [rows, n] (leading axes flattened) by a fixed [n, m]
/// matrix, giving [rows, m].
inline Var linear_map(Var a, const Tensor& matrix) {
  Tape& t = detail::tape_of(a);
  const Tensor& av = a.value();
  if (matrix.rank() != 2) throw DimensionError("linear_map: matrix must be rank 2");
  const std::size_t n = matrix.dim(0), m = matrix.dim(1);
  if (av.shape().back() != n)
    throw DimensionError("linear_map: last axis " + std::to_string(av.shape().back()) +
                         " vs matrix rows " + std::to_string(n));
  const std::size_t rows = av.size() / n;
  using detail::RowMat;
  Tensor y({rows, m});
  Eigen::Map<const RowMat> A(av.data().data(), rows, n);
  Eigen::Map<const RowMat> M(matrix.data().data(), n, m);
  Eigen::Map<RowMat> Y(y.data().data(), rows, m);
  Y.noalias() = A * M;
  return t.record(OpKind::linear_map, {a.id}, std::move(y),
                  [matrix, rows, n, m](Tape& tp, std::size_t self) {
                    const auto& nd = tp.node(self);
                    Eigen::Map<const RowMat> GY(nd.grad.data().data(), rows, m);
                    Eigen::Map<const RowMat> M(matrix.data().data(), n, m);
                    Eigen::Map<RowMat> GA(tp.grad_buffer(nd.inputs[0]).data().data(), rows, n);
                    GA.noalias() += GY * M.transpose();
                  });
}

inline Var reshape(Var a, Shape shape) {
  Tape& t = detail::tape_of(a);
  Tensor y = a.value().reshaped(std::move(shape));
  return t.record(OpKind::reshape, {a.id}, std::move(y), [](Tape& tp, std::size_t self) {
    const auto& n = tp.node(self);
    Tensor& g = tp.grad_buffer(n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

/// Mean over the batch of the per-sample squared error sum.
inline Var mse(Var pred, const Tensor& target) {
  Tape& t = detail::tape_of(pred);
  require_same_shape(pred.value(), target, "mse");
  const double batch = static_cast<double>(pred.value().dim(0));
  return scale(sum(square(sub(pred, t.constant(target)))), 1.0 / batch);
}

}  // namespace bnet2
