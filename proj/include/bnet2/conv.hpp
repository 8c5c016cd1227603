#pragma once

// Non-overlapping 1D convolution kernels (kernel size == stride) with an
// optional block-sparse channel pattern. Layout is channels-last:
// input [batch, spatial, in_ch], weights [kernel, block_in, out_ch],
// output [batch, spatial / kernel, out_ch].
//
// The forward kernel accumulates each output in a fixed order (bias, then
// taps, then input channels ascending). A block pattern and its zero-filled
// dense equivalent therefore produce bit-identical results.

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <vector>

#include "bnet2/tensor.hpp"

namespace bnet2 {

/// Output channels [out_begin, out_begin + out_count) read input channels
/// [in_begin, in_begin + block_in).
struct ChannelBlock {
  std::size_t in_begin = 0;
  std::size_t out_begin = 0;
  std::size_t out_count = 0;

  friend bool operator==(const ChannelBlock&, const ChannelBlock&) = default;
};

struct ConvGeometry {
  std::size_t kernel = 1;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t block_in = 0;
  std::vector<ChannelBlock> blocks;

  static ConvGeometry dense(std::size_t kernel, std::size_t in_ch, std::size_t out_ch) {
    return {kernel, in_ch, out_ch, in_ch, {{0, 0, out_ch}}};
  }

  /// Equal partition into `groups` parts on both sides.
  static ConvGeometry grouped(std::size_t kernel, std::size_t in_ch, std::size_t out_ch,
                              std::size_t groups) {
    if (groups == 0 || in_ch % groups != 0 || out_ch % groups != 0)
      throw DimensionError("grouped conv: channels " + std::to_string(in_ch) + "->" +
                           std::to_string(out_ch) + " not divisible by " +
                           std::to_string(groups) + " groups");
    ConvGeometry g{kernel, in_ch, out_ch, in_ch / groups, {}};
    const std::size_t og = out_ch / groups;
    for (std::size_t p = 0; p < groups; ++p) g.blocks.push_back({p * g.block_in, p * og, og});
    return g;
  }

  Shape weight_shape() const { return {kernel, block_in, out_channels}; }
  std::size_t weight_count() const { return kernel * block_in * out_channels; }
  bool is_dense() const { return blocks.size() == 1 && block_in == in_channels; }

  void validate() const {
    if (kernel == 0) throw DimensionError("conv kernel must be positive");
    std::size_t next = 0;
    for (const auto& b : blocks) {
      if (b.out_begin != next)
        throw DimensionError("conv blocks must tile the out-channel axis in order");
      if (b.in_begin + block_in > in_channels)
        throw DimensionError("conv block reads past in-channel axis");
      next += b.out_count;
    }
    if (next != out_channels) throw DimensionError("conv blocks do not cover the out-channel axis");
  }

  /// Dense geometry with the same kernel and channel counts.
  ConvGeometry densified() const { return dense(kernel, in_channels, out_channels); }

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

/// Expands block-pattern weights into dense weights with zeros elsewhere.
inline Tensor densify_weights(const ConvGeometry& g, const Tensor& w) {
  if (w.shape() != g.weight_shape())
    throw DimensionError("weights " + shape_string(w.shape()) + " vs geometry " +
                         shape_string(g.weight_shape()));
  Tensor out({g.kernel, g.in_channels, g.out_channels});
  for (const auto& b : g.blocks)
    for (std::size_t i = 0; i < g.kernel; ++i)
      for (std::size_t q = 0; q < g.block_in; ++q)
        for (std::size_t c = 0; c < b.out_count; ++c) {
          const std::size_t oc = b.out_begin + c;
          out[(i * g.in_channels + b.in_begin + q) * g.out_channels + oc] =
              w[(i * g.block_in + q) * g.out_channels + oc];
        }
  return out;
}

/// Inverse of densify_weights: reads back the block entries.
inline Tensor extract_block_weights(const ConvGeometry& g, const Tensor& dense) {
  if (dense.shape() != Shape{g.kernel, g.in_channels, g.out_channels})
    throw DimensionError("dense weights " + shape_string(dense.shape()) + " do not match geometry");
  Tensor w(g.weight_shape());
  for (const auto& b : g.blocks)
    for (std::size_t i = 0; i < g.kernel; ++i)
      for (std::size_t q = 0; q < g.block_in; ++q)
        for (std::size_t c = 0; c < b.out_count; ++c) {
          const std::size_t oc = b.out_begin + c;
          w[(i * g.block_in + q) * g.out_channels + oc] =
              dense[(i * g.in_channels + b.in_begin + q) * g.out_channels + oc];
        }
  return w;
}

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Accumulates T rows at once. Each output element sees contributions in
// (tap, channel) order regardless of T.
template <int T>
inline void accumulate_rows(const double* const* xrows, std::size_t taps, std::size_t x_tap_stride,
                            std::size_t block_in, const double* w, std::size_t w_tap_stride,
                            std::size_t w_row_stride, double* const* yrows, std::size_t count) {
  for (std::size_t i = 0; i < taps; ++i) {
    for (std::size_t q = 0; q < block_in; ++q) {
      double xv[T];
      bool any = false;
      for (int t = 0; t < T; ++t) {
        xv[t] = xrows[t][i * x_tap_stride + q];
        any |= (xv[t] != 0.0);
      }
      if (!any) continue;
      const double* wr = w + i * w_tap_stride + q * w_row_stride;
      for (int t = 0; t < T; ++t) {
        double* y = yrows[t];
        const double a = xv[t];
        for (std::size_t c = 0; c < count; ++c) y[c] += a * wr[c];
      }
    }
  }
}

}  // namespace detail

/// Forward pass over `rows` = batch * out_spatial rows. `bias` may be null.
inline void conv_forward(const ConvGeometry& g, const double* x, std::size_t rows, const double* w,
                         const double* bias, double* y) {
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const std::size_t xstride = g.kernel * cin;
  for (const auto& b : g.blocks) {
    const double* wb = w + b.out_begin;
    std::size_t r = 0;
    auto init = [&](double* yr) {
      for (std::size_t c = 0; c < b.out_count; ++c) yr[c] = bias ? bias[b.out_begin + c] : 0.0;
    };
    for (; r + 4 <= rows; r += 4) {
      const double* xr[4];
      double* yr[4];
      for (int t = 0; t < 4; ++t) {
        xr[t] = x + (r + t) * xstride + b.in_begin;
        yr[t] = y + (r + t) * cout + b.out_begin;
        init(yr[t]);
      }
      detail::accumulate_rows<4>(xr, g.kernel, cin, g.block_in, wb, g.block_in * cout, cout, yr,
                                 b.out_count);
    }
    for (; r < rows; ++r) {
      const double* xr[1] = {x + r * xstride + b.in_begin};
      double* yr[1] = {y + r * cout + b.out_begin};
      init(yr[0]);
      detail::accumulate_rows<1>(xr, g.kernel, cin, g.block_in, wb, g.block_in * cout, cout, yr,
                                 b.out_count);
    }
  }
}

/// Backward pass; any of gx, gw, gb may be null when not needed.
inline void conv_backward(const ConvGeometry& g, const double* x, std::size_t rows, const double* w,
                          const double* gy, double* gx, double* gw, double* gb) {
  using detail::ConstStrided;
  using detail::Strided;
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const Eigen::Index xs = static_cast<Eigen::Index>(g.kernel * cin);
  const Eigen::Index R = static_cast<Eigen::Index>(rows);
  const Eigen::Index bi = static_cast<Eigen::Index>(g.block_in);
  for (const auto& b : g.blocks) {
    const Eigen::Index oc = static_cast<Eigen::Index>(b.out_count);
    ConstStrided GY(gy + b.out_begin, R, oc, Eigen::OuterStride<>(static_cast<Eigen::Index>(cout)));
    for (std::size_t i = 0; i < g.kernel; ++i) {
      const std::size_t woff = i * g.block_in * cout + b.out_begin;
      if (gw) {
        ConstStrided X(x + i * cin + b.in_begin, R, bi, Eigen::OuterStride<>(xs));
        Strided GW(gw + woff, bi, oc, Eigen::OuterStride<>(static_cast<Eigen::Index>(cout)));
        GW.noalias() += X.transpose() * GY;
      }
      if (gx) {
        ConstStrided W(w + woff, bi, oc, Eigen::OuterStride<>(static_cast<Eigen::Index>(cout)));
        Strided GX(gx + i * cin + b.in_begin, R, bi, Eigen::OuterStride<>(xs));
        GX.noalias() += GY * W.transpose();
      }
    }
    if (gb)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < b.out_count; ++c) gb[b.out_begin + c] += gy[r * cout + b.out_begin + c];
  }
}

/// Transposed convolution: every input row produces `kernel` output rows.
/// Weights are [kernel, block_in, out_ch]; output row layout per input row is
/// [kernel, out_ch], i.e. output [batch, spatial * kernel, out_ch].
inline void conv_transpose_forward(const ConvGeometry& g, const double* x, std::size_t rows,
                                   const double* w, const double* bias, double* y) {
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < g.kernel; ++i) {
      double* yr = y + (r * g.kernel + i) * cout;
      for (const auto& b : g.blocks) {
        double* yb[1] = {yr + b.out_begin};
        for (std::size_t c = 0; c < b.out_count; ++c) yb[0][c] = bias ? bias[b.out_begin + c] : 0.0;
        const double* xr[1] = {x + r * cin + b.in_begin};
        detail::accumulate_rows<1>(xr, 1, 0, g.block_in, w + i * g.block_in * cout + b.out_begin, 0,
                                   cout, yb, b.out_count);
      }
    }
  }
}

inline void conv_transpose_backward(const ConvGeometry& g, const double* x, std::size_t rows,
                                    const double* w, const double* gy, double* gx, double* gw,
                                    double* gb) {
  using detail::ConstStrided;
  using detail::Strided;
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const Eigen::Index R = static_cast<Eigen::Index>(rows);
  const Eigen::Index bi = static_cast<Eigen::Index>(g.block_in);
  const Eigen::Index ys = static_cast<Eigen::Index>(g.kernel * cout);
  for (const auto& b : g.blocks) {
    const Eigen::Index oc = static_cast<Eigen::Index>(b.out_count);
    for (std::size_t i = 0; i < g.kernel; ++i) {
      ConstStrided GY(gy + i * cout + b.out_begin, R, oc, Eigen::OuterStride<>(ys));
      const std::size_t woff = i * g.block_in * cout + b.out_begin;
      if (gw) {
        ConstStrided X(x + b.in_begin, R, bi, Eigen::OuterStride<>(static_cast<Eigen::Index>(cin)));
        Strided GW(gw + woff, bi, oc, Eigen::OuterStride<>(static_cast<Eigen::Index>(cout)));
        GW.noalias() += X.transpose() * GY;
      }
      if (gx) {
        ConstStrided W(w + woff, bi, oc, Eigen::OuterStride<>(static_cast<Eigen::Index>(cout)));
        Strided GX(gx + b.in_begin, R, bi, Eigen::OuterStride<>(static_cast<Eigen::Index>(cin)));
        GX.noalias() += GY * W.transpose();
      }
      if (gb)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < b.out_count; ++c)
            gb[b.out_begin + c] += gy[(r * g.kernel + i) * cout + b.out_begin + c];
    }
  }
}

/// Single-sample convolution on input [spatial, in_ch] with dense channels.
/// No activation is applied.
inline Tensor blocked_conv1d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                             std::size_t kernel, std::size_t stride) {
  if (kernel != stride) throw DimensionError("blocked_conv1d requires kernel == stride");
  if (input.rank() != 2) throw DimensionError("blocked_conv1d: input must be [spatial, in_ch]");
  if (weights.rank() != 3) throw DimensionError("blocked_conv1d: weights must be [kernel, in_ch, out_ch]");
  const std::size_t spatial = input.dim(0), cin = input.dim(1);
  if (weights.dim(0) != kernel) throw DimensionError("blocked_conv1d: axis 0 (kernel) of weights");
  if (weights.dim(1) != cin) throw DimensionError("blocked_conv1d: axis 1 (in_ch) of weights");
  const std::size_t cout = weights.dim(2);
  if (bias.size() != cout) throw DimensionError("blocked_conv1d: bias length vs axis 2 (out_ch)");
  if (spatial % stride != 0) throw DimensionError("blocked_conv1d: axis 0 (spatial) not divisible by stride");
  const auto g = ConvGeometry::dense(kernel, cin, cout);
  Tensor out({spatial / stride, cout});
  conv_forward(g, input.data().data(), spatial / stride, weights.data().data(), bias.data().data(),
               out.data().data());
  return out;
}

}  // namespace bnet2
