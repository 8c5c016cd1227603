#pragma once

// Complex arithmetic on ReLU networks. A complex x is carried as four
// nonnegative reals ((Re x)+, (Im x)+, (Re x)-, (Im x)-); multiplication by a
// fixed coefficient a is a signed 4x4 block followed by ReLU.

#include <array>
#include <span>
#include <vector>

#include "bnet2/cheb.hpp"

namespace bnet2 {

using Embedded4 = std::array<double, 4>;

/// Row-major 4x4 block realising multiplication by one complex coefficient.
using ExtendBlock = std::array<double, 16>;

inline Embedded4 embed(Complex x) {
  const double re = x.real(), im = x.imag();
  return {re > 0 ? re : 0.0, im > 0 ? im : 0.0, re < 0 ? -re : 0.0, im < 0 ? -im : 0.0};
}

/// (v0 - v2) + i (v1 - v3). Entries need not be nonnegative.
inline Complex decode(std::span<const double, 4> v) { return {v[0] - v[2], v[1] - v[3]}; }
inline Complex decode(const Embedded4& v) { return decode(std::span<const double, 4>(v)); }

/// Decodes a stacked vector of 4-blocks.
inline std::vector<Complex> decode_all(std::span<const double> v) {
  if (v.size() % 4 != 0) throw DimensionError("decode: length is not a multiple of 4");
  std::vector<Complex> out(v.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[4 * i] - v[4 * i + 2], v[4 * i + 1] - v[4 * i + 3]};
  return out;
}

inline ExtendBlock extend_assign(Complex a) {
  const double re = a.real(), im = a.imag();
  return {re,  -im, -re, im,   //
          im,  re,  -im, -re,  //
          -re, im,  re,  -im,  //
          -im, -re, im,  re};
}

inline Embedded4 apply_block(const ExtendBlock& m, const Embedded4& v) {
  Embedded4 y{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) y[i] += m[4 * i + j] * v[j];
  return y;
}

inline Embedded4 relu4(Embedded4 v) {
  for (auto& x : v) x = x > 0 ? x : 0.0;
  return v;
}

/// Real matrix (4m x 4n, row-major) whose blocks are extend_assign of the
/// entries of an m x n complex matrix.
inline std::vector<double> extend_matrix(const ComplexMatrix& a) {
  const std::size_t R = 4 * a.rows, C = 4 * a.cols;
  std::vector<double> out(R * C);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      const auto blk = extend_assign(a(i, j));
      for (int u = 0; u < 4; ++u)
        for (int v = 0; v < 4; ++v) out[(4 * i + u) * C + 4 * j + v] = blk[4 * u + v];
    }
  return out;
}

/// Writes the block for coefficient `a` into conv-style weights stored as
/// [in, out] with row stride `out_stride`: entry (in 4q+v, out 4c+u) = block(u, v).
inline void store_block(double* w, std::size_t out_stride, std::size_t in_complex,
                        std::size_t out_complex, Complex a, double factor = 1.0) {
  const auto blk = extend_assign(a * factor);
  for (int u = 0; u < 4; ++u)
    for (int v = 0; v < 4; ++v) w[(4 * in_complex + v) * out_stride + 4 * out_complex + u] = blk[4 * u + v];
}

/// Real-input variant: a real x is (x+, 0, x-, 0), so only block column 0
/// survives; entry (in, out 4c+u) = block(u, 0).
inline void store_real_input_column(double* w, std::size_t out_stride, std::size_t in_real,
                                    std::size_t out_complex, Complex a) {
  const auto blk = extend_assign(a);
  for (int u = 0; u < 4; ++u) w[in_real * out_stride + 4 * out_complex + u] = blk[4 * u];
}

}  // namespace bnet2
