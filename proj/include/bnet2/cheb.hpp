#pragma once

// Chebyshev nodes, Lagrange bases on shifted/scaled intervals, the Fourier
// kernel, and closed-form error bounds for the interpolative factorization.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "bnet2/tensor.hpp"

namespace bnet2 {

using Complex = std::complex<double>;

struct Interval {
  double center = 0.0;
  double width = 1.0;

  Interval() = default;
  Interval(double c, double w) : center(c), width(w) {
    if (!(w > 0.0)) throw ValidationError("interval width must be positive");
  }
  double lo() const { return center - 0.5 * width; }
  double hi() const { return center + 0.5 * width; }
};

/// z_i = cos(i*pi/r)/2 on [-1/2, 1/2], i = 0..r-1 (strictly decreasing).
inline std::vector<double> cheb_points(int r) {
  if (r < 1) throw ValidationError("cheb_points: order must be >= 1");
  std::vector<double> z(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) z[i] = 0.5 * std::cos(i * std::numbers::pi / r);
  return z;
}

/// Chebyshev nodes of order r mapped onto an interval.
class ChebSystem {
 public:
  ChebSystem(int r, Interval interval) : reference_(cheb_points(r)), interval_(interval) {
    mapped_.reserve(reference_.size());
    for (double z : reference_) mapped_.push_back(interval_.width * z + interval_.center);
  }

  int order() const { return static_cast<int>(reference_.size()); }
  const Interval& interval() const { return interval_; }
  const std::vector<double>& reference_points() const { return reference_; }
  const std::vector<double>& points() const { return mapped_; }
  double point(int k) const { return mapped_.at(static_cast<std::size_t>(k)); }

  /// Lagrange basis at node k evaluated at x, direct product form.
  double lagrange(int k, double x) const {
    check_index(k);
    double v = 1.0;
    for (int p = 0; p < order(); ++p) {
      if (p == k) continue;
      const double den = mapped_[k] - mapped_[p];
      if (den == 0.0) throw NumericError("lagrange: coincident Chebyshev nodes");
      v *= (x - mapped_[p]) / den;
    }
    return v;
  }

  /// Interval-independent form: y = (x - z'_k) / width.
  double lagrange_reference(int k, double y) const {
    check_index(k);
    double v = 1.0;
    for (int p = 0; p < order(); ++p) {
      if (p == k) continue;
      const double d = reference_[k] - reference_[p];
      v *= (y + d) / d;
    }
    return v;
  }

 private:
  void check_index(int k) const {
    if (k < 0 || k >= order())
      throw DimensionError("lagrange: node index " + std::to_string(k) + " outside [0," +
                           std::to_string(order()) + ")");
  }

  std::vector<double> reference_;
  Interval interval_;
  std::vector<double> mapped_;
};

/// exp(-2 pi i xi t).
inline Complex dft_kernel(double xi, double t) {
  const double phase = -2.0 * std::numbers::pi * xi * t;
  return {std::cos(phase), std::sin(phase)};
}

/// exp(sign * 2 pi i x) for a general sign.
inline Complex fourier_phase(double x, double sign) {
  const double phase = sign * 2.0 * std::numbers::pi * x;
  return {std::cos(phase), std::sin(phase)};
}

/// Dense complex matrix, row-major.
struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Complex> data;

  ComplexMatrix() = default;
  ComplexMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}
  Complex& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const Complex& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Entry (xi, j) = exp(-2 pi i xi j / N) for xi in [K], j in [N].
inline ComplexMatrix dense_dft_matrix(std::size_t N, std::size_t K) {
  if (N < 1 || K < 1) throw ValidationError("dense_dft_matrix: N and K must be >= 1");
  ComplexMatrix m(K, N);
  for (std::size_t xi = 0; xi < K; ++xi)
    for (std::size_t j = 0; j < N; ++j) {
      // Reduce xi*j mod N first so the phase argument stays small.
      const auto e = static_cast<double>((xi * j) % N);
      m(xi, j) = dft_kernel(1.0, e / static_cast<double>(N));
    }
  return m;
}

/// Outcome of a closed-form bound evaluation. `applicable` is false when
/// pi*e*K <= r*2^L fails; the value is still computed.
struct BoundValue {
  double value = 0.0;
  bool applicable = true;
};

inline bool bound_precondition(int r, double K, int L) {
  return std::numbers::pi * std::numbers::e * K <= r * std::ldexp(1.0, L);
}

/// (2 + (2/pi) ln r) * (pi e K / (r 2^{L+1}))^r. Independent of ell.
inline BoundValue interp_error_bound(int r, double K, int L, int /*ell*/ = 0) {
  using std::numbers::pi;
  const double base = pi * std::numbers::e * K / (r * std::ldexp(1.0, L + 1));
  return {(2.0 + 2.0 / pi * std::log(static_cast<double>(r))) * std::pow(base, r),
          bound_precondition(r, K, L)};
}

/// C_{r,K} (r^{1-1/p} ((2/pi) ln r + 1) / 2^{r-2})^L with
/// C_{r,K} = (2 + (4/pi) ln r)^3 (pi e K)^r / (2r)^{r-1}, for p in [1, inf].
inline BoundValue theorem_bound(int r, double K, int L, double p) {
  using std::numbers::pi;
  if (!(p >= 1.0)) throw ValidationError("theorem_bound: p must be in [1, inf]");
  const double lr = std::log(static_cast<double>(r));
  const double exponent = std::isinf(p) ? 1.0 : 1.0 - 1.0 / p;
  // Evaluated in log space; (pi e K)^r overflows quickly otherwise.
  const double log_c = 3.0 * std::log(2.0 + 4.0 / pi * lr) + r * std::log(pi * std::numbers::e * K) -
                       (r - 1) * std::log(2.0 * r);
  const double log_rate = exponent * lr + std::log(2.0 / pi * lr + 1.0) - (r - 2) * std::log(2.0);
  return {std::exp(log_c + L * log_rate), bound_precondition(r, K, L)};
}

}  // namespace bnet2
