#pragma once

// Operator norms of complex matrices, pseudo-inverse, and log-linear rate
// fits.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "bnet2/cheb.hpp"

namespace bnet2 {

using EigenComplexMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline EigenComplexMatrix to_eigen(const ComplexMatrix& m) {
  return Eigen::Map<const EigenComplexMatrix>(m.data.data(), static_cast<Eigen::Index>(m.rows),
                                              static_cast<Eigen::Index>(m.cols));
}

inline ComplexMatrix subtract(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw DimensionError("subtract: matrix shapes differ");
  ComplexMatrix d(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) d.data[i] = a.data[i] - b.data[i];
  return d;
}

/// Maximum absolute column sum.
inline double norm_1(const ComplexMatrix& m) {
  double best = 0.0;
  for (std::size_t j = 0; j < m.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

/// Maximum absolute row sum.
inline double norm_inf(const ComplexMatrix& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

struct PowerIterationResult {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Largest singular value by power iteration on the smaller Gram matrix.
inline PowerIterationResult norm_2_power(const ComplexMatrix& m, double rel_tol = 1e-6,
                                         std::size_t max_iter = 10000) {
  const EigenComplexMatrix a = to_eigen(m);
  const Eigen::MatrixXcd g = a.rows() <= a.cols() ? Eigen::MatrixXcd(a * a.adjoint())
                                                   : Eigen::MatrixXcd(a.adjoint() * a);
  PowerIterationResult res;
  if (g.rows() == 0) {
    res.converged = true;
    return res;
  }
  // Deterministic start with every component nonzero.
  Eigen::VectorXcd v(g.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Complex(1.0 + 0.01 * static_cast<double>(i), 0.1);
  v.normalize();
  double lambda = 0.0;
  for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
    Eigen::VectorXcd w = g * v;
    const double next = w.norm();
    if (next == 0.0) {
      res.converged = true;
      res.value = 0.0;
      return res;
    }
    v = w / next;
    if (std::abs(next - lambda) <= rel_tol * 1e-3 * next) {
      lambda = next;
      res.converged = true;
      break;
    }
    lambda = next;
  }
  res.iterations = std::min(res.iterations, max_iter);
  res.value = std::sqrt(lambda);
  return res;
}

/// Largest singular value via Jacobi SVD; used as a cross-check.
inline double norm_2_svd(const ComplexMatrix& m) {
  const Eigen::MatrixXcd a = to_eigen(m);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

enum class NormKind { one, two, inf };

inline double matrix_norm(const ComplexMatrix& m, NormKind p) {
  switch (p) {
    case NormKind::one: return norm_1(m);
    case NormKind::inf: return norm_inf(m);
    case NormKind::two: {
      const auto r = norm_2_power(m);
      if (!r.converged) throw NumericError("power iteration did not converge");
      return r.value;
    }
  }
  return 0.0;
}

/// ||reference - approx||_p / ||reference||_p.
inline double relative_error(const ComplexMatrix& reference, const ComplexMatrix& approx, NormKind p) {
  const double den = matrix_norm(reference, p);
  if (den == 0.0) throw NumericError("relative_error: reference has zero norm");
  return matrix_norm(subtract(reference, approx), p) / den;
}

/// Least-squares line y = intercept + slope * x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit_line: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw ValidationError("fit_line: x values are all equal");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

/// Slope of log10(err) against L.
inline double log_rate(std::span<const double> levels, std::span<const double> errors) {
  std::vector<double> ly(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) ly[i] = std::log10(errors[i]);
  return fit_line(levels, ly).slope;
}

/// Moore-Penrose pseudo-inverse of a real matrix, singular values below
/// tol * sigma_max dropped.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& a, double tol = 1e-12) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  const double cut = s.size() ? tol * s(0) : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace bnet2
