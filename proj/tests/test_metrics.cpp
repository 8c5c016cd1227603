#include <gtest/gtest.h>

#include <random>

#include "bnet2/metrics.hpp"

using namespace bnet2;

namespace {

ComplexMatrix random_matrix(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  ComplexMatrix a(m, n);
  for (auto& e : a.data) e = {g(rng), g(rng)};
  return a;
}

}  // namespace

TEST(Norms, OneAndInfOnKnownMatrix) {
  ComplexMatrix a(2, 2);
  a(0, 0) = {3, 4};
  a(0, 1) = -1.0;
  a(1, 0) = 2.0;
  a(1, 1) = {0, -2};
  EXPECT_DOUBLE_EQ(norm_1(a), 7.0);
  EXPECT_DOUBLE_EQ(norm_inf(a), 6.0);
}

TEST(Norms, PowerIterationMatchesSvd) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto a = random_matrix(16, 64, seed);
    const auto p = norm_2_power(a);
    EXPECT_TRUE(p.converged);
    EXPECT_NEAR(p.value / norm_2_svd(a), 1.0, 1e-6);
    // Tall orientation uses the other Gram matrix.
    ComplexMatrix t(64, 16);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 64; ++j) t(j, i) = a(i, j);
    EXPECT_NEAR(norm_2_power(t).value / norm_2_svd(t), 1.0, 1e-6);
  }
}

TEST(Norms, DftMatrixTwoNorm) {
  // Rows of the N-point DFT are orthogonal with norm sqrt(N).
  const auto d = dense_dft_matrix(32, 8);
  EXPECT_NEAR(matrix_norm(d, NormKind::two), std::sqrt(32.0), 1e-9);
  EXPECT_NEAR(matrix_norm(d, NormKind::one), 8.0, 1e-12);
  EXPECT_NEAR(matrix_norm(d, NormKind::inf), 32.0, 1e-12);
}

TEST(RelativeError, ExactIsZeroAndScaling) {
  const auto a = random_matrix(8, 12, 4);
  for (auto p : {NormKind::one, NormKind::two, NormKind::inf}) EXPECT_EQ(relative_error(a, a, p), 0.0);
  ComplexMatrix b = a;
  for (auto& e : b.data) e *= 0.9;
  for (auto p : {NormKind::one, NormKind::two, NormKind::inf}) EXPECT_NEAR(relative_error(a, b, p), 0.1, 1e-6);
  EXPECT_THROW(relative_error(random_matrix(2, 2, 5), a, NormKind::one), DimensionError);
  EXPECT_THROW(relative_error(ComplexMatrix(2, 2), ComplexMatrix(2, 2), NormKind::one), NumericError);
}

TEST(FitLine, RecoversSlope) {
  const std::vector<double> x{6, 7, 8, 9, 10};
  std::vector<double> e;
  for (double l : x) e.push_back(3.0 * std::pow(10.0, -1.14 * l));
  EXPECT_NEAR(log_rate(x, e), -1.14, 1e-12);
  const auto f = fit_line(std::vector<double>{0, 1}, std::vector<double>{1, 3});
  EXPECT_DOUBLE_EQ(f.slope, 2.0);
  EXPECT_DOUBLE_EQ(f.intercept, 1.0);
  EXPECT_THROW(fit_line(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
}

TEST(Pinv, InvertsAndHandlesRankDeficiency) {
  Eigen::MatrixXd a(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  const Eigen::MatrixXd p = pinv(a);
  EXPECT_LT((p * a - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-12);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
  s(0, 0) = 2.0;
  const Eigen::MatrixXd ps = pinv(s);
  EXPECT_DOUBLE_EQ(ps(0, 0), 0.5);
  EXPECT_EQ(ps(1, 1), 0.0);
}
