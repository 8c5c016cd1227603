#include <gtest/gtest.h>

#include <random>

#include "bnet2/complex_embed.hpp"

using namespace bnet2;

namespace {

Complex random_complex(std::mt19937_64& rng, double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng)};
}

}  // namespace

TEST(Embed, SignSplit) {
  EXPECT_EQ(embed({-2.0, 3.0}), (Embedded4{0, 3, 2, 0}));
  EXPECT_EQ(embed({0.0, 0.0}), (Embedded4{0, 0, 0, 0}));
}

TEST(Embed, DecodeRoundTrip) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 1000; ++i) {
    const Complex x = random_complex(rng);
    const auto v = embed(x);
    EXPECT_EQ(decode(v), x);
    EXPECT_EQ(v[0] * v[2], 0.0);
    EXPECT_EQ(v[1] * v[3], 0.0);
    for (double e : v) EXPECT_GE(e, 0.0);
  }
}

TEST(Decode, Basics) {
  EXPECT_EQ(decode(Embedded4{1, 0, 0, 0}), Complex(1, 0));
  EXPECT_EQ(decode(Embedded4{0, 0, 1, 0}), Complex(-1, 0));
  // Non-canonical nonnegative forms decode to the same value.
  EXPECT_EQ(decode(Embedded4{3, 1, 1, 0}), Complex(2, 1));
  const std::vector<double> stacked{1, 0, 0, 2, 0, 5, 0, 0};
  EXPECT_EQ(decode_all(stacked), (std::vector<Complex>{{1, -2}, {0, 5}}));
  EXPECT_THROW(decode_all(std::vector<double>(5)), DimensionError);
}

TEST(ExtendAssign, IdentityAndRotation) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 20; ++i) {
    const Complex x = random_complex(rng);
    const auto one = decode(relu4(apply_block(extend_assign(1.0), embed(x))));
    EXPECT_NEAR(std::abs(one - x), 0.0, 1e-15);
    const auto rot = decode(relu4(apply_block(extend_assign({0.0, 1.0}), embed(x))));
    EXPECT_NEAR(std::abs(rot - Complex(-x.imag(), x.real())), 0.0, 1e-15);
  }
}

TEST(ExtendAssign, MultipliesThroughRelu) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 1000; ++i) {
    const Complex a = random_complex(rng), x = random_complex(rng);
    const auto y = decode(relu4(apply_block(extend_assign(a), embed(x))));
    EXPECT_NEAR(std::abs(y - a * x), 0.0, 1e-14);
  }
}

TEST(ExtendAssign, RowsSumToZero) {
  std::mt19937_64 rng(24);
  const auto m = extend_assign(random_complex(rng));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(m[4 * i] + m[4 * i + 1] + m[4 * i + 2] + m[4 * i + 3], 0.0);
}

TEST(ExtendAssign, MultiplyChainIsExact) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    Complex x = random_complex(rng), prod = 1.0;
    Embedded4 v = embed(x);
    for (int l = 0; l < 8; ++l) {
      const Complex a = random_complex(rng, 1.2);
      prod *= a;
      v = relu4(apply_block(extend_assign(a), v));
    }
    EXPECT_NEAR(std::abs(decode(v) - prod * x), 0.0, 1e-12 * std::max(1.0, std::abs(prod * x)));
  }
}

TEST(ExtendMatrix, MatrixVectorProduct) {
  std::mt19937_64 rng(26);
  const std::size_t m = 5, n = 7;
  ComplexMatrix a(m, n);
  for (auto& e : a.data) e = random_complex(rng);
  std::vector<Complex> x(n);
  std::vector<double> xe;
  for (auto& e : x) {
    e = random_complex(rng);
    for (double v : embed(e)) xe.push_back(v);
  }
  const auto big = extend_matrix(a);
  std::vector<double> y(4 * m, 0.0);
  for (std::size_t i = 0; i < 4 * m; ++i) {
    for (std::size_t j = 0; j < 4 * n; ++j) y[i] += big[i * 4 * n + j] * xe[j];
    y[i] = std::max(y[i], 0.0);
  }
  const auto dec = decode_all(y);
  for (std::size_t i = 0; i < m; ++i) {
    Complex ref = 0.0;
    for (std::size_t j = 0; j < n; ++j) ref += a(i, j) * x[j];
    EXPECT_NEAR(std::abs(dec[i] - ref), 0.0, 1e-12);
  }
}

TEST(StoreBlock, ConvLayoutMatchesExtendAssign) {
  const Complex a(0.3, -1.7);
  const std::size_t stride = 12;
  std::vector<double> w(8 * stride, 0.0);
  store_block(w.data(), stride, 1, 2, a, 2.0);
  const auto blk = extend_assign(2.0 * a);
  for (int u = 0; u < 4; ++u)
    for (int v = 0; v < 4; ++v) EXPECT_EQ(w[(4 + v) * stride + 8 + u], blk[4 * u + v]);
  std::vector<double> col(3 * stride, 0.0);
  store_real_input_column(col.data(), stride, 2, 1, a);
  for (int u = 0; u < 4; ++u) EXPECT_EQ(col[2 * stride + 4 + u], extend_assign(a)[4 * u]);
}
