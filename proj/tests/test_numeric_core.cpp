#include <gtest/gtest.h>

#include <random>

#include "bnet2/adam.hpp"
#include "bnet2/conv.hpp"
#include "bnet2/tape.hpp"
#include "test_util.hpp"

using namespace bnet2;
using bnet2::testing::check_gradients;
using bnet2::testing::random_tensor;

TEST(Tensor, RejectsNonFiniteExternalInput) {
  EXPECT_THROW(Tensor::from_external({2}, {1.0, std::nan("")}), NumericError);
  EXPECT_THROW(Tensor::from_external({1}, {INFINITY}), NumericError);
  EXPECT_NO_THROW(Tensor::from_external({2}, {1.0, 2.0}));
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_EQ(Tensor({2, 3}).size(), 6u);
}

TEST(BlockedConv, ZeroInputZeroBiasGivesZero) {
  std::mt19937_64 rng(1);
  const Tensor w = random_tensor({2, 3, 4}, rng);
  const Tensor out = blocked_conv1d(Tensor({8, 3}), w, Tensor({4}), 2, 2);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(BlockedConv, SumPool) {
  const Tensor x({4, 1}, std::vector<double>{1.5, 2.0, -3.0, 7.0});
  const Tensor w({2, 1, 1}, std::vector<double>{1.0, 1.0});
  const Tensor out = blocked_conv1d(x, w, Tensor({1}), 2, 2);
  ASSERT_EQ(out.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(out[0], 3.5);
  EXPECT_DOUBLE_EQ(out[1], 4.0);
}

TEST(BlockedConv, MatchesDenseMatrix) {
  std::mt19937_64 rng(2);
  const std::size_t S = 12, cin = 3, cout = 5, k = 3;
  const Tensor x = random_tensor({S, cin}, rng);
  const Tensor w = random_tensor({k, cin, cout}, rng);
  const Tensor b = random_tensor({cout}, rng);
  const Tensor y = blocked_conv1d(x, w, b, k, k);
  // Materialize the block-diagonal matrix acting on the flattened input.
  const std::size_t rows = (S / k) * cout, cols = S * cin;
  std::vector<double> m(rows * cols, 0.0);
  for (std::size_t j = 0; j < S / k; ++j)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t q = 0; q < cin; ++q)
        for (std::size_t c = 0; c < cout; ++c) m[(j * cout + c) * cols + (k * j + i) * cin + q] = w[(i * cin + q) * cout + c];
  for (std::size_t r = 0; r < rows; ++r) {
    double s = b[r % cout];
    for (std::size_t c = 0; c < cols; ++c) s += m[r * cols + c] * x[c];
    EXPECT_NEAR(y[r], s, 1e-12);
  }
}

TEST(BlockedConv, Linearity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor({8, 2}, rng), z = random_tensor({8, 2}, rng);
    const Tensor w = random_tensor({4, 2, 3}, rng);
    const double a = 0.7, b = -1.3;
    Tensor mix({8, 2});
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * z[i];
    const Tensor zero({3});
    const Tensor fx = blocked_conv1d(x, w, zero, 4, 4), fz = blocked_conv1d(z, w, zero, 4, 4);
    const Tensor fm = blocked_conv1d(mix, w, zero, 4, 4);
    for (std::size_t i = 0; i < fm.size(); ++i) EXPECT_NEAR(fm[i], a * fx[i] + b * fz[i], 1e-12);
    // Linear in the weights too.
    const Tensor w2 = random_tensor({4, 2, 3}, rng);
    Tensor wm({4, 2, 3});
    for (std::size_t i = 0; i < wm.size(); ++i) wm[i] = a * w[i] + b * w2[i];
    const Tensor g1 = blocked_conv1d(x, w2, zero, 4, 4), gm = blocked_conv1d(x, wm, zero, 4, 4);
    for (std::size_t i = 0; i < gm.size(); ++i) EXPECT_NEAR(gm[i], a * fx[i] + b * g1[i], 1e-12);
  }
}

TEST(BlockedConv, ShapeErrorsNameTheAxis) {
  const Tensor x({6, 2});
  try {
    blocked_conv1d(x, Tensor({2, 3, 1}), Tensor({1}), 2, 2);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("axis 1"), std::string::npos);
  }
  EXPECT_THROW(blocked_conv1d(Tensor({5, 2}), Tensor({2, 2, 1}), Tensor({1}), 2, 2), DimensionError);
  EXPECT_THROW(blocked_conv1d(x, Tensor({2, 2, 1}), Tensor({1}), 2, 3), DimensionError);
  EXPECT_THROW(blocked_conv1d(x, Tensor({2, 2, 1}), Tensor({2}), 2, 2), DimensionError);
}

TEST(Relu, Values) {
  Tape t;
  const Var y = relu(t.constant(Tensor::vector({-1.0, 0.0, 2.0})));
  EXPECT_EQ(y.value(), Tensor::vector({0.0, 0.0, 2.0}));
  const Tensor pos = Tensor::vector({0.5, 3.0, 0.0});
  EXPECT_EQ(relu(t.constant(pos)).value(), pos);
}

TEST(Relu, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({40}, rng);
  for (auto& v : x.data())
    if (std::abs(v) < 0.05) v = 0.3;  // stay away from the kink
  const auto res = check_gradients([](Tape&, const std::vector<Var>& p) { return sum(square(relu(p[0]))); }, {x}, 40, 1);
  EXPECT_LT(res.worst_rel, 1e-6);
}

TEST(Backward, Quadratic) {
  Tape t;
  const Var p = t.leaf(Tensor::vector({1.0, 2.0}));
  t.backward(sum(square(p)));
  EXPECT_EQ(t.grad(p), Tensor::vector({2.0, 4.0}));
}

TEST(Backward, ConstantLossHasZeroGradient) {
  Tape t;
  const Var p = t.leaf(Tensor::vector({1.0, -2.0, 3.0}));
  const Var c = t.constant(Tensor::vector({5.0}));
  (void)p;
  t.backward(sum(c));
  EXPECT_EQ(t.grad(p), Tensor::vector({0.0, 0.0, 0.0}));
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape t;
  const Var p = t.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(t.backward(square(p)), DimensionError);
}

TEST(Backward, EveryPrimitiveMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const auto g = ConvGeometry::grouped(2, 4, 6, 2);
  const auto gt = ConvGeometry::grouped(2, 4, 2, 2);
  const Tensor fixed = random_tensor({4, 5}, rng);
  std::vector<Tensor> params{random_tensor({3, 4, 4}, rng),   random_tensor(g.weight_shape(), rng),
                             random_tensor({6}, rng),         random_tensor(gt.weight_shape(), rng),
                             random_tensor({2}, rng),         random_tensor({2, 3, 2, 2}, rng),
                             random_tensor({12}, rng),        random_tensor({4}, rng)};
  auto chain = [&](Tape&, const std::vector<Var>& p) {
    const Var y = relu(conv1d(p[0], p[1], p[2], g));                        // [3,2,6]
    const Var z = conv_transpose1d(reshape(y, {3, 3, 4}), p[3], p[4], gt);  // [3,6,2]
    const Var ld = local_dense(reshape(z, {3, 2, 6}), p[5], p[6]);          // [3,2,6]
    const Var sw = swap_blocks(ld, 3, 2);                                   // [3,3,4]
    const Var a = add(square(sw), cube(scale(sw, 0.5)));
    const Var b = reshape(sub(a, mul(sw, scale(sw, 0.25))), {9, 4});
    const Var lm = row_sum(linear_map(b, fixed));
    return add(mean(lm), sum(mul_rows(b, p[7])));
  };
  const auto res = check_gradients(chain, params, 200, 7);
  EXPECT_GT(res.checked, 100u);
  EXPECT_LT(res.worst_rel, 1e-4);
}

TEST(Backward, MseGradient) {
  std::mt19937_64 rng(6);
  const Tensor target = random_tensor({4, 3}, rng);
  const auto res = check_gradients([&](Tape&, const std::vector<Var>& p) { return mse(p[0], target); },
                                   {random_tensor({4, 3}, rng)}, 12, 3);
  EXPECT_LT(res.worst_rel, 1e-6);
}

TEST(Tape, DeterministicReplay) {
  std::mt19937_64 rng(8);
  const auto g = ConvGeometry::dense(2, 3, 5);
  const Tensor x = random_tensor({4, 6, 3}, rng), w = random_tensor(g.weight_shape(), rng);
  auto run = [&] {
    Tape t;
    return relu(conv1d(t.constant(x), t.constant(w), Var{}, g)).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, SingleStepDecreasesQuadratic) {
  Tensor p = Tensor::vector({1.0});
  std::vector<Tensor*> ps{&p};
  auto st = AdamState::for_params(ps, {0.1, 1.0, 0});
  const std::vector<Tensor> g{Tensor::vector({2.0 * p[0]})};
  adam_step(ps, g, st);
  EXPECT_LT(p[0] * p[0], 1.0);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p = Tensor::vector({0.3, -0.7});
  std::vector<Tensor*> ps{&p};
  auto st = AdamState::for_params(ps);
  adam_step(ps, std::vector<Tensor>{Tensor({2})}, st);
  EXPECT_EQ(p, Tensor::vector({0.3, -0.7}));
}

TEST(Adam, ConvergesOnConvexQuadratic) {
  Tensor p = Tensor::vector({1.0, -2.0});
  std::vector<Tensor*> ps{&p};
  auto st = AdamState::for_params(ps, {0.05, 0.85, 100});
  auto f = [&] { return 3.0 * p[0] * p[0] + 0.5 * p[1] * p[1] + 0.4 * p[0] * p[1]; };
  for (int i = 0; i < 500; ++i) {
    const std::vector<Tensor> g{Tensor::vector({6.0 * p[0] + 0.4 * p[1], p[1] + 0.4 * p[0]})};
    adam_step(ps, g, st);
  }
  EXPECT_LT(f(), 1e-6);
  EXPECT_EQ(st.step, 500u);
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor p = Tensor::vector({1.0, 2.0});
  std::vector<Tensor*> ps{&p};
  auto st = AdamState::for_params(ps);
  EXPECT_THROW(adam_step(ps, std::vector<Tensor>{Tensor({3})}, st), DimensionError);
}

TEST(Adam, StaircaseSchedule) {
  const LearningRateSchedule s{1e-3, 0.85, 500};
  EXPECT_DOUBLE_EQ(s.rate(0), 1e-3);
  EXPECT_DOUBLE_EQ(s.rate(499), 1e-3);
  EXPECT_DOUBLE_EQ(s.rate(500), 0.85e-3);
  EXPECT_NEAR(s.rate(1500), 1e-3 * 0.85 * 0.85 * 0.85, 1e-18);
}
