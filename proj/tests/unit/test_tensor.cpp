#include <cmath>

#include <gtest/gtest.h>

#include "medrx/random.hpp"
#include "medrx/tensor.hpp"
#include "oracles.hpp"

using namespace medrx;

namespace {

Tensor mat(std::vector<std::vector<float>> rows) { return Tensor::from_rows(rows); }

}  // namespace

TEST(Matmul, IdentityAndDotProduct) {
  const Tensor a = mat({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(mat({{1, 0}, {0, 1}}), a), a);
  const Tensor c = matmul(mat({{1, 2}}), mat({{3}, {4}}));
  ASSERT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_EQ(c(0, 0), 11.0f);
}

TEST(Matmul, ZerosAnnihilate) {
  Rng rng(1);
  const Tensor b = random_uniform({4, 3}, rng, -1, 1);
  EXPECT_EQ(matmul(Tensor({2, 4}), b), Tensor({2, 3}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativeWithinFloatTolerance) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_uniform({8, 8}, rng, -1, 1);
    const Tensor b = random_uniform({8, 8}, rng, -1, 1);
    const Tensor c = random_uniform({8, 8}, rng, -1, 1);
    const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i)
      EXPECT_LE(std::abs(l[i] - r[i]), 1e-4 * std::max(1.0f, std::abs(l[i])));
  }
}

TEST(Softmax, ClosedForms) {
  const Tensor s = softmax_rows(mat({{0, 0, 0}, {0, std::log(2.0f), 0}}));
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(s(0, j), 1.0 / 3.0, 1e-7);
  const Tensor t = softmax_rows(mat({{0, std::log(2.0f)}}));
  EXPECT_NEAR(t(0, 0), 1.0 / 3.0, 1e-7);
  EXPECT_NEAR(t(0, 1), 2.0 / 3.0, 1e-7);
}

TEST(Softmax, RowsSumToOneUnderExtremeLogits) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const float range = trial % 2 ? 1e4f : 10.0f;
    const Tensor x = random_uniform({1, 1 + rng.below(40)}, rng, -range, range);
    const Tensor s = softmax_rows(x);
    ASSERT_TRUE(all_finite(s));
    double sum = 0;
    for (float v : s.data()) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Conv2d, IdentityKernelIsBitExact) {
  Rng rng(3);
  Tensor k({2, 2, 1, 1});
  k.data()[0] = 1;
  k.data()[3] = 1;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_uniform({2, 5, 6}, rng, -10, 10);
    EXPECT_EQ(conv2d(x, k, Tensor({2})), x);
  }
}

TEST(Conv2d, OnesKernelOnOneHot) {
  Tensor x({1, 5, 5});
  x(0, 2, 2) = 1;
  const Tensor y = conv2d(x, Tensor::filled({1, 1, 3, 3}, 1), Tensor({1}));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const bool inside = i >= 1 && i <= 3 && j >= 1 && j <= 3;
      EXPECT_EQ(y(0, i, j), inside ? 1.0f : 0.0f) << i << "," << j;
    }
}

TEST(Conv2d, ZeroKernelGivesBias) {
  const Tensor y = conv2d(Tensor::filled({2, 3, 3}, 5), Tensor({3, 2, 3, 3}),
                          Tensor::from_rows({{1, 2, 3}}).reshaped({3}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(plane(y, c).values[i], float(c + 1));
}

TEST(Conv2d, ChannelMismatch) {
  EXPECT_THROW(conv2d(Tensor({2, 3, 3}), Tensor({1, 3, 1, 1}), Tensor({1})), ShapeError);
}

TEST(Upsample, Replicates) {
  const Tensor y = upsample_nearest_2x(mat({{1, 2}, {3, 4}}).reshaped({1, 2, 2}));
  const Tensor want =
      mat({{1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}}).reshaped({1, 4, 4});
  EXPECT_EQ(y, want);
}

TEST(Bilinear, HandValues) {
  const Tensor m = mat({{1, 2}, {3, 4}});
  EXPECT_EQ(bilinear_sample(m, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(m, 0.5, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(bilinear_sample(m, 0.75, 0.25), 2.25);
  EXPECT_THROW(bilinear_sample(m, 1.01, 0), RangeError);
  EXPECT_THROW(bilinear_sample(m, 0, -0.01), RangeError);
}

TEST(Bilinear, MatchesDenseOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6);
    const Tensor m = random_uniform({1, h, w}, rng, -5, 5);
    const double x = rng.uniform(0, double(w - 1)), y = rng.uniform(0, double(h - 1));
    EXPECT_NEAR(bilinear_sample(plane(m, 0), x, y), oracle::dense_bilinear(m, 0, x, y), 1e-6);
  }
}

TEST(Sigmoid, ClosedFormsAndSymmetry) {
  EXPECT_EQ(sigmoid(0.0f), 0.5f);
  EXPECT_NEAR(sigmoid(std::log(3.0f)), 0.75f, 1e-7);
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const float x = static_cast<float>(rng.uniform(-20, 20));
    EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0f, 1e-6);
  }
  // stays strictly inside (0, 1) even when saturated
  EXPECT_GT(sigmoid(-1e4f), 0.0f);
  EXPECT_LT(sigmoid(1e4f), 1.0f);
}

TEST(Maxpool, TakesBlockMaximum) {
  const Tensor x = mat({{1, 5, 2, 0}, {3, 4, 8, 1}}).reshaped({1, 2, 4});
  EXPECT_EQ(maxpool_2x2(x), mat({{5, 8}}).reshaped({1, 1, 2}));
}

TEST(TensorShape, RejectsZeroDims) { EXPECT_THROW(Tensor({2, 0}), ShapeError); }
