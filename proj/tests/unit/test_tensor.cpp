#include <gtest/gtest.h>

#include <cmath>

#include "npsnet/core/ops.hpp"
#include "npsnet/core/random.hpp"
#include "support/gradcheck.hpp"

using namespace npsnet;
using npsnet::testing::grad_check;
using npsnet::testing::random_tensor;

namespace {

Tensor<double> T2(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor<double>(Shape{r, c}, std::move(v)); }

void expect_values(const Tensor<double>& t, const std::vector<double>& want, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "at " << i;
}

}  // namespace

TEST(TensorCore, MatmulTwoByTwo) {
  auto c = matmul(T2(2, 2, {1, 2, 3, 4}), T2(2, 2, {5, 6, 7, 8}));
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  expect_values(c, {19, 22, 43, 50});
}

TEST(TensorCore, MatmulRejectsInnerMismatch) {
  EXPECT_THROW(matmul(T2(2, 3, std::vector<double>(6, 1)), T2(2, 2, {1, 2, 3, 4})), DimensionError);
}

TEST(TensorCore, MatmulBatchedBroadcast) {
  Rng rng(3);
  auto a = random_tensor(rng, {2, 3, 4});
  auto b = random_tensor(rng, {4, 5});
  auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 5}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0;
        for (std::size_t l = 0; l < 4; ++l) s += a[(n * 3 + i) * 4 + l] * b[l * 5 + j];
        EXPECT_NEAR(c[(n * 3 + i) * 5 + j], s, 1e-12);
      }
}

TEST(TensorCore, SoftmaxKnownValues) {
  auto s = softmax(Tensor<double>(Shape{2}, {0.0, std::log(3.0)}));
  expect_values(s, {0.25, 0.75});
}

TEST(TensorCore, SoftmaxRowsSumToOneUnderShift) {
  Rng rng(5);
  auto x = random_tensor(rng, {4, 7}, -50, 50);
  auto s = softmax(x);
  auto s2 = softmax(add_scalar(x, 1000.0));
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      total += s[r * 7 + c];
      EXPECT_NEAR(s[r * 7 + c], s2[r * 7 + c], 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(TensorCore, AdaptivePoolFourToTwo) {
  auto x = Tensor<double>(Shape{1, 1, 1, 4}, {1, 2, 3, 4});
  expect_values(adaptive_avg_pool3d(x, {1, 1, 2}), {1.5, 3.5});
}

TEST(TensorCore, AdaptivePoolKeepsConstants) {
  auto x = Tensor<double>(Shape{2, 5, 7, 9}, 3.25);
  auto y = adaptive_avg_pool3d(x, {3, 4, 5});
  for (double v : y.values()) EXPECT_EQ(v, 3.25);
}

TEST(TensorCore, AdaptivePoolRejectsUpsampling) {
  auto x = Tensor<double>(Shape{1, 1, 1, 4}, 1.0);
  EXPECT_THROW(adaptive_avg_pool3d(x, {1, 1, 5}), ConfigError);
  EXPECT_THROW(adaptive_avg_pool3d(x, {1, 1, 0}), ConfigError);
}

TEST(TensorCore, TrilinearTwoToFour) {
  auto x = Tensor<double>(Shape{1, 1, 1, 2}, {0, 1});
  expect_values(trilinear_resample(x, {1, 1, 4}), {0, 0.25, 0.75, 1});
}

TEST(TensorCore, TrilinearIdentityAtSameSize) {
  Rng rng(8);
  auto x = random_tensor(rng, {2, 3, 4, 5});
  auto y = trilinear_resample(x, {3, 4, 5});
  expect_values(y, x.values(), 0);
}

TEST(TensorCore, TrilinearCentreMixesFourCorners) {
  auto x = Tensor<double>(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = trilinear_resample(x, {1, 3, 3});
  EXPECT_NEAR(y[4], 2.5, 1e-12);
}

TEST(TensorCore, ConvSamePaddingKeepsExtents) {
  Rng rng(2);
  auto x = random_tensor(rng, {3, 4, 5, 6});
  auto w = random_tensor(rng, {2, 3, 3, 3, 3});
  auto y = conv3d(x, w, Tensor<double>(), {1, 1, 1}, {1, 1, 1}, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5, 6}));
}

TEST(TensorCore, ConvMatchesDirectSum) {
  Rng rng(4);
  auto x = random_tensor(rng, {2, 3, 4, 5});
  auto w = random_tensor(rng, {3, 2, 3, 1, 3});
  auto b = random_tensor(rng, {3});
  auto y = conv3d(x, w, b, {1, 2, 2}, {1, 0, 1}, 1);
  const std::size_t to = y.shape()[1], ho = y.shape()[2], wo = y.shape()[3];
  EXPECT_EQ(y.shape(), (Shape{3, 3, 2, 3}));
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t t = 0; t < to; ++t)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double s = b[o];
          for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t a = 0; a < 3; ++a)
              for (std::size_t d = 0; d < 3; ++d) {
                const long tt = static_cast<long>(t) + static_cast<long>(a) - 1;
                const long ii = static_cast<long>(i * 2);
                const long jj = static_cast<long>(j * 2) + static_cast<long>(d) - 1;
                if (tt < 0 || tt >= 3 || jj < 0 || jj >= 5) continue;
                s += x[((c * 3 + tt) * 4 + ii) * 5 + jj] * w[(((o * 2 + c) * 3 + a) * 1) * 3 + d];
              }
          EXPECT_NEAR(y[((o * to + t) * ho + i) * wo + j], s, 1e-12);
        }
}

TEST(TensorCore, BroadcastAddAndMul) {
  auto a = T2(2, 3, {1, 2, 3, 4, 5, 6});
  auto b = Tensor<double>(Shape{3}, {10, 20, 30});
  expect_values(add(a, b), {11, 22, 33, 14, 25, 36});
  expect_values(mul(a, b), {10, 40, 90, 40, 100, 180});
  EXPECT_THROW(add(a, Tensor<double>(Shape{2}, 1.0)), DimensionError);
}

TEST(TensorCore, LayerNormZeroMeanUnitVariance) {
  Rng rng(6);
  auto x = random_tensor(rng, {3, 8}, -5, 5);
  auto y = layer_norm(x, Tensor<double>(Shape{8}, 1.0), Tensor<double>(Shape{8}, 0.0));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 8; ++c) m += y[r * 8 + c];
    m /= 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y[r * 8 + c] - m) * (y[r * 8 + c] - m);
    EXPECT_NEAR(m, 0, 1e-12);
    EXPECT_NEAR(v / 8, 1, 1e-4);
  }
}

TEST(TensorCore, BackwardRequiresScalar) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto x = Tensor<double>(Shape{2}, 1.0);
  x.set_requires_grad(true);
  auto y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), UsageError);
}

TEST(TensorCore, GradientsAccumulateAcrossCalls) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto x = Tensor<double>(Shape{3}, {1, 2, 3});
  x.set_requires_grad(true);
  auto loss = sum(mul(x, x));
  tape.backward(loss);
  tape.backward(loss);
  expect_values(x.grad(), {4, 8, 12});
}

TEST(TensorCore, NoTapeNoRecording) {
  auto x = Tensor<double>(Shape{3}, 1.0);
  x.set_requires_grad(true);
  auto y = sum(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(TensorCore, MergePatchesOddExtentsPadWithZeros) {
  auto x = Tensor<double>(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = merge_patches_2x2(x);
  ASSERT_EQ(y.shape(), (Shape{4, 1, 2, 2}));
  // Channel blocks: (0,0), (1,0), (0,1), (1,1) offsets.
  expect_values(y, {1, 3, 7, 9, 4, 6, 0, 0, 2, 0, 8, 0, 5, 0, 0, 0});
}

TEST(TensorCore, TokensRoundTrip) {
  Rng rng(1);
  auto g = random_tensor(rng, {4, 2, 3, 5});
  auto tok = grid_to_tokens(g);
  EXPECT_EQ(tok.shape(), (Shape{30, 4}));
  expect_values(tokens_to_grid(tok, {2, 3, 5}), g.values(), 0);
}
