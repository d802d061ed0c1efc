#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "attnpool/errors.hpp"
#include "attnpool/splitmix.hpp"
#include "attnpool/tensor.hpp"
#include "oracles.hpp"

using namespace attnpool;

TEST(Shape, NumelAndRendering) {
  const Shape s{7, 7, 32};
  EXPECT_EQ(s.numel(), 7u * 7u * 32u);
  EXPECT_EQ(s.ndim(), 3u);
  EXPECT_EQ(s.to_string(), "[7, 7, 32]");
}

TEST(Shape, RejectsZeroDim) { EXPECT_THROW(Shape({3, 0}), ShapeError); }

TEST(Shape, SpatialFlatteningIsRowMajor) {
  // [n1, n2, f] -> [n1*n2, f] with loc = row*n2 + col.
  Matrix grid(Shape{2, 3, 2});
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i);
  const Matrix flat = grid.reshaped(Shape{6, 2});
  const std::size_t row = 1, col = 2, ch = 1;
  EXPECT_EQ(flat(row * 3 + col, ch), static_cast<double>((row * 3 + col) * 2 + ch));
}

TEST(Matrix, ConstructionChecksLengthAndFiniteness) {
  const std::vector<double> three{1, 2, 3};
  EXPECT_THROW(Matrix(Shape{2, 2}, three), ShapeError);
  const std::vector<double> bad{1, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(Matrix(Shape{2, 1}, bad), ValidationError);
  const std::vector<double> inf{std::numeric_limits<double>::infinity(), 0};
  EXPECT_THROW(Matrix(Shape{1, 2}, inf), ValidationError);
}

TEST(Matmul, Examples) {
  const Matrix v = Matrix::column({2, 3});
  EXPECT_EQ(matmul(Matrix::identity(2), v), v);
  EXPECT_EQ(matmul(Matrix::from_rows({{1, 2}, {3, 4}}), Matrix::column({1, 1})), Matrix::column({3, 7}));
  const Matrix any = Matrix::from_rows({{5, -1, 2}, {0.5, 9, 3}});
  EXPECT_EQ(matmul(Matrix::zeros(2, 2), any), Matrix::zeros(2, 3));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    (void)matmul(Matrix::zeros(2, 3), Matrix::zeros(2, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, MatchesNaiveLoops) {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(9), k = 1 + rng.below(9), m = 1 + rng.below(9);
    const Matrix a = oracle::random_matrix(n, k, rng);
    const Matrix b = oracle::random_matrix(k, m, rng);
    const auto want = oracle::mul(oracle::to_dense(a), oracle::to_dense(b));
    const Matrix got = matmul(a, b);
    const Matrix got_tn = matmul_tn(transpose(a), b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        EXPECT_LE(oracle::rel(got(i, j), want[i][j]), 1e-14);
        EXPECT_LE(oracle::rel(got_tn(i, j), want[i][j]), 1e-14);
      }
  }
}

TEST(Matmul, IdentityIsBitExact) {
  SplitMix64 rng(5);
  const Matrix a = oracle::random_matrix(6, 4, rng);
  EXPECT_EQ(matmul(Matrix::identity(6), a), a);
  EXPECT_EQ(matmul(a, Matrix::identity(4)), a);
}

TEST(Transpose, Examples) {
  EXPECT_EQ(transpose(Matrix::from_rows({{1, 2}, {3, 4}})), Matrix::from_rows({{1, 3}, {2, 4}}));
  EXPECT_EQ(transpose(Matrix::identity(3)), Matrix::identity(3));
  SplitMix64 rng(9);
  const Matrix a = oracle::random_matrix(5, 3, rng);
  EXPECT_EQ(transpose(transpose(a)), a);
}

TEST(Trace, Examples) {
  EXPECT_EQ(trace(Matrix::identity(3)), 3.0);
  EXPECT_EQ(trace(Matrix::from_rows({{2, 9}, {9, 5}})), 7.0);
  EXPECT_THROW((void)trace(Matrix::zeros(2, 3)), ShapeError);
}

TEST(Trace, OfABTransposeIsFlatDot) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = oracle::random_matrix(3, 3, rng);
    const Matrix b = oracle::random_matrix(3, 3, rng);
    double flat = 0.0;
    for (std::size_t i = 0; i < 9; ++i) flat += a[i] * b[i];
    EXPECT_LE(oracle::rel(trace(matmul(a, transpose(b))), flat), 1e-12);
    EXPECT_LE(oracle::rel(frobenius_dot(a, b), flat), 1e-12);
  }
}

TEST(Trace, IsCyclic) {
  SplitMix64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = oracle::random_matrix(3, 3, rng);
    const Matrix b = oracle::random_matrix(3, 3, rng);
    const Matrix c = oracle::random_matrix(3, 3, rng);
    const double abc = trace(matmul(matmul(a, b), c));
    const double cab = trace(matmul(matmul(c, a), b));
    EXPECT_LE(std::abs(abc - cab) / std::max(1.0, std::abs(abc)), 1e-12);
  }
}

TEST(ElementwiseMul, Examples) {
  EXPECT_EQ(elementwise_mul(Matrix::column({2, 3}), Matrix::column({1, 1})), Matrix::column({2, 3}));
  EXPECT_EQ(elementwise_mul(Matrix::column({1, -2}), Matrix::column({3, 4})), Matrix::column({3, -8}));
  EXPECT_EQ(elementwise_mul(Matrix::column({7, -5}), Matrix::zeros(2, 1)), Matrix::zeros(2, 1));
  EXPECT_THROW((void)elementwise_mul(Matrix::zeros(2, 1), Matrix::zeros(3, 1)), ShapeError);
}

TEST(EvaluationOrder, AssociativityAtValueLevel) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(16), f = 1 + rng.below(16);
    const Matrix x = oracle::random_matrix(n, f, rng);
    const Matrix a = oracle::random_matrix(f, 1, rng);
    const Matrix b = oracle::random_matrix(f, 1, rng);
    const double left = frobenius_dot(matmul(x, a), matmul(x, b));
    const double right = frobenius_dot(a, matmul_tn(x, matmul(x, b)));
    EXPECT_LE(std::abs(left - right) / std::max(1.0, std::abs(left)), 1e-12);
  }
}

TEST(MaxRelDiff, UsesOnePlusReference) {
  EXPECT_DOUBLE_EQ(max_rel_diff(Matrix::column({3.0}), Matrix::column({1.0})), 1.0);
  EXPECT_EQ(max_rel_diff(Matrix::column({2.0, 5.0}), Matrix::column({2.0, 5.0})), 0.0);
}

TEST(SplitMix64, ReferenceOutputs) {
  // Published reference values for seed 0.
  SplitMix64 g(0);
  EXPECT_EQ(g.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(g.next(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(g.next(), 0x06C45D188009454FULL);
}

TEST(SplitMix64, UniformInHalfOpenUnitInterval) {
  SplitMix64 g(42);
  for (int i = 0; i < 100000; ++i) {
    const double u = g.uniform01();
    ASSERT_GT(u, 0.0);
    ASSERT_LE(u, 1.0);
  }
}

TEST(SplitMix64, ShuffleIsAPermutationAndDeterministic) {
  std::vector<int> a(50), b(50);
  for (int i = 0; i < 50; ++i) a[i] = b[i] = i;
  SplitMix64 g1(8), g2(8);
  shuffle(std::span<int>(a), g1);
  shuffle(std::span<int>(b), g2);
  EXPECT_EQ(a, b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}
