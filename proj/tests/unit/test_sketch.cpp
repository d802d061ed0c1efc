#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "attnpool/autograd.hpp"
#include "attnpool/errors.hpp"
#include "attnpool/sketch.hpp"
#include "attnpool/splitmix.hpp"
#include "oracles.hpp"

using namespace attnpool;
namespace ag = attnpool::ag;

namespace {

std::vector<double> random_vector(std::size_t f, SplitMix64& rng) {
  std::vector<double> v(f);
  for (double& x : v) x = rng.normal();
  return v;
}

// Count sketch and TensorSketch from their definitions, reading only the tables.
std::vector<double> naive_count_sketch(const std::vector<double>& x, const std::vector<std::size_t>& h,
                                       const std::vector<double>& s, std::size_t d) {
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[h[i]] += s[i] * x[i];
  return out;
}

std::vector<double> naive_tensor_sketch(const std::vector<double>& x, const SketchParams& p) {
  return oracle::circular_convolve(naive_count_sketch(x, p.h1, p.s1, p.d), naive_count_sketch(x, p.h2, p.s2, p.d));
}

std::vector<double> as_vector(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

}  // namespace

TEST(CountSketch, Examples) {
  const std::vector<double> x{1, 0};
  const std::vector<std::size_t> h{0, 1};
  const std::vector<double> s{1, -1};
  EXPECT_EQ(count_sketch(x, h, s, 2), Matrix::column({1, 0}));
  const std::vector<double> zero{0, 0};
  EXPECT_EQ(count_sketch(zero, h, s, 2), Matrix::zeros(2, 1));
  const std::vector<std::size_t> bad{0, 2};
  EXPECT_THROW((void)count_sketch(x, bad, s, 2), ShapeError);
}

TEST(CountSketch, NormPreservedInExpectation) {
  SplitMix64 rng(1);
  const auto x = random_vector(16, rng);
  const double want = oracle::dot(x, x);
  std::vector<double> samples;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const SketchParams p = SketchParams::make(16, 64, seed);
    const Matrix cs = count_sketch(x, p.h1, p.s1, 64);
    samples.push_back(frobenius_dot(cs, cs));
  }
  const auto ms = oracle::mean_se(samples);
  EXPECT_LE(std::abs(ms.mean - want), 3.0 * ms.se) << ms.mean << " vs " << want;
}

TEST(SketchParams, TablesFollowTheDocumentedDrawOrder) {
  const SketchParams p = SketchParams::make(5, 7, 99);
  SplitMix64 g(99);
  std::vector<std::size_t> h1(5), h2(5);
  std::vector<double> s1(5), s2(5);
  for (auto& v : h1) v = g.next() % 7;
  for (auto& v : s1) v = (g.next() >> 63) == 0 ? 1.0 : -1.0;
  for (auto& v : h2) v = g.next() % 7;
  for (auto& v : s2) v = (g.next() >> 63) == 0 ? 1.0 : -1.0;
  EXPECT_EQ(p.h1, h1);
  EXPECT_EQ(p.s1, s1);
  EXPECT_EQ(p.h2, h2);
  EXPECT_EQ(p.s2, s2);
}

TEST(TensorSketch, Examples) {
  const SketchParams p = SketchParams::make(1, 1, 4);
  const std::vector<double> x{1.7};
  EXPECT_EQ(tensor_sketch(x, p)(0, 0), p.s1[0] * p.s2[0] * 1.7 * 1.7);
  const SketchParams q = SketchParams::make(6, 8, 5);
  EXPECT_EQ(tensor_sketch(std::vector<double>(6, 0.0), q), Matrix::zeros(8, 1));
}

TEST(TensorSketch, MatchesDefinition) {
  SplitMix64 rng(2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SketchParams p = SketchParams::make(9, 16, seed);
    const auto x = random_vector(9, rng);
    const auto want = naive_tensor_sketch(x, p);
    const auto got = as_vector(tensor_sketch(x, p));
    for (std::size_t k = 0; k < 16; ++k) EXPECT_LE(oracle::rel(got[k], want[k]), 1e-13);
  }
}

TEST(TensorSketch, DeterminismSignSymmetryAndScaling) {
  SplitMix64 rng(3);
  const auto x = random_vector(12, rng);
  const SketchParams p = SketchParams::make(12, 32, 17);
  EXPECT_EQ(tensor_sketch(x, p), tensor_sketch(x, SketchParams::make(12, 32, 17)));
  std::vector<double> neg(x), scaled(x);
  const double alpha = -1.37;
  for (std::size_t i = 0; i < x.size(); ++i) {
    neg[i] = -x[i];
    scaled[i] = alpha * x[i];
  }
  EXPECT_EQ(tensor_sketch(neg, p), tensor_sketch(x, p));
  const Matrix base = tensor_sketch(x, p), sc = tensor_sketch(scaled, p);
  for (std::size_t k = 0; k < 32; ++k) {
    const double want = alpha * alpha * base[k];
    EXPECT_LE(std::abs(sc[k] - want), 1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST(TensorSketch, UnbiasedInnerProduct) {
  SplitMix64 rng(4);
  const auto x = random_vector(16, rng);
  const auto y = random_vector(16, rng);
  const double xy = oracle::dot(x, y);
  std::vector<double> samples;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const SketchParams p = SketchParams::make(16, 64, seed);
    samples.push_back(oracle::dot(naive_tensor_sketch(x, p), naive_tensor_sketch(y, p)));
  }
  const auto ms = oracle::mean_se(samples);
  EXPECT_LE(std::abs(ms.mean - xy * xy), 3.0 * ms.se) << ms.mean << " vs " << xy * xy;
}

TEST(CbpPool, Reductions) {
  SplitMix64 rng(5);
  const SketchParams p = SketchParams::make(6, 16, 8);
  const Matrix row = oracle::random_matrix(1, 6, rng);
  EXPECT_EQ(cbp_pool(row, p), tensor_sketch(row.data(), p));
  Matrix twice(2, 6);
  for (std::size_t j = 0; j < 6; ++j) twice(0, j) = twice(1, j) = row(0, j);
  const Matrix one = cbp_pool(row, p), two = cbp_pool(twice, p);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(two[k], 2.0 * one[k]);
}

TEST(CbpPool, PostProcessing) {
  SplitMix64 rng(6);
  const SketchParams p = SketchParams::make(5, 8, 1);
  const Matrix x = oracle::random_matrix(4, 5, rng);
  const Matrix raw = cbp_pool(x, p);
  const Matrix sq = cbp_pool(x, p, {.signed_sqrt = true, .l2_normalize = false});
  const Matrix nrm = cbp_pool(x, p, {.signed_sqrt = false, .l2_normalize = true});
  double norm = 0.0;
  for (double v : raw.data()) norm += v * v;
  norm = std::sqrt(norm);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_DOUBLE_EQ(sq[k], std::copysign(std::sqrt(std::abs(raw[k])), raw[k]));
    EXPECT_DOUBLE_EQ(nrm[k], raw[k] / norm);
  }
}

TEST(CbpPool, EstimatesSecondOrderInnerProduct) {
  SplitMix64 rng(7);
  const std::size_t f = 8, d = 64;
  const Matrix x = oracle::random_matrix(5, f, rng);
  const Matrix y = oracle::random_matrix(5, f, rng);
  const auto gx = oracle::mul(oracle::transposed(oracle::to_dense(x)), oracle::to_dense(x));
  const auto gy = oracle::mul(oracle::transposed(oracle::to_dense(y)), oracle::to_dense(y));
  double want = 0.0;
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < f; ++j) want += gx[i][j] * gy[i][j];
  std::vector<double> samples;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const SketchParams p = SketchParams::make(f, d, seed);
    samples.push_back(frobenius_dot(cbp_pool(x, p), cbp_pool(y, p)));
  }
  const auto ms = oracle::mean_se(samples);
  EXPECT_LE(std::abs(ms.mean - want), 3.0 * ms.se) << ms.mean << " vs " << want;
}

TEST(SketchMatrix, EqualsCountSketch) {
  SplitMix64 rng(8);
  const SketchParams p = SketchParams::make(7, 5, 3);
  const Matrix s = sketch_matrix(p.h1, p.s1, 5);
  const Matrix x = oracle::random_matrix(7, 1, rng);
  EXPECT_LE(max_rel_diff(matmul_tn(s, x), count_sketch(x.data(), p.h1, p.s1, 5)), 1e-15);
}

TEST(CbpClassifier, ScoresAndGradient) {
  SplitMix64 rng(9);
  const SketchParams p = SketchParams::make(6, 8, 2);
  const Matrix x = oracle::random_matrix(5, 6, rng);
  const Matrix w = oracle::random_matrix(8, 3, rng);
  const Matrix s = score_cbp(x, p, w);
  const Matrix pooled = cbp_pool(x, p);
  for (std::size_t k = 0; k < 3; ++k) {
    double want = 0.0;
    for (std::size_t j = 0; j < 8; ++j) want += pooled[j] * w(j, k);
    EXPECT_LE(oracle::rel(s(k, 0), want), 1e-13);
  }
  for (int seed = 0; seed < 20; ++seed) {
    SplitMix64 r(static_cast<std::uint64_t>(seed));
    const std::vector<Matrix> params{oracle::random_matrix(5, 6, r), oracle::random_matrix(8, 3, r)};
    const ag::ScalarGraph f = [&](ag::Tape&, std::span<const ag::Var> v) {
      return ag::softmax_cross_entropy(graph::cbp_scores(v[0], v[1], p), 1);
    };
    EXPECT_LE(ag::finite_diff_check(f, params), 1e-6) << "seed " << seed;
  }
}
