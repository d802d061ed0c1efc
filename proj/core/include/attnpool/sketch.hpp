#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "attnpool/autograd.hpp"
#include "attnpool/tensor.hpp"

// Compact bilinear pooling through TensorSketch: an unbiased low-dimensional
// estimate of the full f x f second-order feature, used as the full-rank
// comparison point for the low-rank attention heads.
namespace attnpool {

struct SketchParams {
  std::size_t f = 0;
  std::size_t d = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> h1, h2;  // {0..f-1} -> {0..d-1}
  std::vector<double> s1, s2;       // {0..f-1} -> {-1, +1}

  // Tables are a pure function of (seed, f, d). Draw order from one
  // SplitMix64(seed) stream: h1[0..f), s1[0..f), h2[0..f), s2[0..f), with
  // h = next() mod d and s = +1 when the top bit of next() is clear, else -1.
  static SketchParams make(std::size_t f, std::size_t d, std::uint64_t seed);
};

struct CbpOptions {
  bool signed_sqrt = false;   // y <- sign(y) sqrt(|y|)
  bool l2_normalize = false;  // y <- y / ||y||
};

// out[h[i]] += s[i] * x[i]. Throws ShapeError when a bucket is >= d or the
// table lengths disagree with x.
Matrix count_sketch(std::span<const double> x, std::span<const std::size_t> h, std::span<const double> s,
                    std::size_t d);

// Circular convolution of the two count sketches, computed directly in O(d^2).
Matrix tensor_sketch(std::span<const double> x, const SketchParams& params);

// Sum over rows of X of tensor_sketch(row), then the optional post-processing.
Matrix cbp_pool(const Matrix& x, const SketchParams& params, const CbpOptions& opts = {});

// Dense f x d matrix S with S[i][h[i]] = s[i]: count_sketch(x) = S^T x.
Matrix sketch_matrix(std::span<const std::size_t> h, std::span<const double> s, std::size_t d);

// Scores of a linear classifier (d x K) on sum-pooled sketches.
Matrix score_cbp(const Matrix& x, const SketchParams& params, const Matrix& classifier);

namespace graph {
// Pooled sketch (d x 1) differentiable in X.
ag::Var cbp_pool(ag::Var x, const SketchParams& params);
// Classifier scores (K x 1) on the pooled sketch.
ag::Var cbp_scores(ag::Var x, ag::Var classifier, const SketchParams& params);
}  // namespace graph

}  // namespace attnpool
