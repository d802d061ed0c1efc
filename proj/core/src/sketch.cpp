#include "attnpool/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnpool/errors.hpp"
#include "attnpool/splitmix.hpp"

namespace attnpool {

SketchParams SketchParams::make(std::size_t f, std::size_t d, std::uint64_t seed) {
  if (f == 0 || d == 0) throw ValidationError("sketch dimensions must be positive");
  SketchParams p;
  p.f = f;
  p.d = d;
  p.seed = seed;
  SplitMix64 rng(seed);
  auto hashes = [&] {
    std::vector<std::size_t> h(f);
    for (auto& v : h) v = static_cast<std::size_t>(rng.below(d));
    return h;
  };
  auto signs = [&] {
    std::vector<double> s(f);
    for (auto& v : s) v = (rng.next() >> 63) ? -1.0 : 1.0;
    return s;
  };
  p.h1 = hashes();
  p.s1 = signs();
  p.h2 = hashes();
  p.s2 = signs();
  return p;
}

Matrix count_sketch(std::span<const double> x, std::span<const std::size_t> h, std::span<const double> s,
                    std::size_t d) {
  if (h.size() != x.size() || s.size() != x.size()) {
    throw ShapeError("count_sketch: tables of length " + std::to_string(h.size()) + " for input of length " +
                     std::to_string(x.size()));
  }
  Matrix out(d, 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (h[i] >= d) throw ShapeError("count_sketch: bucket " + std::to_string(h[i]) + " >= d=" + std::to_string(d));
    out[h[i]] += s[i] * x[i];
  }
  count_flops(2ULL * x.size());
  return out;
}

namespace {

// acc[(i + j) mod d] += u[i] v[j]
void circular_convolve_into(const Matrix& u, const Matrix& v, std::span<double> acc) {
  const std::size_t d = acc.size();
  for (std::size_t i = 0; i < d; ++i) {
    const double ui = u[i];
    for (std::size_t j = 0; j < d; ++j) acc[(i + j) % d] += ui * v[j];
  }
  count_flops(2ULL * d * d);
}

}  // namespace

Matrix tensor_sketch(std::span<const double> x, const SketchParams& params) {
  if (x.size() != params.f) {
    throw ShapeError("tensor_sketch: input length " + std::to_string(x.size()) + " vs f=" + std::to_string(params.f));
  }
  const Matrix u = count_sketch(x, params.h1, params.s1, params.d);
  const Matrix v = count_sketch(x, params.h2, params.s2, params.d);
  Matrix out(params.d, 1);
  circular_convolve_into(u, v, out.data());
  return out;
}

Matrix cbp_pool(const Matrix& x, const SketchParams& params, const CbpOptions& opts) {
  if (x.cols() != params.f) {
    throw ShapeError("cbp_pool: features " + x.shape().to_string() + " vs sketch f=" + std::to_string(params.f));
  }
  // Each row's sketch is formed on its own and then added, so pooling is
  // exactly linear in repeated rows.
  Matrix pooled(params.d, 1);
  Matrix term(params.d, 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    const Matrix u = count_sketch(row, params.h1, params.s1, params.d);
    const Matrix v = count_sketch(row, params.h2, params.s2, params.d);
    std::fill(term.data().begin(), term.data().end(), 0.0);
    circular_convolve_into(u, v, term.data());
    for (std::size_t k = 0; k < params.d; ++k) pooled[k] += term[k];
  }
  if (opts.signed_sqrt) {
    for (auto& y : pooled.data()) y = std::copysign(std::sqrt(std::abs(y)), y);
  }
  if (opts.l2_normalize) {
    double norm2 = 0.0;
    for (double y : pooled.data()) norm2 += y * y;
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& y : pooled.data()) y *= inv;
    }
  }
  return pooled;
}

Matrix sketch_matrix(std::span<const std::size_t> h, std::span<const double> s, std::size_t d) {
  Matrix m(h.size(), d);
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] >= d) throw ShapeError("sketch_matrix: bucket out of range");
    m(i, h[i]) = s[i];
  }
  return m;
}

Matrix score_cbp(const Matrix& x, const SketchParams& params, const Matrix& classifier) {
  if (classifier.rows() != params.d) {
    throw ShapeError("score_cbp: classifier " + classifier.shape().to_string() + " vs d=" + std::to_string(params.d));
  }
  return matmul_tn(classifier, cbp_pool(x, params));
}

namespace graph {

ag::Var cbp_pool(ag::Var x, const SketchParams& params) {
  ag::Tape& tape = *x.tape;
  const auto s1 = ag::leaf(tape, sketch_matrix(params.h1, params.s1, params.d));
  const auto s2 = ag::leaf(tape, sketch_matrix(params.h2, params.s2, params.d));
  const auto per_row = ag::circular_convolve(ag::matmul(x, s1), ag::matmul(x, s2));  // n x d
  const auto ones = ag::leaf(tape, Matrix::ones(x.value().rows(), 1));
  return ag::matmul(ag::transpose(per_row), ones);
}

ag::Var cbp_scores(ag::Var x, ag::Var classifier, const SketchParams& params) {
  return ag::matmul(ag::transpose(classifier), cbp_pool(x, params));
}

}  // namespace graph

}  // namespace attnpool
