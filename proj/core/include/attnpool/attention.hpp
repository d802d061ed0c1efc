#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "attnpool/autograd.hpp"
#include "attnpool/splitmix.hpp"
#include "attnpool/tensor.hpp"

// Attentional pooling as a low-rank approximation of second-order pooling.
//
// Conventions: a feature map X is n x f (n spatial locations, f channels),
// per-class top-down weights are the K columns of an f x K matrix A, and the
// class-agnostic bottom-up weights are an f x 1 column b. Scores are returned
// as K x 1 columns. Attention maps are raw linear maps: nothing is
// normalized and entries may be negative.
namespace attnpool {

// Rank-P low-rank classifier: W_k = sum_p A_p[:, k] * B_p^T.
// Rank 1 is the plain attention head (one top-down matrix, one bottom-up vector).
class AttentionParams {
 public:
  AttentionParams(std::vector<Matrix> top_down, std::vector<Matrix> bottom_up);
  static AttentionParams rank1(Matrix a, Matrix b);

  std::size_t rank() const noexcept { return top_down_.size(); }
  std::size_t features() const { return top_down_.front().rows(); }
  std::size_t classes() const { return top_down_.front().cols(); }

  const Matrix& top_down(std::size_t p = 0) const { return top_down_.at(p); }
  const Matrix& bottom_up(std::size_t p = 0) const { return bottom_up_.at(p); }
  const std::vector<Matrix>& top_down_all() const noexcept { return top_down_; }
  const std::vector<Matrix>& bottom_up_all() const noexcept { return bottom_up_; }

  // Dense per-class second-order weights W_k = sum_p a_k^p (b^p)^T.
  std::vector<Matrix> second_order_weights() const;

 private:
  std::vector<Matrix> top_down_;
  std::vector<Matrix> bottom_up_;
};

// One bottom-up vector per class (column k of `bottom_up` pairs with column k of `top_down`).
struct PerClassParams {
  Matrix top_down;   // f x K
  Matrix bottom_up;  // f x K
};

struct AttentionMaps {
  Matrix bottom_up;  // h: n x 1
  Matrix top_down;   // t: n x K
  Matrix combined;   // c: n x K, c[:, k] = t[:, k] .* h
};

struct Rank1Result {
  double score = 0.0;
  Matrix attention;  // h = X b, n x 1
  Matrix pooled;     // x = X^T h, f x 1
};

// 1^T X w.
double score_avg_pool(const Matrix& x, const Matrix& w);

// Tr(X^T X W^T) with X^T X materialized. This is the reference the low-rank
// forms are checked against; it costs O(n f^2) by construction.
double score_second_order(const Matrix& x, const Matrix& w);
Matrix score_second_order(const Matrix& x, std::span<const Matrix> per_class);

// a^T (X^T (X b)), in that order; never forms an f x f intermediate.
Rank1Result score_rank1(const Matrix& x, const Matrix& a, const Matrix& b);

// s[k] = (X a_k)^T (X b), evaluated as A^T (X^T (X b)). Requires rank 1.
Matrix score_multiclass(const Matrix& x, const AttentionParams& params);

// Same scores via the combined maps c_k = t_k .* h, s[k] = 1^T c_k. Requires rank 1.
struct CombinedScores {
  AttentionMaps maps;
  Matrix scores;
};
CombinedScores combined_map_score(const Matrix& x, const AttentionParams& params);

// s[k] = sum_p (X a_k^p)^T (X b^p), accumulated over p in order.
Matrix score_rank_p(const Matrix& x, const AttentionParams& params);

// s[k] = (X A[:, k])^T (X B[:, k]).
Matrix score_per_class(const Matrix& x, const PerClassParams& params);

// s[k] = 1^T X w_k: the average-pooling head read as top-down-only attention.
Matrix score_top_down_only(const Matrix& x, const Matrix& w_cls);

// Maps for a rank-1 head, with every map reshaped row-major to n1 x n2.
struct GridMaps {
  Matrix bottom_up;                // n1 x n2
  std::vector<Matrix> top_down;    // K grids
  std::vector<Matrix> combined;    // K grids
};
GridMaps extract_maps(const Matrix& x, const AttentionParams& params, const Shape& spatial);
Matrix to_grid(const Matrix& column, const Shape& spatial);

// Entries i.i.d. uniform in [-1/sqrt(f), 1/sqrt(f)].
Matrix init_uniform(std::size_t rows, std::size_t cols, std::size_t f, SplitMix64& rng);
AttentionParams init_attention(std::size_t f, std::size_t k, std::size_t rank, SplitMix64& rng);
PerClassParams init_per_class(std::size_t f, std::size_t k, SplitMix64& rng);

// Differentiable forms used for training and gradient checks. Each returns
// the K x 1 score column (unscaled sums).
namespace graph {
ag::Var avg_pool_scores(ag::Var x, ag::Var w_cls);
ag::Var attention_scores(ag::Var x, ag::Var a, ag::Var b);
ag::Var rank_p_scores(ag::Var x, std::span<const ag::Var> a, std::span<const ag::Var> b);
ag::Var per_class_scores(ag::Var x, ag::Var a, ag::Var b_pc);
}  // namespace graph

}  // namespace attnpool
