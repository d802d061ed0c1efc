#include "attnpool/attention.hpp"

#include <cmath>
#include <string>

#include "attnpool/errors.hpp"

namespace attnpool {

namespace {

void require_column(const Matrix& v, std::size_t len, const char* what) {
  if (v.shape().ndim() > 2 || v.cols() != 1 || v.rows() != len) {
    throw ShapeError(std::string(what) + ": expected a column of length " + std::to_string(len) + ", got " +
                     v.shape().to_string());
  }
}

void require_rows(const Matrix& m, std::size_t rows, const char* what) {
  if (m.rows() != rows) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " +
                     m.shape().to_string());
  }
}

void require_rank1(const AttentionParams& p, const char* what) {
  if (p.rank() != 1) throw ShapeError(std::string(what) + " needs a rank-1 head, got rank " + std::to_string(p.rank()));
}

}  // namespace

AttentionParams::AttentionParams(std::vector<Matrix> top_down, std::vector<Matrix> bottom_up)
    : top_down_(std::move(top_down)), bottom_up_(std::move(bottom_up)) {
  if (top_down_.empty()) throw ShapeError("attention head needs rank >= 1");
  if (top_down_.size() != bottom_up_.size()) {
    throw ShapeError("rank mismatch: " + std::to_string(top_down_.size()) + " top-down vs " +
                     std::to_string(bottom_up_.size()) + " bottom-up factors");
  }
  const std::size_t f = top_down_.front().rows();
  const std::size_t k = top_down_.front().cols();
  for (std::size_t p = 0; p < top_down_.size(); ++p) {
    if (top_down_[p].rows() != f || top_down_[p].cols() != k) {
      throw ShapeError("top-down factor " + std::to_string(p) + " has shape " + top_down_[p].shape().to_string());
    }
    if (bottom_up_[p].shape().ndim() == 1) bottom_up_[p] = bottom_up_[p].reshaped(Shape{f, 1});
    require_column(bottom_up_[p], f, "bottom-up factor");
  }
}

AttentionParams AttentionParams::rank1(Matrix a, Matrix b) {
  std::vector<Matrix> td;
  td.push_back(std::move(a));
  std::vector<Matrix> bu;
  bu.push_back(std::move(b));
  return AttentionParams(std::move(td), std::move(bu));
}

std::vector<Matrix> AttentionParams::second_order_weights() const {
  const std::size_t f = features();
  std::vector<Matrix> w(classes(), Matrix(f, f));
  for (std::size_t p = 0; p < rank(); ++p) {
    for (std::size_t k = 0; k < classes(); ++k) {
      for (std::size_t i = 0; i < f; ++i)
        for (std::size_t j = 0; j < f; ++j) w[k](i, j) += top_down_[p](i, k) * bottom_up_[p][j];
    }
  }
  return w;
}

double score_avg_pool(const Matrix& x, const Matrix& w) {
  require_column(w, x.cols(), "score_avg_pool");
  return sum(matmul(x, w));
}

double score_second_order(const Matrix& x, const Matrix& w) {
  const std::size_t f = x.cols();
  if (w.rows() != f || w.cols() != f) {
    throw ShapeError("score_second_order: W must be " + std::to_string(f) + "x" + std::to_string(f) + ", got " +
                     w.shape().to_string());
  }
  const Matrix gram = matmul_tn(x, x);
  return frobenius_dot(gram, w);
}

Matrix score_second_order(const Matrix& x, std::span<const Matrix> per_class) {
  const std::size_t f = x.cols();
  for (const auto& w : per_class) {
    if (w.rows() != f || w.cols() != f) throw ShapeError("score_second_order: W_k has shape " + w.shape().to_string());
  }
  const Matrix gram = matmul_tn(x, x);
  Matrix s(per_class.size(), 1);
  for (std::size_t k = 0; k < per_class.size(); ++k) s[k] = frobenius_dot(gram, per_class[k]);
  return s;
}

Rank1Result score_rank1(const Matrix& x, const Matrix& a, const Matrix& b) {
  require_column(a, x.cols(), "score_rank1 (a)");
  require_column(b, x.cols(), "score_rank1 (b)");
  Rank1Result r;
  r.attention = matmul(x, b);
  r.pooled = matmul_tn(x, r.attention);
  r.score = matmul_tn(a, r.pooled)[0];
  return r;
}

Matrix score_multiclass(const Matrix& x, const AttentionParams& params) {
  require_rank1(params, "score_multiclass");
  return score_rank_p(x, params);
}

CombinedScores combined_map_score(const Matrix& x, const AttentionParams& params) {
  require_rank1(params, "combined_map_score");
  require_rows(params.top_down(), x.cols(), "combined_map_score");
  CombinedScores out;
  out.maps.bottom_up = matmul(x, params.bottom_up());
  out.maps.top_down = matmul(x, params.top_down());
  const std::size_t n = x.rows(), k = params.classes();
  out.maps.combined = Matrix(n, k);
  out.scores = Matrix(k, 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      out.maps.combined(i, c) = out.maps.top_down(i, c) * out.maps.bottom_up[i];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += out.maps.combined(i, c);
    out.scores[c] = acc;
  }
  return out;
}

Matrix score_rank_p(const Matrix& x, const AttentionParams& params) {
  require_rows(params.top_down(), x.cols(), "score_rank_p");
  // Each component's class score is finished before it is added to s. The
  // 2Kf count per component covers f multiplies and f adds per class, the
  // last of which folds the component into s.
  Matrix s(params.classes(), 1);
  const std::size_t f = x.cols();
  for (std::size_t p = 0; p < params.rank(); ++p) {
    const Matrix h = matmul(x, params.bottom_up(p));
    const Matrix pooled = matmul_tn(x, h);
    const Matrix& a = params.top_down(p);
    for (std::size_t k = 0; k < s.size(); ++k) {
      double term = 0.0;
      for (std::size_t i = 0; i < f; ++i) term += a(i, k) * pooled[i];
      s[k] += term;
    }
    count_flops(2ULL * s.size() * f);
  }
  return s;
}

Matrix score_per_class(const Matrix& x, const PerClassParams& params) {
  require_rows(params.top_down, x.cols(), "score_per_class (A)");
  require_rows(params.bottom_up, x.cols(), "score_per_class (B)");
  if (params.top_down.cols() != params.bottom_up.cols()) {
    throw ShapeError("score_per_class: class counts differ, " + params.top_down.shape().to_string() + " vs " +
                     params.bottom_up.shape().to_string());
  }
  const Matrix t = matmul(x, params.top_down);
  const Matrix h = matmul(x, params.bottom_up);
  Matrix s(t.cols(), 1);
  for (std::size_t k = 0; k < t.cols(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i) acc += t(i, k) * h(i, k);
    s[k] = acc;
  }
  return s;
}

Matrix score_top_down_only(const Matrix& x, const Matrix& w_cls) {
  require_rows(w_cls, x.cols(), "score_top_down_only");
  const Matrix t = matmul(x, w_cls);
  Matrix s(t.cols(), 1);
  for (std::size_t k = 0; k < t.cols(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i) acc += t(i, k);
    s[k] = acc;
  }
  return s;
}

Matrix to_grid(const Matrix& column, const Shape& spatial) {
  if (spatial.ndim() != 2 || spatial.numel() != column.size()) {
    throw ShapeError("cannot lay " + std::to_string(column.size()) + " locations on grid " + spatial.to_string());
  }
  return column.reshaped(spatial);
}

GridMaps extract_maps(const Matrix& x, const AttentionParams& params, const Shape& spatial) {
  if (spatial.ndim() != 2 || spatial.numel() != x.rows()) {
    throw ShapeError("grid " + spatial.to_string() + " does not cover " + std::to_string(x.rows()) + " locations");
  }
  const auto cs = combined_map_score(x, params);
  GridMaps g;
  g.bottom_up = to_grid(cs.maps.bottom_up, spatial);
  for (std::size_t k = 0; k < params.classes(); ++k) {
    g.top_down.push_back(to_grid(column_of(cs.maps.top_down, k), spatial));
    g.combined.push_back(to_grid(column_of(cs.maps.combined, k), spatial));
  }
  return g;
}

Matrix init_uniform(std::size_t rows, std::size_t cols, std::size_t f, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(f));
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

AttentionParams init_attention(std::size_t f, std::size_t k, std::size_t rank, SplitMix64& rng) {
  std::vector<Matrix> td, bu;
  for (std::size_t p = 0; p < rank; ++p) {
    td.push_back(init_uniform(f, k, f, rng));
    bu.push_back(init_uniform(f, 1, f, rng));
  }
  return AttentionParams(std::move(td), std::move(bu));
}

PerClassParams init_per_class(std::size_t f, std::size_t k, SplitMix64& rng) {
  PerClassParams p{init_uniform(f, k, f, rng), Matrix()};
  p.bottom_up = init_uniform(f, k, f, rng);
  return p;
}

namespace graph {

namespace {
ag::Var ones_column(ag::Var like) { return ag::leaf(*like.tape, Matrix::ones(like.value().rows(), 1)); }
}  // namespace

ag::Var avg_pool_scores(ag::Var x, ag::Var w_cls) {
  const auto t = ag::matmul(x, w_cls);
  return ag::matmul(ag::transpose(t), ones_column(x));
}

ag::Var attention_scores(ag::Var x, ag::Var a, ag::Var b) {
  const auto h = ag::matmul(x, b);
  const auto t = ag::matmul(x, a);
  return ag::matmul(ag::transpose(t), h);
}

ag::Var rank_p_scores(ag::Var x, std::span<const ag::Var> a, std::span<const ag::Var> b) {
  if (a.empty() || a.size() != b.size()) throw ShapeError("rank_p_scores: factor lists must be non-empty and equal");
  ag::Var s = attention_scores(x, a[0], b[0]);
  for (std::size_t p = 1; p < a.size(); ++p) s = ag::add(s, attention_scores(x, a[p], b[p]));
  return s;
}

ag::Var per_class_scores(ag::Var x, ag::Var a, ag::Var b_pc) {
  const auto c = ag::elementwise_mul(ag::matmul(x, a), ag::matmul(x, b_pc));
  return ag::matmul(ag::transpose(c), ones_column(x));
}

}  // namespace graph

}  // namespace attnpool
