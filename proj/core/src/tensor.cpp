#include "attnpool/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "attnpool/errors.hpp"

namespace attnpool {

namespace detail {
CounterState& counter_state() noexcept {
  thread_local CounterState state;
  return state;
}
}  // namespace detail

CounterScope::CounterScope() noexcept {
  auto& st = detail::counter_state();
  st.counters = OpCounters{};
  st.enabled = true;
}

CounterScope::~CounterScope() { detail::counter_state().enabled = false; }

const OpCounters& CounterScope::counters() const noexcept { return detail::counter_state().counters; }

// ---------------------------------------------------------------------------
// Shape

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw ShapeError("shape must have at least one dimension");
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("shape " + to_string() + " has a zero dimension");
  }
}

std::size_t Shape::numel() const noexcept {
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ", ";
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {
  if (!std::isfinite(fill)) throw ValidationError("non-finite fill value");
  cache_cols();
}

Matrix::Matrix(Shape shape, std::span<const double> values) : shape_(std::move(shape)) {
  if (values.size() != shape_.numel()) {
    throw ShapeError("shape " + shape_.to_string() + " needs " + std::to_string(shape_.numel()) +
                     " values, got " + std::to_string(values.size()));
  }
  data_.assign(values.begin(), values.end());
  if (!all_finite()) throw ValidationError("matrix entries must be finite");
  cache_cols();
}

void Matrix::cache_cols() { cols_ = shape_.ndim() == 1 ? 1 : shape_.dims().back(); }

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) { return Matrix(Shape{values.size(), 1}, values); }

Matrix Matrix::column(std::initializer_list<double> values) {
  return column(std::span<const double>(values.begin(), values.size()));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("from_rows needs at least one row");
  const std::size_t c = rows.begin()->size();
  std::vector<double> flat;
  flat.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) throw ShapeError("ragged rows in from_rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Matrix(Shape{rows.size(), c}, flat);
}

std::size_t Matrix::rows() const {
  if (shape_.ndim() > 2) throw ShapeError("expected a 2-D matrix, got " + shape_.to_string());
  return shape_[0];
}

std::size_t Matrix::cols() const {
  if (shape_.ndim() > 2) throw ShapeError("expected a 2-D matrix, got " + shape_.to_string());
  return cols_;
}

Matrix Matrix::reshaped(Shape shape) const {
  if (shape.numel() != size()) {
    throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  }
  Matrix out = *this;
  out.shape_ = std::move(shape);
  out.cache_cols();
  return out;
}

Matrix Matrix::slice(std::size_t k) const {
  if (shape_.ndim() != 3) throw ShapeError("slice needs a rank-3 tensor, got " + shape_.to_string());
  if (k >= shape_[0]) throw ShapeError("slice index out of range");
  const std::size_t stride = shape_[1] * shape_[2];
  return Matrix(Shape{shape_[1], shape_[2]}, data().subspan(k * stride, stride));
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Operations

namespace {

std::string pair_str(const Matrix& a, const Matrix& b) {
  return a.shape().to_string() + " and " + b.shape().to_string();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + pair_str(a, b));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: inner dimensions differ for " + pair_str(a, b));
  Matrix c(m, p);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a(i, l) * b(l, j);
      c(i, j) = acc;
    }
  }
  count_flops(2ULL * m * k * p);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  accumulate_matmul_tn(a, b, c);
  return c;
}

void accumulate_matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t k = a.rows(), m = a.cols(), p = b.cols();
  if (b.rows() != k) throw ShapeError("matmul_tn: inner dimensions differ for " + pair_str(a, b));
  if (out.rows() != m || out.cols() != p) {
    throw ShapeError("matmul_tn: output " + out.shape().to_string() + " does not fit " + pair_str(a, b));
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double acc = out(i, j);
      for (std::size_t l = 0; l < k; ++l) acc += a(l, i) * b(l, j);
      out(i, j) = acc;
    }
  }
  count_flops(2ULL * m * k * p);
}

Matrix transpose(const Matrix& a) {
  if (a.shape().ndim() != 2) throw ShapeError("transpose needs a 2-D matrix, got " + a.shape().to_string());
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double trace(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("trace needs a square matrix, got " + a.shape().to_string());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, i);
  return acc;
}

Matrix elementwise_mul(const Matrix& u, const Matrix& v) {
  require_same_shape(u, v, "elementwise_mul");
  Matrix w = u;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= v[i];
  count_flops(w.size());
  return w;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  count_flops(c.size());
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  count_flops(c.size());
  return c;
}

Matrix scale(const Matrix& a, double alpha) {
  Matrix c = a;
  for (auto& v : c.data()) v *= alpha;
  count_flops(c.size());
  return c;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  count_flops(2ULL * a.size());
  return acc;
}

double sum(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  count_flops(a.size());
  return acc;
}

Matrix column_of(const Matrix& a, std::size_t c) {
  if (c >= a.cols()) throw ShapeError("column index out of range for " + a.shape().to_string());
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = a(i, c);
  return out;
}

Matrix outer(const Matrix& u, const Matrix& v) {
  if (!u.is_column() || !v.is_column()) throw ShapeError("outer needs column vectors, got " + pair_str(u, v));
  Matrix out(u.rows(), v.rows());
  for (std::size_t i = 0; i < u.rows(); ++i)
    for (std::size_t j = 0; j < v.rows(); ++j) out(i, j) = u[i] * v[j];
  count_flops(out.size());
  return out;
}

double max_rel_diff(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) throw ShapeError("max_rel_diff: size mismatch " + pair_str(a, b));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / (1.0 + std::abs(b[i])));
  }
  return worst;
}

}  // namespace attnpool
