#pragma once

// Reference implementations written with plain loops over std::vector.
// They share no code with the library so a bug there cannot hide here.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "attnpool/splitmix.hpp"
#include "attnpool/tensor.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const attnpool::Matrix& m) {
  Dense out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline Dense mul(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.front().size();
  Dense out(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < k; ++t) out[i][j] += a[i][t] * b[t][j];
  return out;
}

inline Dense transposed(const Dense& a) {
  Dense out(a.front().size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[j][i] = a[i][j];
  return out;
}

inline Dense outer(const std::vector<double>& u, const std::vector<double>& v) {
  Dense out(u.size(), std::vector<double>(v.size()));
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i][j] = u[i] * v[j];
  return out;
}

inline std::vector<double> column(const attnpool::Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
  return out;
}

// Tr(X^T X W^T) = sum_ij (X^T X)_ij W_ij, built from the explicit f x f Gram matrix.
inline double second_order(const attnpool::Matrix& x, const Dense& w) {
  const Dense xd = to_dense(x);
  const Dense gram = mul(transposed(xd), xd);
  double s = 0.0;
  for (std::size_t i = 0; i < gram.size(); ++i)
    for (std::size_t j = 0; j < gram.size(); ++j) s += gram[i][j] * w[i][j];
  return s;
}

inline double dot(const std::vector<double>& u, const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double rel(double got, double want) { return std::abs(got - want) / (1.0 + std::abs(want)); }

inline attnpool::Matrix random_matrix(std::size_t rows, std::size_t cols, attnpool::SplitMix64& rng) {
  attnpool::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// Circular convolution of two length-d vectors by definition.
inline std::vector<double> circular_convolve(const std::vector<double>& u, const std::vector<double>& v) {
  const std::size_t d = u.size();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out[(i + j) % d] += u[i] * v[j];
  return out;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace oracle
