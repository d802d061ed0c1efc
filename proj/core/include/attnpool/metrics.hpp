#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "attnpool/tensor.hpp"

namespace attnpool {

// Index of the largest entry in row r; ties go to the lowest index.
std::size_t argmax_row(const Matrix& scores, std::size_t r);
std::size_t argmax(std::span<const double> values);

// Fraction of rows whose argmax equals the label. Throws ValidationError on
// empty input.
double metric_accuracy(const Matrix& scores, std::span<const std::size_t> labels);

struct MapResult {
  double map = 0.0;
  std::vector<double> per_class_ap;     // NaN for skipped classes
  std::vector<std::size_t> skipped;     // classes without any positive
};

// Average precision of one ranking: sort by descending score (ties by
// ascending index) and average the precision at each positive.
double average_precision(std::span<const double> scores, std::span<const double> labels);

// Mean of per-class AP over classes with at least one positive. Throws
// ValidationError when no class has a positive.
MapResult metric_map(const Matrix& scores, const Matrix& labels);

}  // namespace attnpool
