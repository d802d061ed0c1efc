#include "attnpool/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "attnpool/errors.hpp"

namespace attnpool {

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t argmax_row(const Matrix& scores, std::size_t r) { return argmax(scores.row(r)); }

double metric_accuracy(const Matrix& scores, std::span<const std::size_t> labels) {
  if (scores.rows() == 0 || labels.empty()) throw ValidationError("metric_accuracy: empty input");
  if (labels.size() != scores.rows()) throw ShapeError("metric_accuracy: label count differs from score rows");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) hits += argmax_row(scores, r) == labels[r] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

double average_precision(std::span<const double> scores, std::span<const double> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double positives = 0.0, acc = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] > 0.5) {
      positives += 1.0;
      acc += positives / static_cast<double>(rank + 1);
    }
  }
  return positives > 0.0 ? acc / positives : std::numeric_limits<double>::quiet_NaN();
}

MapResult metric_map(const Matrix& scores, const Matrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ShapeError("metric_map: scores " + scores.shape().to_string() + " vs labels " + labels.shape().to_string());
  }
  const std::size_t m = scores.rows(), k = scores.cols();
  MapResult out;
  out.per_class_ap.assign(k, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> s(m), y(m);
  for (std::size_t c = 0; c < k; ++c) {
    bool any = false;
    for (std::size_t i = 0; i < m; ++i) {
      s[i] = scores(i, c);
      y[i] = labels(i, c);
      any = any || y[i] > 0.5;
    }
    if (!any) {
      out.skipped.push_back(c);
      continue;
    }
    out.per_class_ap[c] = average_precision(s, y);
    total += out.per_class_ap[c];
    ++used;
  }
  if (used == 0) throw ValidationError("metric_map: no class has a positive example");
  out.map = total / static_cast<double>(used);
  return out;
}

}  // namespace attnpool
