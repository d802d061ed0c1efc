#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "attnpool/pose_head.hpp"
#include "attnpool/tensor.hpp"

// Planted-attention task: a classification problem where the label is only
// visible in one grid cell, so spatial selectivity is needed to solve it.
namespace attnpool {

struct PlantedTaskConfig {
  std::size_t n1 = 7;
  std::size_t n2 = 7;
  std::size_t f = 32;
  std::size_t classes = 8;
  std::size_t train_samples = 2000;
  std::size_t val_samples = 500;
  double signal_strength = 3.0;
  // Number of clutter cells per example. Each holds the prototype of a class
  // drawn independently of the label (a distractor that carries no label
  // information but looks like class evidence to a pooled feature).
  std::size_t clutter_classes = 2;
  // Weight of the class-agnostic objectness direction added to planted
  // cells, relative to signal_strength.
  double objectness = 2.0;
  bool multi_label = false;
  std::size_t max_planted = 3;  // multi-label mode: planted cells per example in [1, max_planted]
  double pose_sigma = 1.0;
  std::uint64_t seed = 7;

  std::size_t locations() const { return n1 * n2; }
  void validate() const;  // ConfigError
};

struct LabeledExample {
  Matrix features;                          // n x f
  std::size_t label = 0;                    // the planted class; smallest label in multi-label mode
  std::vector<std::size_t> labels;          // sorted, distinct; {label} in single-label mode
  std::vector<std::size_t> planted_locs;    // one entry in single-label mode
  std::optional<PoseTarget> pose;

  std::size_t planted_loc() const { return planted_locs.front(); }
};

struct Dataset {
  std::size_t n1 = 0, n2 = 0, f = 0, classes = 0;
  bool multi_label = false;
  std::vector<LabeledExample> examples;

  std::size_t size() const noexcept { return examples.size(); }
  std::size_t locations() const noexcept { return n1 * n2; }
  std::vector<std::size_t> labels() const;
  Matrix label_matrix() const;  // m x K, 1 where the class is present
  Dataset head(std::size_t count) const;
};

struct PlantedTask {
  Dataset train;
  Dataset val;
  Matrix prototypes;  // K x f, unit-normalized then centered across classes
  Matrix objectness;  // f x 1, unit, orthogonal to every prototype
};

// Example i of the train split uses stream split_seed(seed, i); validation
// example j uses split_seed(seed, train_samples + j). Within a stream the
// draw order is: labels and planted cells, n*f background normals, clutter
// cells (location then class, per cell).
PlantedTask gen_planted(const PlantedTaskConfig& config);

// Keypoint j sits at planted_loc + offset_j on the grid (offset_0 = (0,0));
// keypoints that fall off the grid are masked out. sigma = 0 renders one-hot
// maps.
void gen_pose_targets(Dataset& dataset, double sigma = 1.0);

struct GridOffset {
  int drow;
  int dcol;
};
const std::vector<GridOffset>& keypoint_offsets();

}  // namespace attnpool
