#pragma once

#include <cstddef>

#include "attnpool/autograd.hpp"
#include "attnpool/splitmix.hpp"
#include "attnpool/tensor.hpp"

// Pose-regularized attention: a per-location two-layer MLP predicts 17
// channels. Channels 0..15 regress keypoint heatmaps under an L2 loss and
// channel 16 is the (nonlinear) bottom-up attention map.
namespace attnpool {

inline constexpr std::size_t kPoseKeypoints = 16;
inline constexpr std::size_t kPoseChannels = 17;
inline constexpr std::size_t kAttentionChannel = 16;

struct PoseHeadParams {
  Matrix w1;     // f x hidden
  Matrix bias1;  // hidden x 1
  Matrix w2;     // hidden x 17
  Matrix bias2;  // 17 x 1
  double lambda_pose = 0.1;

  std::size_t features() const { return w1.rows(); }
  std::size_t hidden() const { return w1.cols(); }
  void validate() const;  // ShapeError on inconsistent dims
};

struct PoseTarget {
  Matrix heatmaps;  // n x 16, entries in [0, 1]
  Matrix mask;      // 16 x 1, 1 = visible
};

PoseHeadParams init_pose_head(std::size_t f, std::size_t hidden, SplitMix64& rng, double lambda_pose = 0.1);

// relu(X W1 + 1 bias1^T) W2 + 1 bias2^T, n x 17. No output nonlinearity.
Matrix pose_head_forward(const Matrix& x, const PoseHeadParams& params);

struct PoseLoss {
  double value = 0.0;
  bool unsupervised = false;  // every channel masked out; value is 0
};

// Mean squared error over visible keypoint channels and all locations,
// divided by n * (#visible). Channel 16 never contributes.
PoseLoss pose_loss(const Matrix& pred, const PoseTarget& target);

struct PoseScores {
  Matrix scores;     // K x 1, s[k] = (X a_k)^T h
  Matrix attention;  // h, n x 1
  Matrix pred;       // full n x 17 head output
};
PoseScores score_pose_regularized(const Matrix& x, const PoseHeadParams& params, const Matrix& top_down);

// classification + lambda * pose.
inline double pose_regularized_loss(double classification, double pose, double lambda_pose) {
  return classification + lambda_pose * pose;
}

namespace graph {
ag::Var pose_head_forward(ag::Var x, ag::Var w1, ag::Var bias1, ag::Var w2, ag::Var bias2);
// Column `channel` of an n x C prediction.
ag::Var channel(ag::Var pred, std::size_t channel);
ag::Var pose_loss(ag::Var pred, const PoseTarget& target);
ag::Var pose_scores(ag::Var x, ag::Var pred, ag::Var top_down);
}  // namespace graph

}  // namespace attnpool
