#include "attnpool/pose_head.hpp"

#include <algorithm>
#include <string>

#include "attnpool/attention.hpp"
#include "attnpool/errors.hpp"

namespace attnpool {

void PoseHeadParams::validate() const {
  const std::size_t h = w1.cols();
  if (bias1.size() != h) throw ShapeError("pose head: bias1 " + bias1.shape().to_string() + " vs hidden " + std::to_string(h));
  if (w2.rows() != h || w2.cols() != kPoseChannels) {
    throw ShapeError("pose head: W2 must be " + std::to_string(h) + "x17, got " + w2.shape().to_string());
  }
  if (bias2.size() != kPoseChannels) throw ShapeError("pose head: bias2 must have 17 entries");
  if (lambda_pose < 0.0) throw ValidationError("lambda_pose must be nonnegative");
}

PoseHeadParams init_pose_head(std::size_t f, std::size_t hidden, SplitMix64& rng, double lambda_pose) {
  if (hidden == 0) throw ValidationError("pose head hidden width must be >= 1");
  PoseHeadParams p;
  p.w1 = init_uniform(f, hidden, f, rng);
  p.bias1 = Matrix(hidden, 1);
  p.w2 = init_uniform(hidden, kPoseChannels, hidden, rng);
  p.bias2 = Matrix(kPoseChannels, 1);
  p.lambda_pose = lambda_pose;
  return p;
}

Matrix pose_head_forward(const Matrix& x, const PoseHeadParams& params) {
  params.validate();
  if (x.cols() != params.features()) {
    throw ShapeError("pose head: features " + x.shape().to_string() + " vs W1 " + params.w1.shape().to_string());
  }
  Matrix hidden = matmul(x, params.w1);
  for (std::size_t i = 0; i < hidden.rows(); ++i)
    for (std::size_t j = 0; j < hidden.cols(); ++j) hidden(i, j) = std::max(hidden(i, j) + params.bias1[j], 0.0);
  Matrix out = matmul(hidden, params.w2);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t c = 0; c < kPoseChannels; ++c) out(i, c) += params.bias2[c];
  return out;
}

PoseLoss pose_loss(const Matrix& pred, const PoseTarget& target) {
  const std::size_t n = pred.rows();
  if (pred.cols() != kPoseChannels) throw ShapeError("pose_loss: prediction must have 17 channels");
  if (target.heatmaps.rows() != n || target.heatmaps.cols() != kPoseKeypoints) {
    throw ShapeError("pose_loss: targets " + target.heatmaps.shape().to_string() + " vs prediction " +
                     pred.shape().to_string());
  }
  if (target.mask.size() != kPoseKeypoints) throw ShapeError("pose_loss: mask must have 16 entries");
  std::size_t visible = 0;
  double acc = 0.0;
  for (std::size_t c = 0; c < kPoseKeypoints; ++c) {
    if (target.mask[c] == 0.0) continue;
    ++visible;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = pred(i, c) - target.heatmaps(i, c);
      acc += r * r;
    }
  }
  if (visible == 0) return {0.0, true};
  return {acc / static_cast<double>(n * visible), false};
}

PoseScores score_pose_regularized(const Matrix& x, const PoseHeadParams& params, const Matrix& top_down) {
  if (top_down.rows() != x.cols()) {
    throw ShapeError("pose scores: top-down " + top_down.shape().to_string() + " vs features " + x.shape().to_string());
  }
  PoseScores out;
  out.pred = pose_head_forward(x, params);
  out.attention = column_of(out.pred, kAttentionChannel);
  out.scores = matmul_tn(matmul(x, top_down), out.attention);
  return out;
}

namespace graph {

ag::Var pose_head_forward(ag::Var x, ag::Var w1, ag::Var bias1, ag::Var w2, ag::Var bias2) {
  ag::Tape& tape = *x.tape;
  const auto ones = ag::leaf(tape, Matrix::ones(x.value().rows(), 1));
  // Row-broadcast of a bias column as the outer product 1 * bias^T.
  const auto hidden = ag::relu(ag::add(ag::matmul(x, w1), ag::matmul(ones, ag::transpose(bias1))));
  return ag::add(ag::matmul(hidden, w2), ag::matmul(ones, ag::transpose(bias2)));
}

ag::Var channel(ag::Var pred, std::size_t c) {
  Matrix e(pred.value().cols(), 1);
  e[c] = 1.0;
  return ag::matmul(pred, ag::leaf(*pred.tape, std::move(e)));
}

ag::Var pose_loss(ag::Var pred, const PoseTarget& target) {
  ag::Tape& tape = *pred.tape;
  const std::size_t n = pred.value().rows();
  if (target.heatmaps.rows() != n) throw ShapeError("pose_loss: target rows differ from prediction");
  Matrix select(kPoseChannels, kPoseKeypoints);
  Matrix mask(n, kPoseKeypoints);
  std::size_t visible = 0;
  for (std::size_t c = 0; c < kPoseKeypoints; ++c) {
    select(c, c) = 1.0;
    if (target.mask[c] != 0.0) {
      ++visible;
      for (std::size_t i = 0; i < n; ++i) mask(i, c) = 1.0;
    }
  }
  const auto keypoints = ag::matmul(pred, ag::leaf(tape, std::move(select)));
  const auto residual = ag::subtract(keypoints, ag::leaf(tape, target.heatmaps));
  const auto masked = ag::elementwise_mul(residual, ag::leaf(tape, std::move(mask)));
  const double norm = visible == 0 ? 0.0 : 1.0 / static_cast<double>(n * visible);
  return ag::scale(ag::sum_of_squares(masked), norm);
}

ag::Var pose_scores(ag::Var x, ag::Var pred, ag::Var top_down) {
  const auto h = channel(pred, kAttentionChannel);
  return ag::matmul(ag::transpose(ag::matmul(x, top_down)), h);
}

}  // namespace graph

}  // namespace attnpool
