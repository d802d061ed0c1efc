#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "attnpool/attention.hpp"
#include "attnpool/autograd.hpp"
#include "attnpool/errors.hpp"
#include "attnpool/pose_head.hpp"
#include "attnpool/splitmix.hpp"
#include "attnpool/synth.hpp"
#include "attnpool/train.hpp"
#include "oracles.hpp"

using namespace attnpool;
namespace ag = attnpool::ag;

namespace {

PoseHeadParams zero_head(std::size_t f, std::size_t hidden) {
  return {Matrix::zeros(f, hidden), Matrix::zeros(hidden, 1), Matrix::zeros(hidden, kPoseChannels),
          Matrix::zeros(kPoseChannels, 1), 0.1};
}

}  // namespace

TEST(PoseHead, ZeroWeightsGiveZeroOutput) {
  SplitMix64 rng(1);
  const Matrix x = oracle::random_matrix(6, 4, rng);
  EXPECT_EQ(pose_head_forward(x, zero_head(4, 3)), Matrix::zeros(6, kPoseChannels));
}

TEST(PoseHead, ConstantPath) {
  SplitMix64 rng(2);
  const Matrix x = oracle::random_matrix(9, 5, rng);
  PoseHeadParams p = zero_head(5, 1);
  p.bias1(0, 0) = 1.0;
  p.w2(0, kAttentionChannel) = 1.0;
  const Matrix out = pose_head_forward(x, p);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out(i, kAttentionChannel), 1.0);
}

TEST(PoseHead, ValidateRejectsInconsistentDims) {
  PoseHeadParams p = zero_head(4, 3);
  p.w2 = Matrix::zeros(3, 16);
  EXPECT_THROW(p.validate(), ShapeError);
}

TEST(PoseLoss, Examples) {
  Matrix pred(2, kPoseChannels), target(2, kPoseKeypoints);
  Matrix mask = Matrix::zeros(kPoseKeypoints, 1);
  mask(0, 0) = 1.0;
  pred(0, 0) = 1.0;
  EXPECT_EQ(pose_loss(pred, {target, mask}).value, 0.5);

  Matrix same(2, kPoseChannels);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < kPoseKeypoints; ++j) same(i, j) = target(i, j);
  same(0, kAttentionChannel) = 123.0;  // never supervised
  EXPECT_EQ(pose_loss(same, {target, Matrix::ones(kPoseKeypoints, 1)}).value, 0.0);

  const PoseLoss none = pose_loss(pred, {target, Matrix::zeros(kPoseKeypoints, 1)});
  EXPECT_EQ(none.value, 0.0);
  EXPECT_TRUE(none.unsupervised);
}

TEST(PoseLoss, SymmetricAndZeroOnlyWhenEqual) {
  SplitMix64 rng(3);
  const std::size_t n = 5;
  const Matrix a = oracle::random_matrix(n, kPoseChannels, rng);
  const Matrix b = oracle::random_matrix(n, kPoseChannels, rng);
  Matrix mask = Matrix::ones(kPoseKeypoints, 1);
  mask(3, 0) = 0.0;
  Matrix a16(n, kPoseKeypoints), b16(n, kPoseKeypoints);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kPoseKeypoints; ++j) {
      a16(i, j) = a(i, j);
      b16(i, j) = b(i, j);
    }
  EXPECT_EQ(pose_loss(a, {b16, mask}).value, pose_loss(b, {a16, mask}).value);
  EXPECT_GT(pose_loss(a, {b16, mask}).value, 0.0);

  // Differences only in the masked channel leave the loss at zero.
  Matrix c = a;
  for (std::size_t i = 0; i < n; ++i) c(i, 3) += 1.0;
  EXPECT_EQ(pose_loss(c, {a16, mask}).value, 0.0);

  double want = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kPoseKeypoints; ++j)
      if (j != 3) want += (a(i, j) - b16(i, j)) * (a(i, j) - b16(i, j));
  want /= static_cast<double>(n * 15);
  EXPECT_LE(oracle::rel(pose_loss(a, {b16, mask}).value, want), 1e-14);
}

TEST(PoseScores, RiggedHeadMatchesLinearAttention) {
  // hidden = 2f carries relu(Xb) and relu(-Xb) on two units; W2 recombines them to Xb.
  SplitMix64 rng(4);
  const std::size_t n = 8, f = 5, k = 3;
  const Matrix x = oracle::random_matrix(n, f, rng);
  const Matrix a = oracle::random_matrix(f, k, rng);
  const Matrix b = oracle::random_matrix(f, 1, rng);
  PoseHeadParams p = zero_head(f, 2 * f);
  for (std::size_t i = 0; i < f; ++i) {
    p.w1(i, i) = 1.0;
    p.w1(i, f + i) = -1.0;
    p.w2(i, kAttentionChannel) = b(i, 0);
    p.w2(f + i, kAttentionChannel) = -b(i, 0);
  }
  const PoseScores got = score_pose_regularized(x, p, a);
  const Matrix want = score_multiclass(x, AttentionParams::rank1(a, b));
  EXPECT_LE(max_rel_diff(got.scores, want), 1e-9);

  const PoseScores zero = score_pose_regularized(x, zero_head(f, 4), a);
  EXPECT_EQ(zero.scores, Matrix::zeros(k, 1));
}

TEST(PoseHead, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng(seed);
    const std::size_t n = 6, f = 4, hidden = 5, k = 3;
    const Matrix x = oracle::random_matrix(n, f, rng);
    Matrix heat(n, kPoseKeypoints);
    for (double& v : heat.data()) v = rng.uniform01();
    Matrix mask = Matrix::ones(kPoseKeypoints, 1);
    mask(2, 0) = 0.0;
    const PoseTarget target{heat, mask};
    const std::vector<Matrix> params{oracle::random_matrix(f, hidden, rng), oracle::random_matrix(hidden, 1, rng),
                                     oracle::random_matrix(hidden, kPoseChannels, rng),
                                     oracle::random_matrix(kPoseChannels, 1, rng), oracle::random_matrix(f, k, rng)};
    const ag::ScalarGraph loss = [&](ag::Tape& t, std::span<const ag::Var> v) {
      const ag::Var xv = ag::leaf(t, x);
      const ag::Var pred = graph::pose_head_forward(xv, v[0], v[1], v[2], v[3]);
      const ag::Var cls = ag::softmax_cross_entropy(graph::pose_scores(xv, pred, v[4]), 1);
      return ag::add(cls, ag::scale(graph::pose_loss(pred, target), 0.5));
    };
    EXPECT_LE(ag::finite_diff_check(loss, params), 1e-6) << "seed " << seed;
  }
}

namespace {

// An unregularized nonlinear attention head built by hand from tape ops:
// h = channel 16 of relu(X W1 + 1 bias1^T) W2 + 1 bias2^T, logits = (XA)^T h / n.
ag::Var unregularized_loss(ag::Tape& t, std::span<const ag::Var> v, const LabeledExample& ex) {
  const std::size_t n = ex.features.rows();
  const ag::Var x = ag::leaf(t, ex.features);
  const ag::Var ones = ag::leaf(t, Matrix::ones(n, 1));
  const ag::Var hidden =
      ag::relu(ag::add(ag::matmul(x, v[0]), ag::matmul(ones, ag::transpose(v[1]))));
  Matrix pick = Matrix::zeros(kPoseChannels, 1);
  pick(kAttentionChannel, 0) = 1.0;
  const ag::Var w2h = ag::matmul(v[2], ag::leaf(t, pick));
  const ag::Var b2h = ag::matmul(ag::transpose(v[3]), ag::leaf(t, pick));
  const ag::Var h = ag::add(ag::matmul(hidden, w2h), ag::matmul(ones, b2h));
  const ag::Var logits = ag::scale(ag::matmul(ag::transpose(ag::matmul(x, v[4])), h), 1.0 / static_cast<double>(n));
  return ag::softmax_cross_entropy(logits, ex.label);
}

}  // namespace

TEST(PoseHead, ZeroLambdaDecouplesPoseSupervision) {
  PlantedTaskConfig tc;
  tc.n1 = tc.n2 = 4;
  tc.f = 8;
  tc.classes = 3;
  tc.train_samples = 10;
  tc.val_samples = 1;
  PlantedTask task = gen_planted(tc);
  gen_pose_targets(task.train, 1.0);

  TrainConfig cfg;
  cfg.head = HeadKind::kPoseReg;
  cfg.hidden = 6;
  cfg.lambda_pose = 0.0;
  cfg.seed = 3;
  const HeadParams layout = init_head(cfg, tc.f, tc.classes);

  const LossContext ctx{.loss = LossKind::kSoftmax, .lambda_pose = 0.0, .sketch = nullptr, .cbp = {}};
  std::vector<Matrix> a = layout.values(), b = layout.values();
  const double lr = 0.05;
  for (int step = 0; step < 10; ++step) {
    const LabeledExample& ex = task.train.examples[static_cast<std::size_t>(step) % task.train.size()];
    const auto ga = ag::evaluate_with_grad(example_loss_graph(layout, ex, ctx), a);
    const ag::ScalarGraph plain = [&](ag::Tape& t, std::span<const ag::Var> v) { return unregularized_loss(t, v, ex); };
    const auto gb = ag::evaluate_with_grad(plain, b);
    ASSERT_LE(std::abs(ga.loss - gb.loss), 1e-10) << "step " << step;
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a[i].size(); ++j) {
        a[i][j] -= lr * ga.grads[i][j];
        b[i][j] -= lr * gb.grads[i][j];
      }
    }
  }
}
