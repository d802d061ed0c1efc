#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "attnpool/autograd.hpp"
#include "attnpool/errors.hpp"
#include "attnpool/synth.hpp"
#include "attnpool/train.hpp"
#include "oracles.hpp"

using namespace attnpool;
namespace ag = attnpool::ag;

namespace {

PlantedTask small_task(bool multi_label = false) {
  PlantedTaskConfig c;
  c.n1 = c.n2 = 4;
  c.f = 8;
  c.classes = 3;
  c.train_samples = 60;
  c.val_samples = 20;
  c.multi_label = multi_label;
  c.seed = 11;
  PlantedTask t = gen_planted(c);
  gen_pose_targets(t.train);
  gen_pose_targets(t.val);
  return t;
}

TrainConfig small_config(HeadKind head) {
  TrainConfig c;
  c.head = head;
  c.epochs = 3;
  c.batch_size = 8;
  c.hidden = 6;
  c.sketch_dim = 16;
  c.rank = 2;
  c.seed = 11;
  return c;
}

const HeadKind kAllHeads[] = {HeadKind::kAvgPool, HeadKind::kAttention, HeadKind::kRankP,
                              HeadKind::kPerClass, HeadKind::kPoseReg,  HeadKind::kCbp};

std::vector<NamedTensor> one_param(double v) { return {{"w", Matrix(1, 1, v)}}; }

}  // namespace

TEST(Sgd, VanillaStep) {
  auto p = one_param(2.0);
  SgdState st;
  const std::vector<Matrix> g{Matrix(1, 1, 0.5)};
  sgd_step(p, g, st, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(p[0].value(0, 0), 2.0 - 0.1 * 0.5);
}

TEST(Sgd, ZeroGradientLeavesParams) {
  auto p = one_param(2.0);
  SgdState st;
  const std::vector<Matrix> g{Matrix(1, 1, 0.0)};
  sgd_step(p, g, st, 0.1, 0.9, 0.0);
  EXPECT_EQ(p[0].value(0, 0), 2.0);
}

TEST(Sgd, TwoMomentumSteps) {
  auto p = one_param(0.0);
  SgdState st;
  const double lr = 0.1, g = 0.7;
  const std::vector<Matrix> grads{Matrix(1, 1, g)};
  sgd_step(p, grads, st, lr, 0.9, 0.0);
  sgd_step(p, grads, st, lr, 0.9, 0.0);
  EXPECT_NEAR(p[0].value(0, 0), -lr * g * (1.0 + 1.9), 1e-15);
}

TEST(Sgd, WeightDecayAndErrors) {
  auto p = one_param(3.0);
  SgdState st;
  sgd_step(p, std::vector<Matrix>{Matrix(1, 1, 0.0)}, st, 0.5, 0.0, 0.1);
  EXPECT_DOUBLE_EQ(p[0].value(0, 0), 3.0 - 0.5 * 0.1 * 3.0);
  EXPECT_THROW(sgd_step(p, std::vector<Matrix>{Matrix(1, 2)}, st, 0.1, 0.0, 0.0), ShapeError);
  Matrix bad(1, 1);
  bad[0] = std::numeric_limits<double>::infinity();  // bypasses the finite-on-construction check
  EXPECT_THROW(sgd_step(p, std::vector<Matrix>{bad}, st, 0.1, 0.0, 0.0), NumericError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lr = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW((void)parse_head_kind("bilinear"), ConfigError);
  for (HeadKind k : kAllHeads) EXPECT_EQ(parse_head_kind(to_string(k)), k);
  EXPECT_EQ(parse_loss_kind("sigmoid"), LossKind::kSigmoid);
}

TEST(InitHead, ParameterInventory) {
  TrainConfig c;
  const HeadParams att = init_head(c, 32, 8);
  ASSERT_EQ(att.tensors.size(), 2u);
  EXPECT_EQ(att.tensors[0].name, "A");
  EXPECT_EQ(att.tensors[0].value.shape(), Shape({32, 8}));
  EXPECT_EQ(att.tensors[1].name, "b");
  EXPECT_EQ(att.tensors[1].value.shape(), Shape({32, 1}));

  c.head = HeadKind::kPoseReg;
  c.hidden = 10;
  c.bias = true;
  const HeadParams pose = init_head(c, 32, 8);
  ASSERT_EQ(pose.tensors.size(), 6u);
  EXPECT_EQ(pose.get("W2").shape(), Shape({10, 17}));
  EXPECT_EQ(pose.get("bias").shape(), Shape({8, 1}));
  EXPECT_THROW((void)pose.get("nope"), ValidationError);
  EXPECT_EQ(init_head(c, 32, 8).values(), pose.values());
}

TEST(HeadLogits, AreScoresOverLocationsAndMapsSumToScore) {
  const PlantedTask t = small_task();
  for (HeadKind k : {HeadKind::kAvgPool, HeadKind::kAttention, HeadKind::kRankP, HeadKind::kPerClass,
                     HeadKind::kPoseReg}) {
    const HeadParams p = init_head(small_config(k), 8, 3);
    const Matrix& x = t.train.examples[0].features;
    const Matrix logits = head_logits(p, x);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto maps = class_maps(p, x, c);
      ASSERT_TRUE(maps.has_value());
      EXPECT_LE(oracle::rel(sum(maps->combined) / 16.0, logits(c, 0)), 1e-12) << to_string(k);
    }
  }
  EXPECT_FALSE(class_maps(init_head(small_config(HeadKind::kCbp), 8, 3), t.train.examples[0].features, 0));
}

TEST(HeadLogits, AvgPoolMatchesDirectComputation) {
  const PlantedTask t = small_task();
  const HeadParams p = init_head(small_config(HeadKind::kAvgPool), 8, 3);
  const Matrix& x = t.train.examples[0].features;
  const Matrix& w = p.get("W");
  const Matrix logits = head_logits(p, x);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 8; ++j) s += x(i, j) * w(j, c);
    EXPECT_LE(oracle::rel(logits(c, 0), s / 16.0), 1e-13);
  }
  EXPECT_THROW((void)head_logits(p, Matrix(16, 7)), ShapeError);
}

TEST(ExampleLoss, GradientsForEveryHead) {
  const PlantedTask single = small_task(false);
  const PlantedTask multi = small_task(true);
  for (HeadKind k : kAllHeads) {
    for (LossKind loss : {LossKind::kSoftmax, LossKind::kSigmoid}) {
      TrainConfig c = small_config(k);
      c.loss = loss;
      c.bias = true;
      const HeadParams layout = init_head(c, 8, 3);
      const std::optional<SketchParams> sk =
          k == HeadKind::kCbp ? std::optional<SketchParams>(head_sketch(layout)) : std::nullopt;
      const LossContext ctx{loss, 0.5, sk ? &*sk : nullptr, {}};
      const auto& ex = (loss == LossKind::kSoftmax ? single : multi).train.examples[3];
      std::vector<Matrix> params = layout.values();
      SplitMix64 rng(5);
      for (auto& m : params)
        for (double& v : m.data()) v = 0.7 * rng.normal();
      EXPECT_LE(ag::finite_diff_check(example_loss_graph(layout, ex, ctx), params), 1e-6)
          << to_string(k) << " " << to_string(loss);
    }
  }
}

TEST(Train, ZeroLearningRateKeepsLossConstant) {
  const PlantedTask t = small_task();
  TrainConfig c = small_config(HeadKind::kAttention);
  c.lr = 0.0;
  const TrainReport r = train(c, t.train, t.val);
  ASSERT_EQ(r.epochs.size(), 3u);
  EXPECT_EQ(r.epochs[1].train_loss, r.epochs[0].train_loss);
  EXPECT_EQ(r.epochs[2].train_loss, r.epochs[0].train_loss);
  EXPECT_EQ(r.params.values(), init_head(c, 8, 3).values());
}

TEST(Train, BitwiseReproducibleAcrossRunsAndThreads) {
  const PlantedTask t = small_task();
  for (HeadKind k : kAllHeads) {
    TrainConfig c = small_config(k);
    const TrainReport a = train(c, t.train, t.val);
    const TrainReport b = train(c, t.train, t.val);
    c.threads = 3;
    const TrainReport m = train(c, t.train, t.val);
    EXPECT_EQ(report_tsv(a), report_tsv(b)) << to_string(k);
    EXPECT_EQ(report_tsv(a), report_tsv(m)) << to_string(k);
    EXPECT_EQ(a.params.values(), b.params.values());
    EXPECT_EQ(a.params.values(), m.params.values());
  }
}

TEST(Train, DivergenceAbortsWithPartialReport) {
  const PlantedTask t = small_task();
  TrainConfig c = small_config(HeadKind::kAttention);
  c.lr = 1e200;
  c.epochs = 5;
  c.threads = 2;
  const TrainReport r = train(c, t.train, t.val);
  EXPECT_TRUE(r.aborted);
  EXPECT_FALSE(r.abort_reason.empty());
  EXPECT_LT(r.epochs.size(), 5u);
  EXPECT_NE(report_summary(r, c).find("aborted = true"), std::string::npos);
}

TEST(Train, PoseHeadNeedsTargets) {
  PlantedTaskConfig pc;
  pc.n1 = pc.n2 = 3;
  pc.f = 6;
  pc.classes = 2;
  pc.train_samples = 5;
  pc.val_samples = 2;
  const PlantedTask t = gen_planted(pc);
  EXPECT_THROW((void)train(small_config(HeadKind::kPoseReg), t.train, t.val), ValidationError);
}

TEST(Evaluate, UntrainedAccuracyIsNearChance) {
  PlantedTaskConfig pc;
  pc.train_samples = 1;
  pc.val_samples = 500;
  const PlantedTask t = gen_planted(pc);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainConfig c;
    c.seed = seed;
    const EvalResult r = evaluate(init_head(c, pc.f, pc.classes), t.val);
    const double p = 1.0 / 8.0;
    EXPECT_LE(std::abs(r.accuracy - p), 3.0 * std::sqrt(p * (1 - p) / 500.0)) << "seed " << seed << " acc " << r.accuracy;
  }
}

TEST(Evaluate, ShapeMismatchAndLocalization) {
  const PlantedTask t = small_task();
  EXPECT_THROW((void)evaluate(init_head(TrainConfig{}, 9, 3), t.val), ShapeError);
  const EvalResult cbp = evaluate(init_head(small_config(HeadKind::kCbp), 8, 3), t.val);
  EXPECT_TRUE(std::isnan(cbp.localization_rate));
  const EvalResult att = evaluate(init_head(small_config(HeadKind::kAttention), 8, 3), t.val);
  EXPECT_GE(att.localization_rate, 0.0);
  EXPECT_LE(att.localization_rate, 1.0);
  EXPECT_EQ(att.logits.shape(), Shape({20, 3}));
}

TEST(RankByImprovement, OrdersByCorrectClassGain) {
  const Matrix base(3, 2, 0.0);
  const Matrix scores = Matrix::from_rows({{1, 0}, {3, 0}, {0, 2}});
  const std::vector<std::size_t> labels{0, 0, 0};
  EXPECT_EQ(rank_by_improvement(scores, base, labels), (std::vector<std::size_t>{1, 0, 2}));
  const std::vector<std::size_t> ties{1, 1, 1};
  EXPECT_EQ(rank_by_improvement(base, base, ties), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SmoothedTrend, Window) {
  auto recs = [](std::vector<double> losses) {
    std::vector<EpochRecord> out;
    for (std::size_t i = 0; i < losses.size(); ++i) out.push_back({i + 1, losses[i], 0.0, 0.0});
    return out;
  };
  EXPECT_TRUE(smoothed_non_increasing(recs({5, 4, 4.5, 3, 2, 2.5, 1, 0.5})));
  EXPECT_FALSE(smoothed_non_increasing(recs({5, 4, 3, 2, 1, 9})));
  EXPECT_TRUE(smoothed_non_increasing(recs({1, 2, 3})));
}

TEST(Reports, Format) {
  const PlantedTask t = small_task();
  const TrainConfig c = small_config(HeadKind::kAvgPool);
  const TrainReport r = train(c, t.train, t.val);
  const std::string tsv = report_tsv(r);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 3);
  EXPECT_EQ(tsv.rfind("1\t", 0), 0u);
  const std::string summary = report_summary(r, c);
  EXPECT_NE(summary.find("head = avg_pool"), std::string::npos);
  EXPECT_NE(summary.find("epochs_completed = 3"), std::string::npos);
  EXPECT_NEAR(dataset_loss(r.params, t.train, c), r.epochs.back().train_loss, 0.5);
}
