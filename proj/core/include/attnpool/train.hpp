#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnpool/autograd.hpp"
#include "attnpool/sketch.hpp"
#include "attnpool/synth.hpp"
#include "attnpool/tensor.hpp"

namespace attnpool {

enum class HeadKind { kAvgPool, kAttention, kRankP, kPerClass, kPoseReg, kCbp };
enum class LossKind { kSoftmax, kSigmoid };

std::string_view to_string(HeadKind kind);
std::string_view to_string(LossKind kind);
HeadKind parse_head_kind(std::string_view s);  // ConfigError on unknown names
LossKind parse_loss_kind(std::string_view s);

// Defaults are this project's own choices; nothing here is tuned per dataset.
struct TrainConfig {
  HeadKind head = HeadKind::kAttention;
  std::size_t rank = 1;  // rank_p only
  double lr = 0.003;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 7;
  double lambda_pose = 0.1;
  LossKind loss = LossKind::kSoftmax;
  std::size_t hidden = 128;      // pose_reg MLP width
  std::size_t sketch_dim = 64;   // cbp output dimension
  CbpOptions cbp;
  bool bias = false;             // per-class logit bias
  std::size_t threads = 1;

  void validate() const;  // ConfigError
};

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Trainable tensors of one head, in a fixed per-kind order:
//   avg_pool  W(f x K)
//   attention A(f x K) b(f)
//   rank_p    A0 b0 A1 b1 ...
//   per_class A(f x K) B(f x K)
//   pose_reg  W1(f x hidden) bias1(hidden) W2(hidden x 17) bias2(17) A(f x K)
//   cbp       W(d x K)
// followed by bias(K) when the bias flag is on.
struct HeadParams {
  HeadKind kind = HeadKind::kAttention;
  std::size_t features = 0;
  std::size_t classes = 0;
  std::size_t rank = 1;
  std::size_t hidden = 0;
  std::size_t sketch_dim = 0;
  std::uint64_t seed = 0;
  bool bias = false;
  std::vector<NamedTensor> tensors;

  const Matrix& get(std::string_view name) const;
  Matrix& get(std::string_view name);
  std::vector<Matrix> values() const;
};

HeadParams init_head(const TrainConfig& config, std::size_t features, std::size_t classes);

// Logits are the head's raw scores divided by the number of locations
// (spatial average rather than sum), plus the optional bias.
Matrix head_logits(const HeadParams& params, const Matrix& x, const SketchParams* sketch = nullptr,
                   const CbpOptions& cbp = {});

// Per-class maps used for visualization and localization. Absent for cbp.
struct ClassMaps {
  Matrix bottom_up;  // n x 1
  Matrix top_down;   // n x 1
  Matrix combined;   // n x 1; sums to the class score
};
std::optional<ClassMaps> class_maps(const HeadParams& params, const Matrix& x, std::size_t k);

// The sketch tables a cbp head uses (derived from the head's seed).
SketchParams head_sketch(const HeadParams& params);

// Differentiable per-example loss with the head's tensors as graph inputs
// (in HeadParams::tensors order). For cbp, `cbp_feature` may carry the
// precomputed pooled sketch; otherwise the sketch is taken inside the graph.
struct LossContext {
  LossKind loss = LossKind::kSoftmax;
  double lambda_pose = 0.0;
  const SketchParams* sketch = nullptr;
  CbpOptions cbp;
};
ag::Var example_loss(ag::Tape& tape, const HeadParams& layout, std::span<const ag::Var> params,
                     const LabeledExample& example, const LossContext& ctx, const Matrix* cbp_feature = nullptr);
ag::ScalarGraph example_loss_graph(const HeadParams& layout, const LabeledExample& example, const LossContext& ctx);

struct SgdState {
  std::vector<Matrix> velocity;
};

// v <- momentum v + g + wd p;  p <- p - lr v.  NumericError on a non-finite gradient.
void sgd_step(std::vector<NamedTensor>& params, std::span<const Matrix> grads, SgdState& state, double lr,
              double momentum, double weight_decay);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;         // accuracy (softmax) or mAP (sigmoid)
  double localization_rate = 0.0;  // NaN for heads without maps
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  HeadParams params;
  double wall_seconds = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

// Deterministic given config.seed: parameters come from SplitMix64(seed),
// epoch e visits examples in the order of a Fisher-Yates shuffle of
// 0..m-1 with SplitMix64(seed + e), and batch gradients are summed in
// ascending example order regardless of the thread count.
TrainReport train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set);

// Line-oriented report: one `epoch\ttrain_loss\tval_metric\tlocalization_rate`
// row per epoch (no header). Wall-clock is left out so identical runs give
// identical files.
std::string report_tsv(const TrainReport& report);
// key = value summary of the final epoch.
std::string report_summary(const TrainReport& report, const TrainConfig& config);

// Mean per-example loss over a dataset under the given head (no update).
double dataset_loss(const HeadParams& params, const Dataset& data, const TrainConfig& config);

struct EvalResult {
  double accuracy = 0.0;
  double map = 0.0;                // NaN when no class has a positive
  double localization_rate = 0.0;  // NaN for heads without maps
  Matrix logits;                   // m x K
};
EvalResult evaluate(const HeadParams& params, const Dataset& data, const CbpOptions& cbp = {});

// Example indices sorted by the gain in correct-class softmax probability of
// `scores` over `baseline` (largest first; ties by index).
std::vector<std::size_t> rank_by_improvement(const Matrix& scores, const Matrix& baseline,
                                             std::span<const std::size_t> labels);

// Trailing moving average over `window` epochs; true when it never rises.
bool smoothed_non_increasing(std::span<const EpochRecord> epochs, std::size_t window = 5);

}  // namespace attnpool
