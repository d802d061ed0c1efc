#include "attnpool/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "attnpool/attention.hpp"
#include "attnpool/config.hpp"
#include "attnpool/errors.hpp"
#include "attnpool/metrics.hpp"
#include "attnpool/pose_head.hpp"
#include "attnpool/splitmix.hpp"

namespace attnpool {

std::string_view to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::kAvgPool: return "avg_pool";
    case HeadKind::kAttention: return "attention";
    case HeadKind::kRankP: return "rank_p";
    case HeadKind::kPerClass: return "per_class";
    case HeadKind::kPoseReg: return "pose_reg";
    case HeadKind::kCbp: return "cbp";
  }
  return "unknown";
}

std::string_view to_string(LossKind kind) { return kind == LossKind::kSoftmax ? "softmax" : "sigmoid"; }

HeadKind parse_head_kind(std::string_view s) {
  for (auto k : {HeadKind::kAvgPool, HeadKind::kAttention, HeadKind::kRankP, HeadKind::kPerClass, HeadKind::kPoseReg,
                 HeadKind::kCbp}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown head kind '" + std::string(s) + "'");
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "softmax") return LossKind::kSoftmax;
  if (s == "sigmoid") return LossKind::kSigmoid;
  throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite value >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (rank == 0) throw ConfigError("rank must be >= 1");
  if (hidden == 0) throw ConfigError("hidden width must be >= 1");
  if (sketch_dim == 0) throw ConfigError("sketch dimension must be >= 1");
  if (!(lambda_pose >= 0.0)) throw ConfigError("lambda_pose must be >= 0");
  if (threads == 0) throw ConfigError("threads must be >= 1");
}

// ---------------------------------------------------------------------------
// Parameters

const Matrix& HeadParams::get(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw ValidationError("head has no tensor named '" + std::string(name) + "'");
}

Matrix& HeadParams::get(std::string_view name) {
  return const_cast<Matrix&>(static_cast<const HeadParams&>(*this).get(name));
}

std::vector<Matrix> HeadParams::values() const {
  std::vector<Matrix> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) out.push_back(t.value);
  return out;
}

HeadParams init_head(const TrainConfig& config, std::size_t f, std::size_t k) {
  config.validate();
  HeadParams p;
  p.kind = config.head;
  p.features = f;
  p.classes = k;
  p.seed = config.seed;
  p.bias = config.bias;
  SplitMix64 rng(config.seed);
  auto& t = p.tensors;
  switch (config.head) {
    case HeadKind::kAvgPool: t.push_back({"W", init_uniform(f, k, f, rng)}); break;
    case HeadKind::kAttention:
      t.push_back({"A", init_uniform(f, k, f, rng)});
      t.push_back({"b", init_uniform(f, 1, f, rng)});
      break;
    case HeadKind::kRankP:
      p.rank = config.rank;
      for (std::size_t r = 0; r < config.rank; ++r) {
        t.push_back({"A" + std::to_string(r), init_uniform(f, k, f, rng)});
        t.push_back({"b" + std::to_string(r), init_uniform(f, 1, f, rng)});
      }
      break;
    case HeadKind::kPerClass:
      t.push_back({"A", init_uniform(f, k, f, rng)});
      t.push_back({"B", init_uniform(f, k, f, rng)});
      break;
    case HeadKind::kPoseReg: {
      p.hidden = config.hidden;
      auto pose = init_pose_head(f, config.hidden, rng, config.lambda_pose);
      t.push_back({"W1", std::move(pose.w1)});
      t.push_back({"bias1", std::move(pose.bias1)});
      t.push_back({"W2", std::move(pose.w2)});
      t.push_back({"bias2", std::move(pose.bias2)});
      t.push_back({"A", init_uniform(f, k, f, rng)});
      break;
    }
    case HeadKind::kCbp:
      p.sketch_dim = config.sketch_dim;
      t.push_back({"W", init_uniform(config.sketch_dim, k, config.sketch_dim, rng)});
      break;
  }
  if (config.bias) t.push_back({"bias", Matrix(k, 1)});
  return p;
}

SketchParams head_sketch(const HeadParams& params) {
  return SketchParams::make(params.features, params.sketch_dim, split_seed(params.seed, 0x5CE7C4));
}

namespace {

PoseHeadParams pose_params(const HeadParams& p) {
  PoseHeadParams out;
  out.w1 = p.get("W1");
  out.bias1 = p.get("bias1");
  out.w2 = p.get("W2");
  out.bias2 = p.get("bias2");
  return out;
}

AttentionParams attention_params(const HeadParams& p) {
  if (p.kind == HeadKind::kAttention) return AttentionParams::rank1(p.get("A"), p.get("b"));
  std::vector<Matrix> td, bu;
  for (std::size_t r = 0; r < p.rank; ++r) {
    td.push_back(p.get("A" + std::to_string(r)));
    bu.push_back(p.get("b" + std::to_string(r)));
  }
  return AttentionParams(std::move(td), std::move(bu));
}

Matrix raw_scores(const HeadParams& params, const Matrix& x, const SketchParams* sketch, const CbpOptions& cbp) {
  switch (params.kind) {
    case HeadKind::kAvgPool: return score_top_down_only(x, params.get("W"));
    case HeadKind::kAttention:
    case HeadKind::kRankP: return score_rank_p(x, attention_params(params));
    case HeadKind::kPerClass: return score_per_class(x, {params.get("A"), params.get("B")});
    case HeadKind::kPoseReg: return score_pose_regularized(x, pose_params(params), params.get("A")).scores;
    case HeadKind::kCbp: {
      const SketchParams local = sketch ? SketchParams{} : head_sketch(params);
      const SketchParams& sk = sketch ? *sketch : local;
      return matmul_tn(params.get("W"), cbp_pool(x, sk, cbp));
    }
  }
  throw ValidationError("unknown head kind");
}

}  // namespace

Matrix head_logits(const HeadParams& params, const Matrix& x, const SketchParams* sketch, const CbpOptions& cbp) {
  if (x.cols() != params.features) {
    throw ShapeError("features " + x.shape().to_string() + " do not match head width " +
                     std::to_string(params.features));
  }
  Matrix s = scale(raw_scores(params, x, sketch, cbp), 1.0 / static_cast<double>(x.rows()));
  if (params.bias) s = add(s, params.get("bias"));
  return s;
}

std::optional<ClassMaps> class_maps(const HeadParams& params, const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  ClassMaps m;
  switch (params.kind) {
    case HeadKind::kAvgPool:
      m.bottom_up = Matrix::ones(n, 1);
      m.top_down = matmul(x, column_of(params.get("W"), k));
      m.combined = m.top_down;
      return m;
    case HeadKind::kAttention:
    case HeadKind::kRankP: {
      const auto ap = attention_params(params);
      m.combined = Matrix(n, 1);
      for (std::size_t p = 0; p < ap.rank(); ++p) {
        const Matrix h = matmul(x, ap.bottom_up(p));
        const Matrix t = matmul(x, column_of(ap.top_down(p), k));
        if (p == 0) {
          m.bottom_up = h;
          m.top_down = t;
        }
        m.combined = add(m.combined, elementwise_mul(t, h));
      }
      return m;
    }
    case HeadKind::kPerClass:
      m.bottom_up = matmul(x, column_of(params.get("B"), k));
      m.top_down = matmul(x, column_of(params.get("A"), k));
      m.combined = elementwise_mul(m.top_down, m.bottom_up);
      return m;
    case HeadKind::kPoseReg: {
      const auto pred = pose_head_forward(x, pose_params(params));
      m.bottom_up = column_of(pred, kAttentionChannel);
      m.top_down = matmul(x, column_of(params.get("A"), k));
      m.combined = elementwise_mul(m.top_down, m.bottom_up);
      return m;
    }
    case HeadKind::kCbp: return std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Loss graphs

ag::Var example_loss(ag::Tape& tape, const HeadParams& layout, std::span<const ag::Var> params,
                     const LabeledExample& example, const LossContext& ctx, const Matrix* cbp_feature) {
  if (params.size() != layout.tensors.size()) throw ValidationError("example_loss: parameter count mismatch");
  auto param = [&](std::string_view name) -> ag::Var {
    for (std::size_t i = 0; i < layout.tensors.size(); ++i) {
      if (layout.tensors[i].name == name) return params[i];
    }
    throw ValidationError("head has no tensor named '" + std::string(name) + "'");
  };
  const ag::Var x = ag::leaf(tape, example.features);
  const std::size_t n = example.features.rows();

  ag::Var scores;
  std::optional<ag::Var> pred;
  switch (layout.kind) {
    case HeadKind::kAvgPool: scores = graph::avg_pool_scores(x, param("W")); break;
    case HeadKind::kAttention: scores = graph::attention_scores(x, param("A"), param("b")); break;
    case HeadKind::kRankP: {
      std::vector<ag::Var> a, b;
      for (std::size_t r = 0; r < layout.rank; ++r) {
        a.push_back(param("A" + std::to_string(r)));
        b.push_back(param("b" + std::to_string(r)));
      }
      scores = graph::rank_p_scores(x, a, b);
      break;
    }
    case HeadKind::kPerClass: scores = graph::per_class_scores(x, param("A"), param("B")); break;
    case HeadKind::kPoseReg:
      pred = graph::pose_head_forward(x, param("W1"), param("bias1"), param("W2"), param("bias2"));
      scores = graph::pose_scores(x, *pred, param("A"));
      break;
    case HeadKind::kCbp:
      if (cbp_feature) {
        scores = ag::matmul(ag::transpose(param("W")), ag::leaf(tape, *cbp_feature));
      } else {
        if (!ctx.sketch) throw ValidationError("cbp loss needs sketch parameters");
        scores = graph::cbp_scores(x, param("W"), *ctx.sketch);
      }
      break;
  }
  ag::Var logits = ag::scale(scores, 1.0 / static_cast<double>(n));
  if (layout.bias) logits = ag::add(logits, param("bias"));

  ag::Var loss;
  if (ctx.loss == LossKind::kSoftmax) {
    loss = ag::softmax_cross_entropy(logits, example.label);
  } else {
    Matrix targets(layout.classes, 1);
    for (auto c : example.labels) targets[c] = 1.0;
    loss = ag::sigmoid_cross_entropy(logits, targets);
  }
  if (layout.kind == HeadKind::kPoseReg && ctx.lambda_pose > 0.0) {
    if (!example.pose) throw ValidationError("pose_reg training needs pose targets (run gen_pose_targets)");
    loss = ag::add(loss, ag::scale(graph::pose_loss(*pred, *example.pose), ctx.lambda_pose));
  }
  return loss;
}

ag::ScalarGraph example_loss_graph(const HeadParams& layout, const LabeledExample& example, const LossContext& ctx) {
  return [layout, &example, ctx](ag::Tape& tape, std::span<const ag::Var> params) {
    return example_loss(tape, layout, params, example, ctx);
  };
}

// ---------------------------------------------------------------------------
// Optimizer

void sgd_step(std::vector<NamedTensor>& params, std::span<const Matrix> grads, SgdState& state, double lr,
              double momentum, double weight_decay) {
  if (grads.size() != params.size()) throw ShapeError("sgd_step: gradient count differs from parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size()) {
      throw ShapeError("sgd_step: gradient for '" + params[i].name + "' has shape " + grads[i].shape().to_string());
    }
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        throw NumericError("non-finite gradient in '" + params[i].name + "' at index " + std::to_string(j));
      }
    }
  }
  if (state.velocity.size() != params.size()) {
    state.velocity.clear();
    for (const auto& p : params) state.velocity.emplace_back(p.value.shape());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = state.velocity[i];
    auto& p = params[i].value;
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum * v[j] + grads[i][j] + weight_decay * p[j];
      p[j] -= lr * v[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct ExampleGrad {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

ExampleGrad example_grad(const HeadParams& params, const LabeledExample& ex, const LossContext& ctx,
                         const Matrix* cbp_feature) {
  ag::Tape tape;
  std::vector<ag::Var> vars;
  vars.reserve(params.tensors.size());
  for (const auto& t : params.tensors) vars.push_back(ag::leaf(tape, t.value));
  const ag::Var loss = example_loss(tape, params, vars, ex, ctx, cbp_feature);
  ag::backward(loss);
  ExampleGrad out;
  out.loss = loss.value()[0];
  for (const auto& v : vars) out.grads.push_back(v.grad());
  return out;
}

// Exceptions thrown by workers are rethrown on the calling thread; the one
// from the lowest index wins so the failure is reproducible.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < count; i += threads) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double val_metric(const EvalResult& r, LossKind loss) { return loss == LossKind::kSoftmax ? r.accuracy : r.map; }

}  // namespace

TrainReport train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set) {
  config.validate();
  if (train_set.size() == 0) throw ValidationError("training set is empty");
  if (config.head == HeadKind::kPoseReg && config.lambda_pose > 0.0 && !train_set.examples.front().pose) {
    throw ValidationError("pose_reg training needs pose targets");
  }
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  report.params = init_head(config, train_set.f, train_set.classes);
  HeadParams& params = report.params;

  std::optional<SketchParams> sketch;
  std::vector<Matrix> cbp_features;
  if (config.head == HeadKind::kCbp) {
    sketch = head_sketch(params);
    cbp_features.reserve(train_set.size());
    for (const auto& ex : train_set.examples) cbp_features.push_back(cbp_pool(ex.features, *sketch, config.cbp));
  }
  const LossContext ctx{config.loss, config.lambda_pose, sketch ? &*sketch : nullptr, config.cbp};

  const std::size_t m = train_set.size();
  std::vector<std::size_t> order(m);
  std::vector<double> example_loss_values(m);
  SgdState state;

  for (std::size_t epoch = 1; epoch <= config.epochs && !report.aborted; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(config.seed + epoch);
    shuffle(std::span<std::size_t>(order), rng);

    try {
      for (std::size_t begin = 0; begin < m; begin += config.batch_size) {
        const std::size_t end = std::min(m, begin + config.batch_size);
        std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(batch.begin(), batch.end());
        std::vector<ExampleGrad> results(batch.size());
        parallel_for(batch.size(), config.threads, [&](std::size_t i) {
          const std::size_t idx = batch[i];
          results[i] = example_grad(params, train_set.examples[idx], ctx,
                                    cbp_features.empty() ? nullptr : &cbp_features[idx]);
        });
        std::vector<Matrix> grads;
        for (const auto& t : params.tensors) grads.emplace_back(t.value.shape());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          example_loss_values[batch[i]] = results[i].loss;
          for (std::size_t g = 0; g < grads.size(); ++g) {
            for (std::size_t j = 0; j < grads[g].size(); ++j) grads[g][j] += results[i].grads[g][j];
          }
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (auto& g : grads)
          for (auto& v : g.data()) v *= inv;
        sgd_step(params.tensors, grads, state, config.lr, config.momentum, config.weight_decay);
      }
    } catch (const NumericError& e) {
      report.aborted = true;
      report.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = std::accumulate(example_loss_values.begin(), example_loss_values.end(), 0.0) /
                     static_cast<double>(m);
    if (!std::isfinite(rec.train_loss)) {
      report.aborted = true;
      report.abort_reason = "epoch " + std::to_string(epoch) + ": training loss is not finite";
      break;
    }
    if (val_set.size() > 0) {
      const auto ev = evaluate(params, val_set, config.cbp);
      rec.val_metric = val_metric(ev, config.loss);
      rec.localization_rate = ev.localization_rate;
    } else {
      rec.val_metric = std::numeric_limits<double>::quiet_NaN();
      rec.localization_rate = std::numeric_limits<double>::quiet_NaN();
    }
    report.epochs.push_back(rec);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string report_tsv(const TrainReport& report) {
  std::string out;
  for (const auto& e : report.epochs) {
    out += std::to_string(e.epoch) + "\t" + format_number(e.train_loss) + "\t" + format_number(e.val_metric) + "\t" +
           format_number(e.localization_rate) + "\n";
  }
  return out;
}

std::string report_summary(const TrainReport& report, const TrainConfig& config) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const EpochRecord last = report.epochs.empty() ? EpochRecord{0, nan, nan, nan} : report.epochs.back();
  std::string out;
  out += "head = " + std::string(to_string(config.head)) + "\n";
  out += "loss = " + std::string(to_string(config.loss)) + "\n";
  out += "val_metric_kind = " + std::string(config.loss == LossKind::kSoftmax ? "accuracy" : "map") + "\n";
  out += "epochs_completed = " + std::to_string(report.epochs.size()) + "\n";
  out += "final_train_loss = " + format_number(last.train_loss) + "\n";
  out += "final_val_metric = " + format_number(last.val_metric) + "\n";
  out += "final_localization_rate = " + format_number(last.localization_rate) + "\n";
  out += "smoothed_loss_non_increasing = " + std::string(smoothed_non_increasing(report.epochs) ? "true" : "false") + "\n";
  out += "aborted = " + std::string(report.aborted ? "true" : "false") + "\n";
  if (report.aborted) out += "abort_reason = " + report.abort_reason + "\n";
  return out;
}

double dataset_loss(const HeadParams& params, const Dataset& data, const TrainConfig& config) {
  if (data.size() == 0) throw ValidationError("dataset_loss: empty dataset");
  std::optional<SketchParams> sketch;
  if (params.kind == HeadKind::kCbp) sketch = head_sketch(params);
  const LossContext ctx{config.loss, config.lambda_pose, sketch ? &*sketch : nullptr, config.cbp};
  double total = 0.0;
  for (const auto& ex : data.examples) {
    ag::Tape tape;
    std::vector<ag::Var> vars;
    for (const auto& t : params.tensors) vars.push_back(ag::leaf(tape, t.value));
    std::optional<Matrix> feature;
    if (sketch) feature = cbp_pool(ex.features, *sketch, config.cbp);
    total += example_loss(tape, params, vars, ex, ctx, feature ? &*feature : nullptr).value()[0];
  }
  return total / static_cast<double>(data.size());
}

EvalResult evaluate(const HeadParams& params, const Dataset& data, const CbpOptions& cbp) {
  if (data.size() == 0) throw ValidationError("evaluate: empty dataset");
  if (data.f != params.features || data.classes != params.classes) {
    throw ShapeError("evaluate: head expects f=" + std::to_string(params.features) + ", K=" +
                     std::to_string(params.classes) + " but dataset has f=" + std::to_string(data.f) +
                     ", K=" + std::to_string(data.classes));
  }
  std::optional<SketchParams> sketch;
  if (params.kind == HeadKind::kCbp) sketch = head_sketch(params);

  EvalResult out;
  out.logits = Matrix(data.size(), params.classes);
  std::size_t localized = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data.examples[i];
    const Matrix s = head_logits(params, ex.features, sketch ? &*sketch : nullptr, cbp);
    for (std::size_t k = 0; k < params.classes; ++k) out.logits(i, k) = s[k];
    if (const auto maps = class_maps(params, ex.features, ex.label)) {
      const std::size_t peak = argmax(maps->combined.data());
      if (std::find(ex.planted_locs.begin(), ex.planted_locs.end(), peak) != ex.planted_locs.end()) ++localized;
    }
  }
  const auto labels = data.labels();
  out.accuracy = metric_accuracy(out.logits, labels);
  try {
    out.map = metric_map(out.logits, data.label_matrix()).map;
  } catch (const ValidationError&) {
    out.map = std::numeric_limits<double>::quiet_NaN();
  }
  out.localization_rate = params.kind == HeadKind::kCbp
                              ? std::numeric_limits<double>::quiet_NaN()
                              : static_cast<double>(localized) / static_cast<double>(data.size());
  return out;
}

std::vector<std::size_t> rank_by_improvement(const Matrix& scores, const Matrix& baseline,
                                             std::span<const std::size_t> labels) {
  if (scores.rows() != baseline.rows() || scores.rows() != labels.size()) {
    throw ShapeError("rank_by_improvement: row counts differ");
  }
  auto prob = [](std::span<const double> row, std::size_t k) {
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    return std::exp(row[k] - mx) / z;
  };
  std::vector<double> gain(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) gain[i] = prob(scores.row(i), labels[i]) - prob(baseline.row(i), labels[i]);
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return gain[a] > gain[b]; });
  return idx;
}

bool smoothed_non_increasing(std::span<const EpochRecord> epochs, std::size_t window) {
  if (epochs.size() < window + 1) return true;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t e = window - 1; e < epochs.size(); ++e) {
    double acc = 0.0;
    for (std::size_t j = e + 1 - window; j <= e; ++j) acc += epochs[j].train_loss;
    const double smoothed = acc / static_cast<double>(window);
    if (smoothed > prev) return false;
    prev = smoothed;
  }
  return true;
}

}  // namespace attnpool
