#include "attnpool/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <unistd.h>

#include "attnpool/atnp.hpp"
#include "attnpool/attention.hpp"
#include "attnpool/bench.hpp"
#include "attnpool/checkpoint.hpp"
#include "attnpool/config.hpp"
#include "attnpool/dataset_io.hpp"
#include "attnpool/errors.hpp"
#include "attnpool/heatmap.hpp"
#include "attnpool/instrument.hpp"
#include "attnpool/pose_head.hpp"
#include "attnpool/sketch.hpp"
#include "attnpool/splitmix.hpp"
#include "attnpool/train.hpp"

namespace attnpool {

namespace {

namespace fs = std::filesystem;

// Outcome of one check body: pass/fail plus a human-readable measurement.
struct Outcome {
  bool passed;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

double rel_err(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

Matrix normal_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

std::size_t dim_1_16(SplitMix64& rng) { return 1 + static_cast<std::size_t>(rng.below(16)); }

// Rank-1 instances shared by the first two equivalence checks.
struct Instance {
  Matrix x, a, b, a_multi;
};

std::vector<Instance> rank1_instances(std::size_t count, std::uint64_t seed) {
  std::vector<Instance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SplitMix64 rng(split_seed(seed, i));
    const std::size_t n = dim_1_16(rng), f = dim_1_16(rng), k = 1 + rng.below(8);
    Instance inst{normal_matrix(n, f, rng), normal_matrix(f, 1, rng), normal_matrix(f, 1, rng),
                  normal_matrix(f, k, rng)};
    out.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------
// equivalence

Outcome check_rank1_equivalence(const std::vector<Instance>& instances) {
  double worst = 0.0;
  for (const auto& in : instances) {
    const double fast = score_rank1(in.x, in.a, in.b).score;
    const double oracle = score_second_order(in.x, outer(in.a, in.b));
    worst = std::max(worst, std::abs(fast - oracle) / (1.0 + std::abs(oracle)));
  }
  return {worst <= 1e-9, std::to_string(instances.size()) + " instances, worst scaled error " + fmt(worst)};
}

Outcome check_symmetric_and_combined(const std::vector<Instance>& instances) {
  double sym = 0.0, comb = 0.0;
  for (const auto& in : instances) {
    const double ab = score_rank1(in.x, in.a, in.b).score;
    const double ba = score_rank1(in.x, in.b, in.a).score;
    const double two_maps = frobenius_dot(matmul(in.x, in.a), matmul(in.x, in.b));
    sym = std::max({sym, rel_err(ab, two_maps), rel_err(ba, two_maps)});
    const auto params = AttentionParams::rank1(in.a_multi, in.b);
    const auto combined = combined_map_score(in.x, params);
    comb = std::max(comb, max_rel_diff(combined.scores, score_multiclass(in.x, params)));
  }
  return {sym <= 1e-12 && comb <= 1e-12, "symmetric form " + fmt(sym) + ", combined map " + fmt(comb)};
}

Outcome check_rank_p_oracle() {
  double worst = 0.0;
  for (std::size_t p : {1, 2, 5}) {
    for (std::size_t i = 0; i < 200; ++i) {
      SplitMix64 rng(split_seed(0xA11CE + p, i));
      const std::size_t n = dim_1_16(rng), f = dim_1_16(rng), k = 1 + rng.below(8);
      const Matrix x = normal_matrix(n, f, rng);
      std::vector<Matrix> td, bu;
      for (std::size_t r = 0; r < p; ++r) {
        td.push_back(normal_matrix(f, k, rng));
        bu.push_back(normal_matrix(f, 1, rng));
      }
      const AttentionParams params(td, bu);
      const auto w = params.second_order_weights();
      worst = std::max(worst, max_rel_diff(score_rank_p(x, params), score_second_order(x, w)));
    }
  }
  return {worst <= 1e-9, "P in {1,2,5}, 600 instances, worst " + fmt(worst)};
}

Outcome check_tensor_identities() {
  double assoc = 0.0, cyclic = 0.0, dot = 0.0;
  bool identity_exact = true;
  for (std::size_t i = 0; i < 200; ++i) {
    SplitMix64 rng(split_seed(0x7E45, i));
    const std::size_t n = dim_1_16(rng), f = dim_1_16(rng);
    const Matrix x = normal_matrix(n, f, rng), a = normal_matrix(f, 1, rng), b = normal_matrix(f, 1, rng);
    const double lhs = matmul_tn(matmul(x, a), matmul(x, b))[0];
    const double rhs = matmul_tn(a, matmul_tn(x, matmul(x, b)))[0];
    assoc = std::max(assoc, rel_err(lhs, rhs));
    const Matrix p = normal_matrix(3, 3, rng), q = normal_matrix(3, 3, rng), r = normal_matrix(3, 3, rng);
    cyclic = std::max(cyclic, rel_err(trace(matmul(matmul(p, q), r)), trace(matmul(matmul(r, p), q))));
    dot = std::max(dot, rel_err(trace(matmul(p, transpose(q))), frobenius_dot(p, q)));
    identity_exact = identity_exact && matmul(Matrix::identity(n), x) == x && matmul(x, Matrix::identity(f)) == x;
  }
  return {assoc <= 1e-12 && cyclic <= 1e-12 && dot <= 1e-12 && identity_exact,
          "associativity " + fmt(assoc) + ", trace cyclic " + fmt(cyclic) + ", trace/dot " + fmt(dot) +
              (identity_exact ? ", identity exact" : ", identity NOT exact")};
}

Outcome check_degenerate_reductions() {
  double worst = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    SplitMix64 rng(split_seed(0xDE6E, i));
    const std::size_t n = dim_1_16(rng), f = dim_1_16(rng), k = 1 + rng.below(8);
    const Matrix x = normal_matrix(n, f, rng), a = normal_matrix(f, k, rng), b = normal_matrix(f, 1, rng);
    const auto params = AttentionParams::rank1(a, b);
    const Matrix multi = score_multiclass(x, params);
    worst = std::max(worst, max_rel_diff(score_rank_p(x, params), multi));
    Matrix shared(f, k);
    for (std::size_t r = 0; r < f; ++r)
      for (std::size_t c = 0; c < k; ++c) shared(r, c) = b[r];
    worst = std::max(worst, max_rel_diff(score_per_class(x, {a, shared}), multi));
    const Matrix a0 = column_of(a, 0);
    worst = std::max(worst, rel_err(score_multiclass(x, AttentionParams::rank1(a0, b))[0], score_rank1(x, a0, b).score));
    const AttentionParams doubled({a, a}, {b, b});
    worst = std::max(worst, max_rel_diff(score_rank_p(x, doubled), scale(multi, 2.0)));
  }
  return {worst <= 1e-12, "P=1, K=1, shared-b and doubled-rank reductions, worst " + fmt(worst)};
}

Outcome check_maps_round_trip() {
  SplitMix64 rng(0x6A1D);
  const std::size_t n1 = 3, n2 = 5, f = 6, k = 4;
  const Matrix x = normal_matrix(n1 * n2, f, rng);
  const auto params = AttentionParams::rank1(normal_matrix(f, k, rng), normal_matrix(f, 1, rng));
  const auto grids = extract_maps(x, params, Shape{n1, n2});
  const auto flat = combined_map_score(x, params).maps;
  bool exact = std::equal(grids.bottom_up.data().begin(), grids.bottom_up.data().end(), flat.bottom_up.data().begin());
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n1 * n2; ++i) {
      exact = exact && grids.top_down[c][i] == flat.top_down(i, c) && grids.combined[c][i] == flat.combined(i, c);
    }
  }
  return {exact, exact ? "grids flatten to the vector maps bit-exactly" : "grid/vector mismatch"};
}

Outcome check_rank1_allocation() {
  std::size_t violations = 0;
  for (std::size_t f : {8, 64, 512}) {
    for (std::size_t n : {1, 7, 49}) {
      SplitMix64 rng(f * 131 + n);
      const Matrix x = normal_matrix(n, f, rng), a = normal_matrix(f, 1, rng), b = normal_matrix(f, 1, rng);
      CounterScope scope;
      { const auto r = score_rank1(x, a, b); }
      const auto& c = scope.counters();
      if (c.peak_live_elements > n + f + 1) ++violations;
    }
  }
  return {violations == 0,
          violations == 0 ? "peak scratch <= n + f + 1 values on 9 shapes"
                                      : std::to_string(violations) + " shapes exceeded n + f + 1"};
}

// ---------------------------------------------------------------------------
// gradients

struct GradCase {
  std::string name;
  TrainConfig config;
  LossKind loss = LossKind::kSoftmax;
};

Outcome check_head_gradients(const GradCase& gc) {
  double worst = 0.0;
  const std::size_t n1 = 2, n2 = 3, f = 5, k = 3;
  for (std::size_t seed = 0; seed < 20; ++seed) {
    TrainConfig cfg = gc.config;
    cfg.seed = 1000 + seed;
    const HeadParams layout = init_head(cfg, f, k);
    SplitMix64 rng(split_seed(0x96AD, seed));
    LabeledExample ex;
    ex.features = normal_matrix(n1 * n2, f, rng);
    ex.label = static_cast<std::size_t>(rng.below(k));
    ex.labels = {ex.label};
    if (gc.loss == LossKind::kSigmoid) {
      ex.labels.clear();
      for (std::size_t c = 0; c < k; ++c)
        if (rng.below(2) == 1 || c == ex.label) ex.labels.push_back(c);
    }
    ex.planted_locs = {0};
    PoseTarget pose{Matrix(n1 * n2, kPoseKeypoints), Matrix(kPoseKeypoints, 1)};
    for (auto& v : pose.heatmaps.data()) v = rng.uniform01();
    for (auto& v : pose.mask.data()) v = rng.below(4) == 0 ? 0.0 : 1.0;
    ex.pose = pose;
    std::optional<SketchParams> sketch;
    if (cfg.head == HeadKind::kCbp) sketch = head_sketch(layout);
    // Scale parameters up so logits are O(1) and the check is not trivially flat.
    std::vector<Matrix> params;
    for (const auto& t : layout.tensors) params.push_back(scale(normal_matrix(t.value.rows(), t.value.cols(), rng), 0.7));
    const LossContext ctx{gc.loss, cfg.lambda_pose, sketch ? &*sketch : nullptr, {}};
    worst = std::max(worst, ag::finite_diff_check(example_loss_graph(layout, ex, ctx), params));
  }
  return {worst <= 1e-6, "20 seeds, worst relative error " + fmt(worst)};
}

Outcome check_autograd_rules() {
  ag::Tape tape;
  const auto x = ag::leaf(tape, Matrix::column({1.5, -2.0}));
  const auto y = ag::sum(ag::add(x, x));
  ag::backward(y);
  const bool fan_out = x.grad() == Matrix::column({2.0, 2.0});

  SplitMix64 rng(0x11AE);
  const Matrix xm = normal_matrix(4, 3, rng), a = normal_matrix(3, 2, rng), b = normal_matrix(3, 1, rng);
  auto graph = [&](double alpha) {
    return ag::ScalarGraph([&, alpha](ag::Tape& t, std::span<const ag::Var> p) {
      return ag::scale(ag::softmax_cross_entropy(graph::attention_scores(ag::leaf(t, xm), p[0], p[1]), 1), alpha);
    });
  };
  const std::vector<Matrix> params{a, b};
  const auto g1 = ag::evaluate_with_grad(graph(1.0), params);
  const auto g3 = ag::evaluate_with_grad(graph(3.0), params);
  double lin = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) lin = std::max(lin, max_rel_diff(g3.grads[i], scale(g1.grads[i], 3.0)));

  // d/da a^T X^T X b = X^T (X b).
  const double bilinear = max_rel_diff(
      ag::evaluate_with_grad(
          [&](ag::Tape& t, std::span<const ag::Var> p) {
            const auto xv = ag::leaf(t, xm);
            return ag::sum(ag::matmul(ag::transpose(ag::matmul(xv, p[0])), ag::matmul(xv, p[1])));
          },
          std::vector<Matrix>{column_of(a, 0), b})
          .grads[0],
      matmul_tn(xm, matmul(xm, b)));
  return {fan_out && lin <= 1e-12 && bilinear <= 1e-12,
          std::string(fan_out ? "fan-out ok" : "fan-out WRONG") + ", linearity " + fmt(lin) + ", bilinear " +
              fmt(bilinear)};
}

// ---------------------------------------------------------------------------
// sketch

Outcome check_sketch_unbiased() {
  SplitMix64 rng(0x5EED);
  const Matrix x = normal_matrix(16, 1, rng), y = normal_matrix(16, 1, rng);
  const double target = std::pow(frobenius_dot(x, y), 2);
  const std::size_t trials = 10000;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto params = SketchParams::make(16, 64, split_seed(0x7AB1E, t));
    const double v = frobenius_dot(tensor_sketch(x.data(), params), tensor_sketch(y.data(), params));
    const double delta = v - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (v - mean);
  }
  const double se = std::sqrt(m2 / static_cast<double>(trials - 1) / static_cast<double>(trials));
  const double z = std::abs(mean - target) / se;
  return {z <= 3.0, "mean " + fmt(mean) + " vs <x,y>^2 " + fmt(target) + ", " + fmt(z) + " standard errors"};
}

Outcome check_sketch_properties() {
  SplitMix64 rng(0x5CE7);
  const std::size_t f = 12, d = 16;
  const Matrix x = normal_matrix(f, 1, rng);
  const auto p = SketchParams::make(f, d, 99);
  const auto q = SketchParams::make(f, d, 99);
  const bool deterministic = p.h1 == q.h1 && p.h2 == q.h2 && p.s1 == q.s1 && p.s2 == q.s2 &&
                             tensor_sketch(x.data(), p) == tensor_sketch(x.data(), q);
  const bool even = tensor_sketch(scale(x, -1.0).data(), p) == tensor_sketch(x.data(), p);
  const double scaling = max_rel_diff(tensor_sketch(scale(x, 2.5).data(), p), scale(tensor_sketch(x.data(), p), 6.25));

  double mean = 0.0, m2 = 0.0;
  const std::size_t trials = 10000;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto s = SketchParams::make(f, d, split_seed(0xC0C0, t));
    const Matrix cs = count_sketch(x.data(), s.h1, s.s1, d);
    const double v = frobenius_dot(cs, cs);
    const double delta = v - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (v - mean);
  }
  const double se = std::sqrt(m2 / static_cast<double>(trials - 1) / static_cast<double>(trials));
  const double z = std::abs(mean - frobenius_dot(x, x)) / se;
  const bool ok = deterministic && even && scaling <= 1e-12 && z <= 3.0;
  return {ok, std::string(deterministic ? "deterministic" : "NOT deterministic") + ", " + (even ? "even" : "NOT even") +
                  ", scaling " + fmt(scaling) + ", count-sketch norm " + fmt(z) + " SE"};
}

// ---------------------------------------------------------------------------
// cost

Outcome check_flop_sweep() {
  std::size_t points = 0, mismatches = 0, ordering = 0;
  for (std::size_t n : {1, 7, 49}) {
    for (std::size_t f : {8, 64, 512}) {
      for (std::size_t k : {1, 10, 100}) {
        const bench::Dims base{n, f, k, 1, 64};
        const auto full = bench::instrument(bench::make_inputs(bench::Kind::kFull, base));
        ++points;
        if (full.flops != bench::flops_full_second_order(n, f, k)) ++mismatches;
        for (std::size_t p : {1, 2, 5}) {
          const bench::Dims dims{n, f, k, p, 64};
          const auto m = bench::instrument(bench::make_inputs(bench::Kind::kRankP, dims));
          ++points;
          if (m.flops != bench::flops_rank_p(n, f, k, p)) ++mismatches;
          if (!bench::rank_p_memory_ok(m, dims)) ++mismatches;
          // Cheaper exactly when P(2n + K) < f(n + K); guaranteed once f > 2P.
          const bool cheaper = bench::flops_rank_p(n, f, k, p) < bench::flops_full_second_order(n, f, k);
          if (cheaper != (p * (2 * n + k) < f * (n + k)) || (f > 2 * p && !cheaper)) ++ordering;
        }
        const auto c = bench::instrument(bench::make_inputs(bench::Kind::kCbp, base));
        ++points;
        if (c.flops != bench::flops_cbp(n, f, k, 64)) ++mismatches;
      }
    }
  }
  return {mismatches == 0 && ordering == 0, std::to_string(points) + " grid points, " + std::to_string(mismatches) +
                                                " count mismatches, " + std::to_string(ordering) +
                                                " ordering violations"};
}

Outcome check_flop_examples() {
  const auto full = bench::flops_full_second_order(49, 2048, 393);
  const auto rank1 = bench::flops_rank_p(49, 2048, 393, 1);
  const double ratio = static_cast<double>(full) / static_cast<double>(rank1);
  const bool ok = full == 3707764736ULL && rank1 == 2011136ULL && std::abs(ratio - 1843.6) < 0.05 &&
                  bench::flops_full_second_order(5, 1, 3) == 16 && bench::flops_full_second_order(5, 4, 0) == 160 &&
                  bench::flops_rank_p(49, 2048, 393, 2) == 2 * rank1;
  return {ok, "full " + std::to_string(full) + ", rank-1 " + std::to_string(rank1) + ", ratio " + fmt(ratio)};
}

Outcome check_wallclock_ratio() {
  const bench::Dims dims{196, 512, 100, 1, 64};
  const auto full = bench::bench_wallclock(bench::Kind::kFull, dims, 5);
  const auto rank1 = bench::bench_wallclock(bench::Kind::kRankP, dims, 21);
  const double ratio = full.ns_median / rank1.ns_median;
  return {ratio >= 10.0 && rank1.memory_ok, "full/rank-1 wall-clock ratio " + fmt(ratio)};
}

// ---------------------------------------------------------------------------
// formats and determinism

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = atnp::read_file_bytes(e.path());
  }
  return out;
}

RunConfig small_config() {
  RunConfig c;
  c.seed = 11;
  c.task.n1 = 4;
  c.task.n2 = 4;
  c.task.f = 8;
  c.task.classes = 3;
  c.task.train_samples = 60;
  c.task.val_samples = 20;
  c.train.epochs = 3;
  c.train.batch_size = 8;
  return c;
}

Outcome check_format_round_trips(const fs::path& scratch) {
  SplitMix64 rng(0xF0F0);
  bool ok = true;
  std::string failures;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failures += (failures.empty() ? "" : ", ") + what;
    }
  };
  for (const Shape& s : {Shape{5}, Shape{3, 4}, Shape{2, 3, 4}}) {
    Matrix m(s);
    for (auto& v : m.data()) v = rng.normal();
    const auto bytes = atnp::encode(m);
    expect(atnp::encode(atnp::decode(bytes)) == bytes && atnp::decode(bytes) == m, "atnp " + s.to_string());
  }
  const auto img = to_heatmap(normal_matrix(3, 5, rng));
  const auto pgm = encode_pgm(img);
  expect(encode_pgm(decode_pgm(pgm)) == pgm, "pgm");

  RunConfig cfg = small_config();
  cfg.train.lr = 0.1 + 1e-17;
  cfg.task.signal_strength = 1.0 / 3.0;
  const std::string text = serialize_config(cfg);
  expect(serialize_config(parse_config(text)) == text, "config");

  auto task = gen_planted(small_config().task_config());
  gen_pose_targets(task.train, 1.0);
  save_dataset(scratch / "ds_a", task.train);
  save_dataset(scratch / "ds_b", load_dataset(scratch / "ds_a"));
  expect(snapshot(scratch / "ds_a") == snapshot(scratch / "ds_b"), "dataset");

  TrainConfig tc = small_config().train_config();
  tc.head = HeadKind::kPoseReg;
  tc.hidden = 4;
  const auto params = init_head(tc, 8, 3);
  save_checkpoint(scratch / "ck_a", params, cfg);
  const auto loaded = load_checkpoint(scratch / "ck_a");
  save_checkpoint(scratch / "ck_b", loaded.params, loaded.config);
  expect(snapshot(scratch / "ck_a") == snapshot(scratch / "ck_b"), "checkpoint");
  return {ok, ok ? "atnp, pgm, config, dataset and checkpoint rewrite byte-identically" : "failed: " + failures};
}

Outcome check_determinism(const fs::path& scratch) {
  const RunConfig cfg = small_config();
  for (const char* name : {"gen_a", "gen_b"}) {
    save_planted_task(scratch / name, gen_planted(cfg.task_config()), serialize_config(cfg));
  }
  const bool gen_same = snapshot(scratch / "gen_a") == snapshot(scratch / "gen_b");

  const auto task = gen_planted(cfg.task_config());
  auto run = [&](const char* name, std::size_t threads) {
    TrainConfig tc = cfg.train_config();
    tc.threads = threads;
    const auto report = train(tc, task.train, task.val);
    save_checkpoint(scratch / name, report.params, cfg);
    return report.epochs.back().train_loss;
  };
  const double l1 = run("train_a", 1);
  const double l2 = run("train_b", 1);
  const double l3 = run("train_c", 3);
  const auto a = snapshot(scratch / "train_a");
  const bool train_same = a == snapshot(scratch / "train_b") && l1 == l2;
  const bool threads_same = a == snapshot(scratch / "train_c") && l1 == l3;
  return {gen_same && train_same && threads_same,
          std::string("gen ") + (gen_same ? "identical" : "DIFFERS") + ", train " +
              (train_same ? "identical" : "DIFFERS") + ", 3 threads " + (threads_same ? "identical" : "DIFFERS")};
}

fs::path make_scratch(const fs::path& requested) {
  static int counter = 0;
  fs::path dir = requested.empty()
                     ? fs::temp_directory_path() /
                           ("attnpool-selftest-" + std::to_string(::getpid()) + "-" + std::to_string(counter++))
                     : requested;
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create scratch directory " + dir.string() + ": " + ec.message());
  return dir;
}

}  // namespace

bool SelftestReport::group_ok(std::string_view group) const {
  bool any = false;
  for (const auto& c : checks) {
    if (c.group != group) continue;
    any = true;
    if (!c.passed) return false;
  }
  return any;
}

bool SelftestReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string SelftestReport::summary_line() const {
  auto tag = [&](std::string_view g) { return group_ok(g) ? "OK" : "FAIL"; };
  return std::string("EQUIVALENCE ") + tag("equivalence") + " / GRADIENTS " + tag("gradients") + " / SKETCH " +
         tag("sketch");
}

std::string SelftestReport::secondary_line() const {
  auto tag = [&](std::string_view g) { return group_ok(g) ? "OK" : "FAIL"; };
  return std::string("COST ") + tag("cost") + " / FORMATS " + tag("formats");
}

SelftestReport run_selftest(const SelftestOptions& options) {
  SelftestReport report;
  auto run = [&](std::string group, std::string name, const std::function<Outcome()>& body) {
    CheckResult r{std::move(group), std::move(name), false, {}, 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Outcome o = body();
      r.passed = o.passed;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.log) {
      *options.log << (r.passed ? "[PASS] " : "[FAIL] ") << r.group << '/' << r.name << ": " << r.detail << " ("
                   << fmt(r.seconds) << " s)\n";
      options.log->flush();
    }
    report.checks.push_back(std::move(r));
  };

  const auto instances = rank1_instances(1000, 0xE9);
  run("equivalence", "rank1_vs_second_order", [&] { return check_rank1_equivalence(instances); });
  run("equivalence", "symmetric_and_combined_map", [&] { return check_symmetric_and_combined(instances); });
  run("equivalence", "rank_p_oracle", check_rank_p_oracle);
  run("equivalence", "tensor_identities", check_tensor_identities);
  run("equivalence", "degenerate_reductions", check_degenerate_reductions);
  run("equivalence", "grid_maps_round_trip", check_maps_round_trip);
  run("equivalence", "rank1_scratch_memory", check_rank1_allocation);

  run("gradients", "autograd_rules", check_autograd_rules);
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, HeadKind kind, LossKind loss = LossKind::kSoftmax) {
    GradCase gc{std::move(name), {}, loss};
    gc.config.head = kind;
    gc.config.rank = 3;
    gc.config.hidden = 4;
    gc.config.sketch_dim = 8;
    gc.config.lambda_pose = 0.5;
    cases.push_back(gc);
  };
  add_case("avg_pool", HeadKind::kAvgPool);
  add_case("attention", HeadKind::kAttention);
  add_case("attention_sigmoid", HeadKind::kAttention, LossKind::kSigmoid);
  add_case("rank_p", HeadKind::kRankP);
  add_case("per_class", HeadKind::kPerClass);
  add_case("pose_reg", HeadKind::kPoseReg);
  add_case("cbp", HeadKind::kCbp);
  cases.back().config.bias = true;
  for (const auto& gc : cases) run("gradients", "head_" + gc.name, [&] { return check_head_gradients(gc); });

  run("sketch", "tensor_sketch_unbiased", check_sketch_unbiased);
  run("sketch", "sketch_properties", check_sketch_properties);

  run("cost", "flop_sweep_grid", check_flop_sweep);
  run("cost", "flop_closed_forms", check_flop_examples);
  if (options.wallclock) run("cost", "wallclock_ratio", check_wallclock_ratio);

  fs::path scratch;
  run("formats", "round_trips", [&] {
    scratch = make_scratch(options.scratch_dir);
    return check_format_round_trips(scratch);
  });
  run("formats", "determinism", [&] {
    if (scratch.empty()) scratch = make_scratch(options.scratch_dir);
    return check_determinism(scratch);
  });
  if (options.scratch_dir.empty() && !scratch.empty()) {
    std::error_code ec;
    fs::remove_all(scratch, ec);
  }
  return report;
}

}  // namespace attnpool
