#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "attnpool/atnp.hpp"
#include "attnpool/bench.hpp"
#include "attnpool/checkpoint.hpp"
#include "attnpool/config.hpp"
#include "attnpool/dataset_io.hpp"
#include "attnpool/errors.hpp"
#include "attnpool/heatmap.hpp"
#include "attnpool/selftest.hpp"
#include "attnpool/train.hpp"

namespace fs = std::filesystem;
using namespace attnpool;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;
constexpr int kExitSelftest = 4;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.file, "config file (key = value, [section] headers)");
  cmd->add_option("-s,--set", args.overrides, "override, e.g. --set train.lr=0.05 (repeatable)");
}

RunConfig resolve_config(const ConfigArgs& args, const RunConfig& base = {}) {
  RunConfig cfg = args.file.empty() ? base : load_config(args.file, base);
  for (const auto& o : args.overrides) apply_override(cfg, o);
  apply_seed_env(cfg);
  cfg.validate();
  std::cerr << "# resolved config\n" << serialize_config(cfg) << "# end config\n";
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------

struct GenArgs {
  ConfigArgs config;
  std::string out;
};

int cmd_gen(const GenArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  auto task = gen_planted(cfg.task_config());
  gen_pose_targets(task.train, cfg.task.pose_sigma);
  gen_pose_targets(task.val, cfg.task.pose_sigma);
  save_planted_task(args.out, task, serialize_config(cfg));
  std::cout << "wrote " << task.train.size() << " train and " << task.val.size() << " val examples to " << args.out
            << '\n';
  return 0;
}

struct TrainArgs {
  ConfigArgs config;
  std::string data;
  std::string out;
};

int cmd_train(const TrainArgs& args, std::size_t threads) {
  const fs::path data(args.data);
  RunConfig base;
  if (fs::exists(data / "config.txt")) base = load_config(data / "config.txt");
  const RunConfig cfg = resolve_config(args.config, base);
  TrainConfig tc = cfg.train_config();
  tc.threads = threads;

  const Dataset train_set = load_dataset(data / "train");
  const Dataset val_set = load_dataset(data / "val");
  const TrainReport report = train(tc, train_set, val_set);

  const fs::path out(args.out);
  save_checkpoint(out, report.params, cfg);
  write_text(out / "report.tsv", report_tsv(report));
  write_text(out / "summary.txt", report_summary(report, tc));
  for (const auto& e : report.epochs) {
    std::cerr << "epoch " << e.epoch << "  loss " << format_number(e.train_loss) << "  val "
              << format_number(e.val_metric) << "  loc " << format_number(e.localization_rate) << '\n';
  }
  std::cerr << "wall-clock " << report.wall_seconds << " s\n";
  if (report.aborted) {
    std::cerr << "error: training aborted: " << report.abort_reason << '\n';
    return kExitValidation;
  }
  std::cout << report_summary(report, tc);
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string out;
};

int cmd_eval(const EvalArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const Dataset data = load_dataset(fs::path(args.data) / args.split);
  const EvalResult r = evaluate(ck.params, data, ck.config.train.cbp);
  std::string text;
  text += "head = " + std::string(to_string(ck.params.kind)) + "\n";
  text += "split = " + args.split + "\n";
  text += "examples = " + std::to_string(data.size()) + "\n";
  text += "accuracy = " + format_number(r.accuracy) + "\n";
  text += "map = " + format_number(r.map) + "\n";
  text += "localization_rate = " + format_number(r.localization_rate) + "\n";
  if (!args.out.empty()) write_text(args.out, text);
  std::cout << text;
  return 0;
}

struct HeatmapArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string out;
  std::vector<std::size_t> indices;
  std::size_t count = 8;
  std::optional<std::size_t> cls;
  std::string baseline;
  std::string map;
  std::size_t rows = 0;
};

HeatmapImage map_image(const Matrix& column, std::size_t n1, std::size_t n2) {
  return to_heatmap(column.reshaped(Shape{n1, n2}));
}

int cmd_heatmap_map(const HeatmapArgs& args) {
  const Matrix m = atnp::load(args.map);
  Matrix grid;
  if (m.shape().ndim() == 2 && args.rows == 0) {
    grid = m;
  } else if (m.shape().ndim() <= 2) {
    const std::size_t rows = args.rows == 0 ? 1 : args.rows;
    if (m.size() % rows != 0) {
      throw ShapeError("map of " + std::to_string(m.size()) + " values cannot have " + std::to_string(rows) + " rows");
    }
    grid = m.reshaped(Shape{rows, m.size() / rows});
  } else {
    throw ShapeError("--map expects a 1-D or 2-D ATNP file, got " + m.shape().to_string());
  }
  const auto img = to_heatmap(grid);
  export_pgm(img, args.out);
  std::cout << "wrote " << args.out << " (" << img.width << "x" << img.height << ", min "
            << format_number(img.source_min) << ", max " << format_number(img.source_max) << ")\n";
  return 0;
}

int cmd_heatmap(const HeatmapArgs& args) {
  if (!args.map.empty()) return cmd_heatmap_map(args);
  if (args.checkpoint.empty() || args.data.empty()) {
    throw CLI::ValidationError("heatmap", "--checkpoint and --data are required unless --map is given");
  }
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const Dataset data = load_dataset(fs::path(args.data) / args.split);
  if (ck.params.kind == HeadKind::kCbp) throw ValidationError("cbp heads have no spatial attention maps");

  std::vector<std::size_t> picks = args.indices;
  if (picks.empty() && !args.baseline.empty()) {
    const Checkpoint base = load_checkpoint(args.baseline);
    const auto ours = evaluate(ck.params, data, ck.config.train.cbp).logits;
    const auto theirs = evaluate(base.params, data, base.config.train.cbp).logits;
    const auto labels = data.labels();
    picks = rank_by_improvement(ours, theirs, labels);
    picks.resize(std::min(picks.size(), args.count));
  }
  if (picks.empty()) {
    for (std::size_t i = 0; i < std::min(args.count, data.size()); ++i) picks.push_back(i);
  }

  const fs::path out(args.out);
  make_dir(out);
  std::string index;
  for (const std::size_t i : picks) {
    if (i >= data.size()) throw ValidationError("example index " + std::to_string(i) + " is out of range");
    const auto& ex = data.examples[i];
    const std::size_t k = args.cls.value_or(ex.label);
    if (k >= ck.params.classes) throw ValidationError("class " + std::to_string(k) + " is out of range");
    const auto maps = class_maps(ck.params, ex.features, k);
    const auto combined = map_image(maps->combined, data.n1, data.n2);
    const auto top_down = map_image(maps->top_down, data.n1, data.n2);
    const auto bottom_up = map_image(maps->bottom_up, data.n1, data.n2);
    const std::string stem = "ex" + std::to_string(i) + "_class" + std::to_string(k);
    export_pgm(combined, out / (stem + "_combined.pgm"));
    export_pgm(top_down, out / (stem + "_top_down.pgm"));
    export_pgm(bottom_up, out / (stem + "_bottom_up.pgm"));
    const HeatmapImage panels[] = {combined, top_down, bottom_up};
    export_pgm(montage(panels), out / (stem + "_montage.pgm"));
    index += std::to_string(i) + "\t" + std::to_string(k) + "\t" + std::to_string(ex.planted_loc()) + "\t" + stem + "\n";
  }
  write_text(out / "index.tsv", index);
  std::cout << "wrote " << picks.size() << " example(s) to " << args.out << '\n';
  return 0;
}

struct BenchArgs {
  std::vector<std::string> kinds{"full", "rank_p", "cbp"};
  std::size_t n = 196, f = 512, k = 100, p = 1, d = 64;
  std::size_t reps = 21;
  bool sweep = false;
  std::string out;
};

int cmd_bench(const BenchArgs& args) {
  std::vector<bench::Kind> kinds;
  for (const auto& s : args.kinds) kinds.push_back(bench::parse_kind(s));
  std::vector<bench::Dims> grid;
  if (args.sweep) {
    for (std::size_t n : {1, 7, 49})
      for (std::size_t f : {8, 64, 512})
        for (std::size_t k : {1, 10, 100})
          for (std::size_t p : {1, 2, 5}) grid.push_back({n, f, k, p, args.d});
  } else {
    grid.push_back({args.n, args.f, args.k, args.p, args.d});
  }
  std::string csv = bench::csv_header() + "\n";
  bool memory_ok = true;
  for (const auto& dims : grid) {
    for (const auto kind : kinds) {
      // The full and cbp costs do not depend on P; time them once per (n, f, K).
      if (args.sweep && kind != bench::Kind::kRankP && dims.p != 1) continue;
      const auto r = bench::bench_wallclock(kind, dims, args.reps);
      memory_ok = memory_ok && r.memory_ok;
      csv += bench::csv_row(r) + "\n";
      std::cerr << bench::csv_row(r) << '\n';
    }
  }
  if (!args.out.empty()) write_text(args.out, csv);
  std::cout << csv;
  if (!memory_ok) {
    std::cerr << "error: rank-P scoring exceeded its O(n + f + K) scratch bound\n";
    return kExitValidation;
  }
  return 0;
}

struct SelftestArgs {
  bool no_wallclock = false;
  std::string scratch;
};

int cmd_selftest(const SelftestArgs& args) {
  SelftestOptions opts;
  opts.log = &std::cout;
  opts.wallclock = !args.no_wallclock;
  opts.scratch_dir = args.scratch;
  const auto report = run_selftest(opts);
  std::cout << report.summary_line() << '\n' << report.secondary_line() << '\n';
  return report.ok() ? 0 : kExitSelftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attnpool: attentional pooling as low-rank second-order pooling"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "worker threads for training (default 1)")
      ->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate the planted-attention dataset");
  add_config_options(gen_cmd, gen.config);
  gen_cmd->add_option("-o,--out", gen.out, "output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a head on a generated dataset");
  add_config_options(train_cmd, tr.config);
  train_cmd->add_option("-d,--data", tr.data, "dataset directory written by gen")->required();
  train_cmd->add_option("-o,--out", tr.out, "checkpoint directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("-k,--checkpoint", ev.checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("-d,--data", ev.data, "dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "train or val")->check(CLI::IsMember({"train", "val"}));
  eval_cmd->add_option("-o,--out", ev.out, "metrics file (key = value)");

  HeatmapArgs hm;
  auto* hm_cmd = app.add_subcommand("heatmap", "export bottom-up, top-down and combined maps as PGM");
  hm_cmd->add_option("-k,--checkpoint", hm.checkpoint, "checkpoint directory");
  hm_cmd->add_option("-d,--data", hm.data, "dataset directory");
  hm_cmd->add_option("--split", hm.split, "train or val")->check(CLI::IsMember({"train", "val"}));
  hm_cmd->add_option("-o,--out", hm.out, "output directory (or .pgm file with --map)")->required();
  hm_cmd->add_option("-i,--index", hm.indices, "example indices (repeatable)");
  hm_cmd->add_option("-n,--count", hm.count, "number of examples when no index is given");
  hm_cmd->add_option("--class", hm.cls, "class whose maps to draw (default: the example's label)");
  hm_cmd->add_option("--rank-against", hm.baseline,
                     "baseline checkpoint; pick examples with the largest correct-class probability gain");
  hm_cmd->add_option("--map", hm.map, "render a single ATNP map instead of a checkpoint");
  hm_cmd->add_option("--rows", hm.rows, "grid rows for a 1-D --map (default 1)");

  BenchArgs bn;
  auto* bench_cmd = app.add_subcommand("bench", "FLOP and wall-clock benchmark, CSV output");
  bench_cmd->add_option("--kind", bn.kinds, "full, rank_p, cbp (repeatable)");
  bench_cmd->add_option("--n", bn.n, "locations")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--f", bn.f, "features")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--K", bn.k, "classes")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--P", bn.p, "rank")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--d", bn.d, "sketch dimension")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--reps", bn.reps, "timed repetitions")->check(CLI::PositiveNumber);
  bench_cmd->add_flag("--sweep", bn.sweep, "run the {1,7,49}x{8,64,512}x{1,10,100}x{1,2,5} grid");
  bench_cmd->add_option("-o,--out", bn.out, "CSV file");

  SelftestArgs st;
  auto* st_cmd = app.add_subcommand("selftest", "run the equivalence, gradient, sketch, cost and format checks");
  st_cmd->add_flag("--no-wallclock", st.no_wallclock, "skip the timing-ratio check");
  st_cmd->add_option("--scratch", st.scratch, "scratch directory for file checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*train_cmd) return cmd_train(tr, threads);
    if (*eval_cmd) return cmd_eval(ev);
    if (*hm_cmd) return cmd_heatmap(hm);
    if (*bench_cmd) return cmd_bench(bn);
    if (*st_cmd) return cmd_selftest(st);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
