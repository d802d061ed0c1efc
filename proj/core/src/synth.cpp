#include "attnpool/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnpool/errors.hpp"
#include "attnpool/splitmix.hpp"

namespace attnpool {

namespace {

constexpr std::uint64_t kPrototypeStream = 1ULL << 62;

void add_scaled_row(Matrix& x, std::size_t row, const Matrix& src, std::size_t src_row, double alpha) {
  for (std::size_t j = 0; j < x.cols(); ++j) x(row, j) += alpha * src(src_row, j);
}

struct Directions {
  Matrix prototypes;
  Matrix objectness;
};

Directions make_directions(const PlantedTaskConfig& cfg) {
  SplitMix64 rng(split_seed(cfg.seed, kPrototypeStream));
  const std::size_t k = cfg.classes, f = cfg.f;
  Matrix protos(k, f);
  for (std::size_t c = 0; c < k; ++c) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      protos(c, j) = rng.normal();
      norm2 += protos(c, j) * protos(c, j);
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < f; ++j) protos(c, j) *= inv;
  }
  for (std::size_t j = 0; j < f; ++j) {
    double mean = 0.0;
    for (std::size_t c = 0; c < k; ++c) mean += protos(c, j);
    mean /= static_cast<double>(k);
    for (std::size_t c = 0; c < k; ++c) protos(c, j) -= mean;
  }

  // Orthonormal basis of the prototype span (modified Gram-Schmidt), then a
  // random direction projected onto its complement.
  std::vector<std::vector<double>> basis;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v(protos.row(c).begin(), protos.row(c).end());
    for (const auto& q : basis) {
      double d = 0.0;
      for (std::size_t j = 0; j < f; ++j) d += v[j] * q[j];
      for (std::size_t j = 0; j < f; ++j) v[j] -= d * q[j];
    }
    double n2 = 0.0;
    for (double t : v) n2 += t * t;
    if (n2 > 1e-20) {
      const double inv = 1.0 / std::sqrt(n2);
      for (auto& t : v) t *= inv;
      basis.push_back(std::move(v));
    }
  }
  Matrix obj(f, 1);
  for (;;) {
    for (auto& v : obj.data()) v = rng.normal();
    for (const auto& q : basis) {
      double d = 0.0;
      for (std::size_t j = 0; j < f; ++j) d += obj[j] * q[j];
      for (std::size_t j = 0; j < f; ++j) obj[j] -= d * q[j];
    }
    double n2 = 0.0;
    for (double t : obj.data()) n2 += t * t;
    if (n2 > 1e-12) {
      const double inv = 1.0 / std::sqrt(n2);
      for (auto& t : obj.data()) t *= inv;
      break;
    }
  }
  return {std::move(protos), std::move(obj)};
}

LabeledExample make_example(const PlantedTaskConfig& cfg, const Directions& dirs, std::uint64_t stream) {
  SplitMix64 rng(split_seed(cfg.seed, stream));
  const std::size_t n = cfg.locations(), f = cfg.f, k = cfg.classes;
  LabeledExample ex;

  std::vector<std::size_t> planted_classes;
  if (!cfg.multi_label) {
    ex.label = static_cast<std::size_t>(rng.below(k));
    ex.planted_locs.push_back(static_cast<std::size_t>(rng.below(n)));
    planted_classes.push_back(ex.label);
  } else {
    const std::size_t count = std::min<std::size_t>(1 + rng.below(cfg.max_planted), n);
    while (ex.planted_locs.size() < count) {
      const auto loc = static_cast<std::size_t>(rng.below(n));
      const auto cls = static_cast<std::size_t>(rng.below(k));
      if (std::find(ex.planted_locs.begin(), ex.planted_locs.end(), loc) != ex.planted_locs.end()) continue;
      ex.planted_locs.push_back(loc);
      planted_classes.push_back(cls);
    }
  }
  ex.labels = planted_classes;
  std::sort(ex.labels.begin(), ex.labels.end());
  ex.labels.erase(std::unique(ex.labels.begin(), ex.labels.end()), ex.labels.end());
  ex.label = ex.labels.front();

  ex.features = Matrix(n, f);
  for (auto& v : ex.features.data()) v = rng.normal();

  const double sig = cfg.signal_strength;
  for (std::size_t c = 0; c < cfg.clutter_classes; ++c) {
    const auto loc = static_cast<std::size_t>(rng.below(n));
    const auto cls = static_cast<std::size_t>(rng.below(k));
    if (std::find(ex.planted_locs.begin(), ex.planted_locs.end(), loc) != ex.planted_locs.end()) continue;
    add_scaled_row(ex.features, loc, dirs.prototypes, cls, sig);
  }
  for (std::size_t p = 0; p < ex.planted_locs.size(); ++p) {
    const std::size_t loc = ex.planted_locs[p];
    add_scaled_row(ex.features, loc, dirs.prototypes, planted_classes[p], sig);
    for (std::size_t j = 0; j < f; ++j) ex.features(loc, j) += sig * cfg.objectness * dirs.objectness[j];
  }
  return ex;
}

Dataset empty_like(const PlantedTaskConfig& cfg) {
  Dataset d;
  d.n1 = cfg.n1;
  d.n2 = cfg.n2;
  d.f = cfg.f;
  d.classes = cfg.classes;
  d.multi_label = cfg.multi_label;
  return d;
}

}  // namespace

void PlantedTaskConfig::validate() const {
  if (n1 == 0 || n2 == 0 || f == 0 || classes == 0) throw ConfigError("grid, feature and class counts must be positive");
  if (train_samples == 0 || val_samples == 0) throw ConfigError("sample counts must be positive");
  if (classes > f) {
    throw ConfigError("classes (" + std::to_string(classes) + ") > f (" + std::to_string(f) +
                      "): prototypes cannot be distinguishable");
  }
  if (!(signal_strength >= 0.0) || !std::isfinite(signal_strength)) throw ConfigError("signal_strength must be >= 0");
  if (!(objectness >= 0.0) || !std::isfinite(objectness)) throw ConfigError("objectness must be >= 0");
  if (multi_label && max_planted == 0) throw ConfigError("max_planted must be >= 1");
  if (!(pose_sigma >= 0.0)) throw ConfigError("pose_sigma must be >= 0");
}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

Matrix Dataset::label_matrix() const {
  Matrix m(examples.size(), classes);
  for (std::size_t i = 0; i < examples.size(); ++i)
    for (auto c : examples[i].labels) m(i, c) = 1.0;
  return m;
}

Dataset Dataset::head(std::size_t count) const {
  Dataset d = *this;
  d.examples.resize(std::min(count, examples.size()));
  return d;
}

PlantedTask gen_planted(const PlantedTaskConfig& config) {
  config.validate();
  auto dirs = make_directions(config);
  PlantedTask task;
  task.train = empty_like(config);
  task.val = empty_like(config);
  task.train.examples.reserve(config.train_samples);
  task.val.examples.reserve(config.val_samples);
  for (std::size_t i = 0; i < config.train_samples; ++i) task.train.examples.push_back(make_example(config, dirs, i));
  for (std::size_t i = 0; i < config.val_samples; ++i) {
    task.val.examples.push_back(make_example(config, dirs, config.train_samples + i));
  }
  task.prototypes = std::move(dirs.prototypes);
  task.objectness = std::move(dirs.objectness);
  return task;
}

const std::vector<GridOffset>& keypoint_offsets() {
  static const std::vector<GridOffset> offsets = {
      {0, 0},  {-1, 0}, {1, 0},  {0, -1}, {0, 1},  {-1, -1}, {-1, 1}, {1, -1},
      {1, 1},  {-2, 0}, {2, 0},  {0, -2}, {0, 2},  {-2, -1}, {2, 1},  {-1, 2},
  };
  return offsets;
}

void gen_pose_targets(Dataset& dataset, double sigma) {
  if (!(sigma >= 0.0)) throw ValidationError("pose sigma must be >= 0");
  const auto& offsets = keypoint_offsets();
  const std::size_t n = dataset.locations();
  for (auto& ex : dataset.examples) {
    PoseTarget t{Matrix(n, kPoseKeypoints), Matrix(kPoseKeypoints, 1)};
    const auto centre = ex.planted_loc();
    const int prow = static_cast<int>(centre / dataset.n2);
    const int pcol = static_cast<int>(centre % dataset.n2);
    for (std::size_t j = 0; j < kPoseKeypoints; ++j) {
      const int kr = prow + offsets[j].drow;
      const int kc = pcol + offsets[j].dcol;
      if (kr < 0 || kc < 0 || kr >= static_cast<int>(dataset.n1) || kc >= static_cast<int>(dataset.n2)) continue;
      t.mask[j] = 1.0;
      for (std::size_t loc = 0; loc < n; ++loc) {
        const double dr = static_cast<double>(static_cast<int>(loc / dataset.n2) - kr);
        const double dc = static_cast<double>(static_cast<int>(loc % dataset.n2) - kc);
        const double d2 = dr * dr + dc * dc;
        t.heatmaps(loc, j) = sigma == 0.0 ? (d2 == 0.0 ? 1.0 : 0.0) : std::exp(-d2 / (2.0 * sigma * sigma));
      }
    }
    ex.pose = std::move(t);
  }
}

}  // namespace attnpool
