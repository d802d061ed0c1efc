#include "attnpool/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "attnpool/atnp.hpp"
#include "attnpool/errors.hpp"
#include "attnpool/pose_head.hpp"

namespace attnpool {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::size_t to_size(std::string_view what, std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) {
    throw ValidationError(std::string(what) + ": expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

std::vector<std::size_t> split_list(std::string_view what, std::string_view s) {
  std::vector<std::size_t> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(to_size(what, s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s = s.substr(comma + 1);
  }
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto tab = line.find('\t');
    out.push_back(line.substr(0, tab));
    if (tab == std::string_view::npos) break;
    line = line.substr(tab + 1);
  }
  return out;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  if (data.size() == 0) throw ValidationError("save_dataset: empty dataset");
  make_dir(dir);
  const std::size_t m = data.size(), n = data.locations(), f = data.f;
  std::ostringstream meta;
  meta << "n1 = " << data.n1 << "\nn2 = " << data.n2 << "\nf = " << f << "\nclasses = " << data.classes
       << "\nmulti_label = " << (data.multi_label ? "true" : "false") << "\nexamples = " << m << '\n';
  write_text(dir / "meta.txt", meta.str());

  Matrix features(Shape{m, n, f});
  std::string labels;
  const bool has_pose = data.examples.front().pose.has_value();
  Matrix heatmaps(Shape{m, n, kPoseKeypoints});
  Matrix masks(Shape{m, kPoseKeypoints});
  for (std::size_t i = 0; i < m; ++i) {
    const auto& ex = data.examples[i];
    if (ex.features.rows() != n || ex.features.cols() != f) {
      throw ShapeError("save_dataset: example " + std::to_string(i) + " has shape " + ex.features.shape().to_string());
    }
    std::copy(ex.features.data().begin(), ex.features.data().end(), features.data().begin() + static_cast<std::ptrdiff_t>(i * n * f));
    labels += std::to_string(i) + "\t" + join(ex.labels) + "\t" + join(ex.planted_locs) + "\n";
    if (has_pose) {
      if (!ex.pose) throw ValidationError("save_dataset: pose targets present on some examples only");
      const auto& hm = ex.pose->heatmaps.data();
      std::copy(hm.begin(), hm.end(), heatmaps.data().begin() + static_cast<std::ptrdiff_t>(i * n * kPoseKeypoints));
      for (std::size_t j = 0; j < kPoseKeypoints; ++j) masks(i, j) = ex.pose->mask[j];
    }
  }
  atnp::save(dir / "features.atnp", features);
  write_text(dir / "labels.tsv", labels);
  if (has_pose) {
    atnp::save(dir / "pose_heatmaps.atnp", heatmaps);
    atnp::save(dir / "pose_mask.atnp", masks);
  } else {
    std::filesystem::remove(dir / "pose_heatmaps.atnp");
    std::filesystem::remove(dir / "pose_mask.atnp");
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::map<std::string, std::string, std::less<>> meta;
  {
    std::istringstream in(read_text(dir / "meta.txt"));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw ValidationError("meta.txt: malformed line '" + line + "'");
      meta[line.substr(0, eq)] = line.substr(eq + 3);
    }
  }
  auto get = [&](std::string_view key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) throw ValidationError("meta.txt: missing '" + std::string(key) + "'");
    return it->second;
  };
  Dataset d;
  d.n1 = to_size("meta n1", get("n1"));
  d.n2 = to_size("meta n2", get("n2"));
  d.f = to_size("meta f", get("f"));
  d.classes = to_size("meta classes", get("classes"));
  d.multi_label = get("multi_label") == "true";
  const std::size_t m = to_size("meta examples", get("examples"));
  const std::size_t n = d.locations();
  if (n == 0 || d.f == 0 || d.classes == 0 || m == 0) throw ValidationError("meta.txt: dims must be positive");

  const Matrix features = atnp::load(dir / "features.atnp");
  if (!(features.shape() == Shape{m, n, d.f})) {
    throw ValidationError("features.atnp has shape " + features.shape().to_string() + ", meta.txt implies " +
                          Shape{m, n, d.f}.to_string());
  }

  std::istringstream labels(read_text(dir / "labels.tsv"));
  std::string line;
  d.examples.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::getline(labels, line)) throw IoError("labels.tsv is truncated at row " + std::to_string(i));
    const auto cols = split_tabs(line);
    if (cols.size() != 3) throw ValidationError("labels.tsv row " + std::to_string(i) + ": expected 3 columns");
    if (to_size("labels.tsv index", cols[0]) != i) throw ValidationError("labels.tsv rows out of order at " + std::to_string(i));
    auto& ex = d.examples[i];
    ex.labels = split_list("labels.tsv labels", cols[1]);
    ex.planted_locs = split_list("labels.tsv planted_locs", cols[2]);
    if (!std::is_sorted(ex.labels.begin(), ex.labels.end()) ||
        std::adjacent_find(ex.labels.begin(), ex.labels.end()) != ex.labels.end()) {
      throw ValidationError("labels.tsv row " + std::to_string(i) + ": labels must be sorted and distinct");
    }
    if (!d.multi_label && (ex.labels.size() != 1 || ex.planted_locs.size() != 1)) {
      throw ValidationError("labels.tsv row " + std::to_string(i) + ": single-label data needs one label and one location");
    }
    ex.label = ex.labels.front();
    for (auto c : ex.labels) {
      if (c >= d.classes) throw ValidationError("labels.tsv row " + std::to_string(i) + ": class out of range");
    }
    for (auto l : ex.planted_locs) {
      if (l >= n) throw ValidationError("labels.tsv row " + std::to_string(i) + ": location out of range");
    }
    ex.features = features.slice(i);
  }
  if (std::getline(labels, line) && !line.empty()) throw ValidationError("labels.tsv has more rows than meta.txt");

  if (std::filesystem::exists(dir / "pose_heatmaps.atnp")) {
    const Matrix heatmaps = atnp::load(dir / "pose_heatmaps.atnp");
    const Matrix masks = atnp::load(dir / "pose_mask.atnp");
    if (!(heatmaps.shape() == Shape{m, n, kPoseKeypoints}) || !(masks.shape() == Shape{m, kPoseKeypoints})) {
      throw ValidationError("pose target files disagree with meta.txt");
    }
    for (std::size_t i = 0; i < m; ++i) {
      PoseTarget t{heatmaps.slice(i), Matrix(kPoseKeypoints, 1)};
      for (std::size_t j = 0; j < kPoseKeypoints; ++j) t.mask[j] = masks(i, j);
      d.examples[i].pose = std::move(t);
    }
  }
  return d;
}

void save_planted_task(const std::filesystem::path& dir, const PlantedTask& task, const std::string& config_text) {
  make_dir(dir);
  save_dataset(dir / "train", task.train);
  save_dataset(dir / "val", task.val);
  atnp::save(dir / "prototypes.atnp", task.prototypes);
  atnp::save(dir / "objectness.atnp", task.objectness);
  write_text(dir / "config.txt", config_text);
}

}  // namespace attnpool
