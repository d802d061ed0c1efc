#include "attnpool/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "attnpool/errors.hpp"

namespace attnpool {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("'" + std::string(key) + "' expects a finite number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("'" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

#define ATTNPOOL_UINT_FIELD(name, member)                                                         \
  {                                                                                               \
    name, Field {                                                                                 \
      [](const RunConfig& c) { return std::to_string(c.member); },                                \
          [](RunConfig& c, std::string_view k, std::string_view v) {                              \
            c.member = parse_unsigned<std::decay_t<decltype(c.member)>>(k, v);                    \
          }                                                                                       \
    }                                                                                             \
  }
#define ATTNPOOL_DOUBLE_FIELD(name, member)                                                       \
  {                                                                                               \
    name, Field {                                                                                 \
      [](const RunConfig& c) { return format_number(c.member); },                                 \
          [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_double(k, v); } \
    }                                                                                             \
  }
#define ATTNPOOL_BOOL_FIELD(name, member)                                                         \
  {                                                                                               \
    name, Field {                                                                                 \
      [](const RunConfig& c) { return format_bool(c.member); },                                   \
          [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_bool(k, v); } \
    }                                                                                             \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      ATTNPOOL_UINT_FIELD("seed", seed),
      ATTNPOOL_UINT_FIELD("task.n1", task.n1),
      ATTNPOOL_UINT_FIELD("task.n2", task.n2),
      ATTNPOOL_UINT_FIELD("task.f", task.f),
      ATTNPOOL_UINT_FIELD("task.classes", task.classes),
      ATTNPOOL_UINT_FIELD("task.train_samples", task.train_samples),
      ATTNPOOL_UINT_FIELD("task.val_samples", task.val_samples),
      ATTNPOOL_DOUBLE_FIELD("task.signal_strength", task.signal_strength),
      ATTNPOOL_UINT_FIELD("task.clutter_classes", task.clutter_classes),
      ATTNPOOL_DOUBLE_FIELD("task.objectness", task.objectness),
      ATTNPOOL_BOOL_FIELD("task.multi_label", task.multi_label),
      ATTNPOOL_UINT_FIELD("task.max_planted", task.max_planted),
      ATTNPOOL_DOUBLE_FIELD("task.pose_sigma", task.pose_sigma),
      {"train.head", Field{[](const RunConfig& c) { return std::string(to_string(c.train.head)); },
                           [](RunConfig& c, std::string_view, std::string_view v) {
                             c.train.head = parse_head_kind(v);
                           }}},
      ATTNPOOL_UINT_FIELD("train.rank", train.rank),
      ATTNPOOL_DOUBLE_FIELD("train.lr", train.lr),
      ATTNPOOL_DOUBLE_FIELD("train.momentum", train.momentum),
      ATTNPOOL_DOUBLE_FIELD("train.weight_decay", train.weight_decay),
      ATTNPOOL_UINT_FIELD("train.batch_size", train.batch_size),
      ATTNPOOL_UINT_FIELD("train.epochs", train.epochs),
      ATTNPOOL_DOUBLE_FIELD("train.lambda_pose", train.lambda_pose),
      {"train.loss", Field{[](const RunConfig& c) { return std::string(to_string(c.train.loss)); },
                           [](RunConfig& c, std::string_view, std::string_view v) {
                             c.train.loss = parse_loss_kind(v);
                           }}},
      ATTNPOOL_UINT_FIELD("train.hidden", train.hidden),
      ATTNPOOL_BOOL_FIELD("train.bias", train.bias),
      ATTNPOOL_UINT_FIELD("sketch.dim", train.sketch_dim),
      ATTNPOOL_BOOL_FIELD("sketch.signed_sqrt", train.cbp.signed_sqrt),
      ATTNPOOL_BOOL_FIELD("sketch.l2_normalize", train.cbp.l2_normalize),
  };
  return table;
}

#undef ATTNPOOL_UINT_FIELD
#undef ATTNPOOL_DOUBLE_FIELD
#undef ATTNPOOL_BOOL_FIELD

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

PlantedTaskConfig RunConfig::task_config() const {
  PlantedTaskConfig t = task;
  t.seed = seed;
  return t;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  task_config().validate();
  train_config().validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : fields()) out.push_back(name);
    return out;
  }();
  return keys;
}

void set_value(RunConfig& config, std::string_view key, std::string_view value) {
  field(key).set(config, key, value);
}

std::string get_value(const RunConfig& config, std::string_view key) { return field(key).get(config); }

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  set_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_config(std::string_view text, const RunConfig& base) {
  RunConfig config = base;
  std::string section;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const auto local = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (local.empty()) throw ConfigError(where + "missing key");
    const std::string key = section.empty() ? std::string(local) : section + "." + std::string(local);
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

void apply_seed_env(RunConfig& config) {
  const char* env = std::getenv("ATTNPOOL_SEED");
  if (env == nullptr) return;
  config.seed = parse_unsigned<std::uint64_t>("ATTNPOOL_SEED", trim(env));
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& [name, f] : fields()) {
    const auto dot = name.find('.');
    const std::string sec = dot == std::string::npos ? "" : name.substr(0, dot);
    const std::string local = dot == std::string::npos ? name : name.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += local + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace attnpool
