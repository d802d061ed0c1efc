#include "attnpool/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "attnpool/atnp.hpp"
#include "attnpool/errors.hpp"

namespace attnpool {

namespace {

bool stored_as_vector(const std::string& name) { return !name.empty() && name.front() == 'b'; }

Shape stored_shape(const NamedTensor& t) {
  return stored_as_vector(t.name) ? Shape{t.value.size()} : t.value.shape();
}

std::string dims_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.ndim(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ValidationError("manifest: '" + key + "' is not an integer: '" + v + "'");
  }
  return out;
}

struct Manifest {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, std::string>> tensors;  // in file order

  const std::string& at(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw ValidationError("manifest: missing key '" + key + "'");
    return it->second;
  }
};

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ValidationError("manifest: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key.rfind("tensor.", 0) == 0) {
      m.tensors.emplace_back(key.substr(7), value);
    } else {
      m.values[key] = value;
    }
  }
  return m;
}

}  // namespace

std::string checkpoint_manifest(const HeadParams& params) {
  std::ostringstream os;
  os << "format_version = " << kCheckpointVersion << '\n'
     << "head = " << to_string(params.kind) << '\n'
     << "features = " << params.features << '\n'
     << "classes = " << params.classes << '\n'
     << "rank = " << params.rank << '\n'
     << "hidden = " << params.hidden << '\n'
     << "sketch_dim = " << params.sketch_dim << '\n'
     << "seed = " << params.seed << '\n'
     << "bias = " << (params.bias ? "true" : "false") << '\n';
  for (const auto& t : params.tensors) os << "tensor." << t.name << " = " << dims_text(stored_shape(t)) << '\n';
  return os.str();
}

void save_checkpoint(const std::filesystem::path& dir, const HeadParams& params, const RunConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  write_text(dir / "manifest.txt", checkpoint_manifest(params));
  write_text(dir / "config.txt", serialize_config(config));
  for (const auto& t : params.tensors) atnp::save(dir / (t.name + ".atnp"), t.value.reshaped(stored_shape(t)));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const Manifest m = parse_manifest(read_text(dir / "manifest.txt"));
  const std::size_t version = to_size("format_version", m.at("format_version"));
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint format_version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ck;
  ck.config = load_config(dir / "config.txt");

  // Rebuild the expected layout from the manifest header, then fill it.
  TrainConfig tc;
  tc.head = parse_head_kind(m.at("head"));
  tc.rank = to_size("rank", m.at("rank"));
  tc.hidden = std::max<std::size_t>(1, to_size("hidden", m.at("hidden")));
  tc.sketch_dim = std::max<std::size_t>(1, to_size("sketch_dim", m.at("sketch_dim")));
  tc.seed = to_size("seed", m.at("seed"));
  tc.bias = m.at("bias") == "true";
  try {
    tc.validate();
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  const std::size_t f = to_size("features", m.at("features"));
  const std::size_t k = to_size("classes", m.at("classes"));
  if (f == 0 || k == 0) throw ValidationError("manifest: features and classes must be positive");
  ck.params = init_head(tc, f, k);

  if (m.tensors.size() != ck.params.tensors.size()) {
    throw ValidationError("manifest lists " + std::to_string(m.tensors.size()) + " tensors; a " +
                          std::string(to_string(tc.head)) + " head has " +
                          std::to_string(ck.params.tensors.size()));
  }
  for (std::size_t i = 0; i < m.tensors.size(); ++i) {
    auto& t = ck.params.tensors[i];
    const auto& [name, dims] = m.tensors[i];
    const Shape expected = stored_shape(t);
    if (name != t.name) throw ValidationError("manifest tensor " + std::to_string(i) + " is '" + name + "', expected '" + t.name + "'");
    if (dims != dims_text(expected)) {
      throw ValidationError("manifest dims for '" + name + "' are [" + dims + "], expected " + expected.to_string());
    }
    const Matrix blob = atnp::load(dir / (name + ".atnp"));
    if (!(blob.shape() == expected)) {
      throw ValidationError("tensor file '" + name + ".atnp' has shape " + blob.shape().to_string() +
                            ", manifest says " + expected.to_string());
    }
    t.value = blob.reshaped(t.value.shape());
  }
  return ck;
}

}  // namespace attnpool
