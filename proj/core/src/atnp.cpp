#include "attnpool/atnp.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "attnpool/errors.hpp"

namespace attnpool::atnp {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("truncated ATNP data");
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  void expect_magic() {
    need(4);
    if (std::memcmp(bytes_.data(), kMagic, 4) != 0) throw ValidationError("not an ATNP file (bad magic)");
    pos_ = 4;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const Matrix& m) {
  const auto& dims = m.shape().dims();
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * dims.size() + 8 * m.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : m.data()) put_f64(out, v);
  return out;
}

Matrix decode(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.expect_magic();
  const auto version = r.u32();
  if (version != kVersion) throw ValidationError("unsupported ATNP version " + std::to_string(version));
  const auto ndim = r.u32();
  if (ndim == 0 || ndim > 8) throw ValidationError("implausible ATNP rank " + std::to_string(ndim));
  std::vector<std::size_t> dims(ndim);
  for (auto& d : dims) {
    d = r.u32();
    if (d == 0) throw ValidationError("ATNP header has a zero dimension");
  }
  Shape shape(dims);
  const std::size_t n = shape.numel();
  if (r.remaining() / 8 < n) throw IoError("truncated ATNP data: expected " + std::to_string(n) + " values");
  std::vector<double> values(n);
  for (auto& v : values) v = r.f64();
  if (r.remaining() != 0) throw ValidationError("trailing bytes after ATNP payload");
  return Matrix(std::move(shape), values);
}

void write(std::ostream& os, const Matrix& m) {
  const auto bytes = encode(m);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing ATNP stream");
}

Matrix read(std::istream& is) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

void save(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write(os, m);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Matrix load(const std::filesystem::path& path) { return decode(read_file_bytes(path)); }

}  // namespace attnpool::atnp
