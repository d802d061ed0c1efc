#include "attnpool/heatmap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "attnpool/atnp.hpp"
#include "attnpool/errors.hpp"

namespace attnpool {

HeatmapImage to_heatmap(const Matrix& grid) {
  HeatmapImage img;
  img.height = grid.rows();
  img.width = grid.cols();
  const auto data = grid.data();
  const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  img.source_min = *lo;
  img.source_max = *hi;
  img.pixels.resize(data.size());
  const double range = img.source_max - img.source_min;
  for (std::size_t i = 0; i < data.size(); ++i) {
    img.pixels[i] = range > 0.0 ? static_cast<std::uint8_t>(std::lround((data[i] - img.source_min) / range * 255.0))
                                : std::uint8_t{128};
  }
  return img;
}

std::vector<std::uint8_t> encode_pgm(const HeatmapImage& image) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height) {
    throw ValidationError("encode_pgm: pixel count does not match " + std::to_string(image.width) + "x" +
                          std::to_string(image.height));
  }
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

HeatmapImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    if (pos >= bytes.size()) throw IoError("PGM header is truncated");
    ++pos;  // exactly one whitespace byte after each header field
    return t;
  };
  if (token() != "P5") throw ValidationError("not a binary PGM (expected P5)");
  HeatmapImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw ValidationError("PGM maxval must be 255");
  } catch (const std::logic_error&) {
    throw ValidationError("PGM header has a non-numeric field");
  }
  const std::size_t count = img.width * img.height;
  if (bytes.size() - pos < count) throw IoError("PGM pixel data is truncated");
  if (bytes.size() - pos > count) throw ValidationError("PGM has trailing bytes");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

void export_pgm(const HeatmapImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

HeatmapImage read_pgm(const std::filesystem::path& path) { return decode_pgm(atnp::read_file_bytes(path)); }

HeatmapImage montage(std::span<const HeatmapImage> panels) {
  if (panels.empty()) throw ValidationError("montage: no panels");
  HeatmapImage out;
  out.height = panels.front().height;
  for (const auto& p : panels) {
    if (p.height != out.height) throw ShapeError("montage: panel heights differ");
    out.width += p.width;
  }
  out.width += panels.size() - 1;
  out.pixels.assign(out.width * out.height, 255);
  std::size_t x0 = 0;
  for (const auto& p : panels) {
    for (std::size_t r = 0; r < p.height; ++r)
      std::copy_n(p.pixels.begin() + static_cast<std::ptrdiff_t>(r * p.width), p.width,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(r * out.width + x0));
    x0 += p.width + 1;
  }
  out.source_min = panels.front().source_min;
  out.source_max = panels.front().source_max;
  return out;
}

}  // namespace attnpool
