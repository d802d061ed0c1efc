#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "attnpool/tensor.hpp"

namespace attnpool {

// 8-bit grayscale rendering of one spatial map, row-major, top row first.
struct HeatmapImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
  double source_min = 0.0;
  double source_max = 0.0;
};

// Linear rescale of a height x width grid: min -> 0, max -> 255, rounded to
// nearest. A constant grid renders as 128 everywhere.
HeatmapImage to_heatmap(const Matrix& grid);

// Binary PGM: "P5\n<w> <h>\n255\n" followed by the pixel bytes.
std::vector<std::uint8_t> encode_pgm(const HeatmapImage& image);
HeatmapImage decode_pgm(std::span<const std::uint8_t> bytes);  // ValidationError / IoError
void export_pgm(const HeatmapImage& image, const std::filesystem::path& path);
HeatmapImage read_pgm(const std::filesystem::path& path);

// Panels side by side, separated by a one-pixel white gutter. All panels
// must share a height.
HeatmapImage montage(std::span<const HeatmapImage> panels);

}  // namespace attnpool
