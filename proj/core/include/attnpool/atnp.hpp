#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "attnpool/tensor.hpp"

namespace attnpool::atnp {

// On-disk layout, all integers little-endian:
//   "ATNP"  u32 version(=1)  u32 ndim  ndim x u32 dims  numel x f64 values
inline constexpr char kMagic[4] = {'A', 'T', 'N', 'P'};
inline constexpr std::uint32_t kVersion = 1;

std::vector<std::uint8_t> encode(const Matrix& m);
// Throws IoError on truncation and ValidationError on a bad header.
Matrix decode(const std::vector<std::uint8_t>& bytes);

void write(std::ostream& os, const Matrix& m);
Matrix read(std::istream& is);

void save(const std::filesystem::path& path, const Matrix& m);
Matrix load(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace attnpool::atnp
