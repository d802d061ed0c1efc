#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "attnpool/config.hpp"
#include "attnpool/train.hpp"

namespace attnpool {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// A checkpoint is a directory:
//   manifest.txt   key = value lines: format_version, head, dims, seed, and
//                  one `tensor.<name> = <dims>` line per parameter tensor
//   config.txt     the fully resolved run config
//   <name>.atnp    one blob per tensor; vectors are stored 1-D
struct Checkpoint {
  HeadParams params;
  RunConfig config;
};

std::string checkpoint_manifest(const HeadParams& params);

void save_checkpoint(const std::filesystem::path& dir, const HeadParams& params, const RunConfig& config);

// ValidationError on a version mismatch, an unknown head, or any tensor
// whose dims disagree with the manifest or with the head's layout.
// IoError on missing or truncated files.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace attnpool
