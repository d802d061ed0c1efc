#pragma once

#include <filesystem>

#include "attnpool/synth.hpp"

namespace attnpool {

// One split on disk:
//   meta.txt             n1, n2, f, classes, multi_label, examples
//   features.atnp        [m, n, f]
//   labels.tsv           index \t labels \t planted_locs, lists comma separated
//   pose_heatmaps.atnp   [m, n, 16]   only when pose targets are present
//   pose_mask.atnp       [m, 16]
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

// ValidationError when files disagree with meta.txt or with each other;
// IoError on missing or truncated files.
Dataset load_dataset(const std::filesystem::path& dir);

// gen output: <dir>/train, <dir>/val, the planted directions and the
// resolved config text.
void save_planted_task(const std::filesystem::path& dir, const PlantedTask& task, const std::string& config_text);

}  // namespace attnpool
