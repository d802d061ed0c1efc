#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "attnpool/synth.hpp"
#include "attnpool/train.hpp"

namespace attnpool {

// Everything a run needs, resolved from a config file plus overrides.
//
// File syntax is line oriented: `key = value`, `#` starts a comment, and a
// `[section]` header prefixes the following keys with `section.`. Keys:
//   seed
//   task.{n1,n2,f,classes,train_samples,val_samples,signal_strength,
//         clutter_classes,objectness,multi_label,max_planted,pose_sigma}
//   train.{head,rank,lr,momentum,weight_decay,batch_size,epochs,lambda_pose,
//          loss,hidden,bias}
//   sketch.{dim,signed_sqrt,l2_normalize}
// The single seed drives both data generation and parameter initialization.
struct RunConfig {
  std::uint64_t seed = 7;
  PlantedTaskConfig task;
  TrainConfig train;

  // Copies of task/train with `seed` applied.
  PlantedTaskConfig task_config() const;
  TrainConfig train_config() const;
  void validate() const;  // ConfigError
};

const std::vector<std::string>& config_keys();

// ConfigError (with the line number) on syntax errors, unknown keys,
// duplicate keys, and unparsable values.
RunConfig parse_config(std::string_view text, const RunConfig& base = {});
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});  // IoError if unreadable

// `key=value` with a fully qualified key.
void apply_override(RunConfig& config, std::string_view assignment);
void set_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_value(const RunConfig& config, std::string_view key);

// Replaces the seed with ATTNPOOL_SEED when that variable is set.
void apply_seed_env(RunConfig& config);

// Shortest text that parses back to the same double; "nan", "inf", "-inf"
// for non-finite values.
std::string format_number(double v);

// Canonical text form: every key, fixed order, shortest round-trip numbers.
// parse_config(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const RunConfig& config);

}  // namespace attnpool
