#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qarerank/features.h"
#include "qarerank/gbdt.h"
#include "qarerank/pipeline.h"

namespace qarerank {

// Contents of a training run file. The format is a small TOML subset:
//
//   # comment
//   [data]
//   clean = "clean.json"
//   [shifts]
//   shift_a = "shift_a.json"
//   [train]
//   mode = "single_mixed"
//   shift = "shift_a"
//   [features]
//   lambda = 1.3
//   [gbdt]
//   num_rounds = 160
//
// Relative paths resolve against the config file's directory. Unknown
// sections and keys are rejected.
struct RunConfig {
  std::filesystem::path clean_path;
  std::vector<std::pair<std::string, std::filesystem::path>> shift_paths;
  TrainMode mode = TrainMode::kClean;
  std::string shift_name;
  std::size_t single_count = kDefaultSingleMixCount;
  std::size_t count_each = kDefaultMixCountEach;
  double clean_fraction = 0.5;
  std::uint64_t seed = 42;
  FeatureConfig features;
  TrainParams params;
  std::optional<int> threads;
};

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});

// Parses the file and checks that every referenced dump exists.
RunConfig load_run_config(const std::filesystem::path& path);

// Loads the referenced dumps into a training spec.
TrainSpec make_train_spec(const RunConfig& config);

}  // namespace qarerank
