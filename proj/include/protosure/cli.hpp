#pragma once

// Command-line front end. Exit codes: 0 ok, 2 config or usage error,
// 3 training failure, 4 I/O or provider failure.

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "protosure/config.hpp"

namespace protosure {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitTraining = 3, kExitIo = 4 };

// Training run description. Paths are resolved against the config file's
// directory. Every TrainConfig key is accepted at top level.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path bundles;
  std::optional<std::filesystem::path> attributions;
  std::optional<std::filesystem::path> predictions;
  std::filesystem::path model;
  std::optional<std::filesystem::path> report;
  std::optional<std::filesystem::path> checkpoint;  // directory for per-epoch archives
  double holdout_fraction = 0.0;
  std::optional<std::size_t> num_classes;
  TrainConfig train;
};

// Throws Error(InvalidConfig) naming the offending key.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
// Checks that every input path exists and output directories are writable.
void validate_run_paths(const RunConfig& config);

int run_cli(int argc, char** argv);

}  // namespace protosure
