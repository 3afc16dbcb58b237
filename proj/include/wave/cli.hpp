#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "wave/bench.hpp"
#include "wave/dataset.hpp"
#include "wave/learngene.hpp"
#include "wave/lifecycle.hpp"
#include "wave/vit.hpp"

namespace wave {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitInput = 2,
  kExitIncompatible = 3,
  kExitDivergence = 4,
  kExitIo = 5,
};

int exit_code_for(const std::exception& e);

// Resolved run configuration. Every section is optional in the JSON file;
// missing keys take the defaults below, unknown keys are rejected.
struct RunConfig {
  DatasetSource dataset = SyntheticSpec{};
  ModelConfig model;

  std::size_t template_size = 16;
  BankCounts counts;

  CondenseConfig condense;
  bool aux_given = false;  // condense.aux set explicitly; otherwise the teacher's config
  DecompressConfig decompress;
  TrainOptions train;

  std::filesystem::path output_dir = "runs";
  std::optional<std::uint64_t> seed;

  // "experiment" section, used by sweep and ablate.
  std::optional<ExperimentSpec> experiment;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical snapshot with every default filled in; parse_run_config of the
// result reproduces the config.
nlohmann::json run_config_to_json(const RunConfig& config);

// Entry point of the `wave` tool. Never throws; returns an ExitCode.
int run_cli(int argc, char** argv);

}  // namespace wave
