// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver behind the rotalab command line. Every run is a pure
// function of its configuration text, so a manifest (which embeds that text)
// replays to byte-identical CSV files.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rotalab/config.hpp"
#include "rotalab/diagnostics.hpp"
#include "rotalab/problem.hpp"
#include "rotalab/rotation.hpp"
#include "rotalab/snapshot.hpp"

namespace rotalab {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "ROTALAB_OUTPUT_ROOT";

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numeric = 3 };

/// Maps an exception escaping a command onto the documented exit codes.
int exit_code_for(const std::exception& e) noexcept;

struct HarnessOptions {
  // Overrides ROTALAB_OUTPUT_ROOT; both default to the working directory.
  std::optional<std::filesystem::path> output_root;
  std::ostream* log = nullptr;
};

std::filesystem::path resolve_output_root(const HarnessOptions& options);

/// Per-repetition seeds. Adding variants or repetitions never changes the
/// seeds of existing ones.
struct RunSeeds {
  std::uint64_t master = 0;
  std::size_t repetition = 0;
  std::uint64_t problem = 0;
  std::uint64_t batches = 0;
  std::uint64_t rotation = 0;
};

RunSeeds derive_run_seeds(const ExperimentConfig& cfg, std::size_t repetition,
                          RotationScope variant);

std::unique_ptr<Problem> build_problem(const ProblemConfig& cfg, std::uint64_t seed);

struct RunRecord {
  std::uint64_t seed = 0;
  std::string variant;
  std::filesystem::path dir;  // relative to the experiment directory
  double final_loss = 0.0;
  double iqr_log10_v = 0.0;
  bool failed = false;
  std::string failure;
};

struct ExperimentOutputs {
  std::filesystem::path dir;
  std::vector<RunRecord> runs;
  std::vector<std::filesystem::path> files;  // relative to dir, sorted
  bool any_failed = false;
};

/// Executes every (seed × variant) run of `cfg` below `dir` and writes the
/// manifest last.
ExperimentOutputs execute_experiment(const ExperimentConfig& cfg,
                                     const std::filesystem::path& dir);

/// Full diagnostics of one checkpoint; writes JSON and CSV files into `dir`
/// and returns the JSON report.
nlohmann::json diagnose_checkpoint(const ExperimentConfig& cfg, const Snapshot& snap,
                                   const std::filesystem::path& dir,
                                   std::vector<std::filesystem::path>* written = nullptr);

/// The rotations an equivariance check runs against.
std::vector<DenseMatrix> equivariance_rotations(const EquivarianceConfig& cfg, std::size_t dim);

struct SampleRotationArgs {
  std::size_t dim = 0;
  std::size_t block = 768;
  RotationScope scope = RotationScope::global;
  std::uint64_t seed = 0;
  std::string layout;  // optional layout string; defaults to one vector layer
  bool shared_blocks = true;
  std::optional<std::filesystem::path> out;
};

int cmd_run(const std::filesystem::path& config_or_manifest, const HarnessOptions& options);
int cmd_equivariance(const std::filesystem::path& config, const HarnessOptions& options);
int cmd_diagnose(const std::filesystem::path& config, const std::filesystem::path& checkpoint,
                 const HarnessOptions& options);
int cmd_sample_rotation(const SampleRotationArgs& args, const HarnessOptions& options);

/// FNV-1a 64 of the text, rendered as 16 hex digits.
std::string config_hash(std::string_view text);

}  // namespace rotalab
