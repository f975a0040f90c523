// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration. The file format is line oriented:
//
//   # comment
//   [section]
//   key = value            # trailing comments allowed
//   list = a, b, c
//
// Parsing is strict: unknown sections, unknown keys, duplicate keys and
// missing required keys are all ConfigErrors carrying a line and column.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rotalab/optim.hpp"
#include "rotalab/rotation.hpp"
#include "rotalab/testbeds.hpp"

namespace rotalab {

enum class ProblemKind { quadratic, mlp };
enum class RunMode { train, fig2 };
enum class EquivarianceKind { dense, identity, signed_permutation, planar };

struct ProblemConfig {
  ProblemKind kind = ProblemKind::quadratic;
  QuadraticSpec quadratic;
  MlpSpec mlp;
  // Fixed problem seed; when absent each repetition derives its own.
  std::optional<std::uint64_t> seed;
};

struct RotationConfig {
  std::vector<RotationScope> scopes{RotationScope::none};
  RotationSpec spec;  // scope and seed are filled per run
  bool reproject_moments = false;
};

struct RunConfig {
  std::string name = "experiment";
  RunMode mode = RunMode::train;
  std::size_t steps = 0;
  std::vector<std::uint64_t> seeds;
  std::size_t snapshot_every = 0;
  std::string output = "runs";
  bool diagnose = false;  // run the diagnostics on every final checkpoint
};

struct EquivarianceConfig {
  std::vector<BaseOptimizer> algs;  // defaults to the optimizer base
  EquivarianceKind kind = EquivarianceKind::dense;
  std::size_t rotations = 1;
  std::size_t steps = 100;
  double angle_deg = 45.0;
  std::uint64_t seed = 0;
  double tolerance = 1e-9;
};

struct DiagnosticsConfig {
  std::size_t trials = 1000;
  std::size_t rows = 16;
  std::size_t k = 32;
  std::size_t bins = 30;
  std::uint64_t seed = 0;
  bool stratified = false;
  // Probe rotations; "checkpoint" reuses the checkpoint's own rotation.
  std::vector<std::string> probes{"checkpoint"};
};

struct Fig2Config {
  double angle_deg = 45.0;
  std::size_t steps = 200;
  double sgd_alpha = 0.005;
  double sgd_momentum = 0.9;
  double adam_alpha = 0.05;
  std::vector<double> start{1.0, 1.0};
};

struct ExperimentConfig {
  ProblemConfig problem;
  BaseOptimizer base = BaseOptimizer::adamw;
  OptimizerConfig optimizer;
  RotationConfig rotation;
  RunConfig run;
  EquivarianceConfig equivariance;
  DiagnosticsConfig diagnostics;
  Fig2Config fig2;
  std::string source;  // the verbatim config text
};

std::string_view to_string(ProblemKind k) noexcept;
std::string_view to_string(EquivarianceKind k) noexcept;

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace rotalab
