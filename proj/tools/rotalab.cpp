// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rotalab/harness.hpp"
#include "rotalab/rotation.hpp"

int main(int argc, char** argv) {
  CLI::App app{"rotalab: rotated-basis optimizer experiments"};
  app.set_version_flag("--version", std::string(rotalab::kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  std::string output_root;
  app.add_option("--output-root", output_root,
                 std::string("Output root directory (overrides ") + rotalab::kOutputRootEnv + ")");

  std::string run_config;
  auto* run = app.add_subcommand("run", "Train every seed x rotation variant of a config or manifest");
  run->add_option("config", run_config, "Config file or manifest.json")->required();

  std::string eq_config;
  auto* eq = app.add_subcommand("equivariance", "Check rotation equivariance of the base optimizers");
  eq->add_option("config", eq_config, "Config file")->required();

  std::string diag_config;
  std::string checkpoint;
  auto* diag = app.add_subcommand("diagnose", "Run the diagnostics on a checkpoint");
  diag->add_option("config", diag_config, "Config file")->required();
  diag->add_option("--checkpoint", checkpoint, "Checkpoint written by 'run'")->required();

  rotalab::SampleRotationArgs sample;
  std::string scope = "global";
  std::string out_path;
  bool independent = false;
  auto* sr = app.add_subcommand("sample-rotation", "Compile a rotation and verify it");
  sr->add_option("--dim", sample.dim, "Dimension (optional when --layout is given)");
  sr->add_option("--block", sample.block, "Block dimension")->capture_default_str();
  sr->add_option("--scope", scope, "none|global|layer|output|input|svd")->capture_default_str();
  sr->add_option("--seed", sample.seed, "Seed")->capture_default_str();
  sr->add_option("--layout", sample.layout, "Layer layout, e.g. W0:4x8,b0:4");
  sr->add_flag("--independent-blocks", independent, "Sample every block independently");
  sr->add_option("--out", out_path, "Snapshot path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rotalab::exit_config;
  }

  rotalab::HarnessOptions options;
  if (!output_root.empty()) options.output_root = output_root;

  try {
    if (*run) return rotalab::cmd_run(run_config, options);
    if (*eq) return rotalab::cmd_equivariance(eq_config, options);
    if (*diag) return rotalab::cmd_diagnose(diag_config, checkpoint, options);
    if (*sr) {
      sample.scope = rotalab::parse_scope(scope);
      sample.shared_blocks = !independent;
      if (!out_path.empty()) sample.out = out_path;
      return rotalab::cmd_sample_rotation(sample, options);
    }
  } catch (const std::exception& e) {
    std::cerr << "rotalab: " << e.what() << "\n";
    return rotalab::exit_code_for(e);
  }
  return rotalab::exit_config;
}
