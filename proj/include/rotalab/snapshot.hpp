// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoints: a compiled rotation plus, optionally, the parameters
// and optimizer state it was trained with. Little-endian, starting with the
// magic bytes "ROTL1\0\0\0".

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "rotalab/linalg.hpp"
#include "rotalab/optim.hpp"
#include "rotalab/rotation.hpp"

namespace rotalab {

struct Snapshot {
  CompiledRotation rotation;
  std::optional<DenseVector> params;
  std::optional<OptimizerState> state;
  // −α·Rᵀ·u of the last training step (weight decay excluded).
  std::optional<DenseVector> last_update;
  // Free-form "key=value" lines describing the run that wrote the file.
  std::string label;
};

std::string encode_snapshot(const Snapshot& snap);
/// Throws Error(io) on a bad magic, truncation or inconsistent contents.
Snapshot decode_snapshot(const std::string& bytes);

void save_snapshot(const std::filesystem::path& path, const Snapshot& snap);
Snapshot load_snapshot(const std::filesystem::path& path);

}  // namespace rotalab
