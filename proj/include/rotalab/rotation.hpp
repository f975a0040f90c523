// SPDX-License-Identifier: Apache-2.0
//
// Rotation specs and their compiled orthogonal operators.
//
// A random-scope rotation splits the flat parameter vector into partitions
// (global / per layer / per output neuron / per input neuron). Inside each
// partition of size s the operator is
//
//     x  ->  Pᵀ · (R_n ⊕ … ⊕ R_n ⊕ R_res) · P · x
//
// with P a random permutation of the partition, floor(s/n) copies of an n×n
// Haar block and a residual Haar block of size s mod n. Memory is O(n² + d)
// and application costs O(n·d). The svd scope instead carries per-layer
// factors (U, V) and maps a layer matrix G to Uᵀ·G·V.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rotalab/kernels.hpp"
#include "rotalab/layout.hpp"
#include "rotalab/linalg.hpp"
#include "rotalab/random.hpp"

namespace rotalab {

enum class RotationScope { none, global, layer, output, input, svd };

std::string_view to_string(RotationScope scope) noexcept;
RotationScope parse_scope(std::string_view text);

struct RotationSpec {
  RotationScope scope = RotationScope::none;
  std::size_t block_dim = 768;
  std::uint64_t seed = 0;
  // One Haar sample per block size, reused by every block of that size.
  bool shared_blocks = true;
  std::size_t refresh_interval = 200;
  std::optional<std::vector<std::string>> layer_mask;
  // Skip the inverse permutation after the block product (and the matching
  // forward permutation on the way back).
  bool omit_permutation_undo = false;

  void validate() const;
};

using IndexSet = std::vector<std::size_t>;

/// Index sets within which a scope rotates. Unmasked layers are excluded.
/// scope = none yields no sets; scope = svd yields one set per matrix layer.
std::vector<IndexSet> partition_indices(
    const ParamLayout& layout, RotationScope scope,
    const std::optional<std::vector<std::string>>& layer_mask = std::nullopt);

struct BlockSlot {
  std::size_t offset = 0;  // within the permuted partition
  std::size_t pool_index = 0;
};

struct PartitionOperator {
  IndexSet indices;
  Permutation permutation;
  std::vector<BlockSlot> blocks;
};

struct SvdFactors {
  std::size_t layer = 0;
  std::size_t start = 0;
  DenseMatrix u;  // rows × rows
  DenseMatrix v;  // cols × cols
};

struct PartitionSummary {
  std::size_t size = 0;
  std::size_t full_blocks = 0;
  std::size_t block_dim = 0;
  std::size_t residual = 0;
};

class CompiledRotation {
 public:
  struct Parts {
    RotationScope scope = RotationScope::none;
    std::size_t dim = 0;
    std::size_t block_dim = 0;
    bool omit_permutation_undo = false;
    std::vector<DenseMatrix> pool;
    std::vector<PartitionOperator> partitions;
    std::vector<SvdFactors> factors;
  };

  CompiledRotation() = default;
  explicit CompiledRotation(Parts parts);
  CompiledRotation(const CompiledRotation& other);
  CompiledRotation& operator=(const CompiledRotation& other);
  CompiledRotation(CompiledRotation&&) noexcept = default;
  CompiledRotation& operator=(CompiledRotation&&) noexcept = default;

  static CompiledRotation identity(std::size_t dim);
  /// Wraps an explicit d×d orthogonal matrix as a single global block.
  static CompiledRotation dense(DenseMatrix r);

  RotationScope scope() const noexcept { return parts_.scope; }
  std::size_t dim() const noexcept { return parts_.dim; }
  std::size_t block_dim() const noexcept { return parts_.block_dim; }
  bool omit_permutation_undo() const noexcept { return parts_.omit_permutation_undo; }
  bool is_identity() const noexcept;
  const Parts& parts() const noexcept { return parts_; }
  const std::vector<DenseMatrix>& pool() const noexcept { return parts_.pool; }
  const std::vector<PartitionOperator>& partitions() const noexcept {
    return parts_.partitions;
  }
  const std::vector<SvdFactors>& factors() const noexcept { return parts_.factors; }

  DenseVector apply(std::span<const double> g,
                    kernels::Exec exec = kernels::Exec::parallel) const;
  DenseVector apply_inverse(std::span<const double> u,
                            kernels::Exec exec = kernels::Exec::parallel) const;

  std::vector<PartitionSummary> summary() const;

  /// Materializes the d×d operator by applying it to canonical basis vectors.
  DenseMatrix to_dense() const;

 private:
  void derive();
  void transform(std::span<const double> in, std::span<double> out, bool inverse,
                 kernels::Exec exec) const;
  void transform_svd(std::span<const double> in, std::span<double> out, bool inverse) const;

  Parts parts_;
  std::vector<std::size_t> gather_;
  std::vector<std::size_t> scatter_;
  std::vector<kernels::BlockRef> block_refs_;
  std::vector<kernels::RowTile> tiles_;
};

/// Samples the operator described by `spec`. Partitions smaller than
/// block_dim become a single Haar block of their own size.
CompiledRotation compile(const RotationSpec& spec, const ParamLayout& layout,
                         RandomStream& rng);

/// Replaces each SVD factor pair with (U, V) from the SVD of the matching
/// layer gradient, given in factor order. A zero gradient yields identity
/// factors.
CompiledRotation svd_refresh(const CompiledRotation& rot,
                             std::span<const DenseMatrix> per_layer_grads);
CompiledRotation svd_refresh(const CompiledRotation& rot, const ParamLayout& layout,
                             std::span<const double> flat_grad);

/// Worst per-layer ‖offdiag(Uᵀ·G·V)‖_F / ‖G‖_F over the svd factors.
double svd_offdiagonal_ratio(const CompiledRotation& rot, const ParamLayout& layout,
                             std::span<const double> flat_grad);

}  // namespace rotalab
