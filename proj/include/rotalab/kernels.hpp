// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops. Each kernel has a serial reference and an
// OpenMP version; every output element is produced by exactly one thread with
// the same summation order, so the two agree bit for bit.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rotalab/linalg.hpp"

namespace rotalab::kernels {

enum class Exec { serial, parallel };

/// A square block acting on buffer[offset, offset + matrix->rows()).
struct BlockRef {
  std::size_t offset = 0;
  const DenseMatrix* matrix = nullptr;
};

/// Contiguous run of output rows inside one block; the unit of parallel work.
struct RowTile {
  std::size_t block = 0;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
};

std::vector<RowTile> make_row_tiles(std::span<const BlockRef> blocks,
                                    std::size_t tile_rows = 32);

/// y = (⊕ blocks)·x, or the transpose when `transpose` is set. Entries of y
/// not covered by any block are left untouched.
void apply_blocks_serial(std::span<const BlockRef> blocks, std::span<const double> x,
                         std::span<double> y, bool transpose);
void apply_blocks_parallel(std::span<const BlockRef> blocks,
                           std::span<const RowTile> tiles, std::span<const double> x,
                           std::span<double> y, bool transpose);

void matvec_serial(const DenseMatrix& a, std::span<const double> x, std::span<double> y);
void matvec_parallel(const DenseMatrix& a, std::span<const double> x, std::span<double> y);

/// y = aᵀ·x.
void matvec_transposed_serial(const DenseMatrix& a, std::span<const double> x,
                              std::span<double> y);
void matvec_transposed_parallel(const DenseMatrix& a, std::span<const double> x,
                                std::span<double> y);

/// Below this many multiply-adds the parallel entry points run serially.
inline constexpr std::size_t kParallelThreshold = 1u << 14;

}  // namespace rotalab::kernels
