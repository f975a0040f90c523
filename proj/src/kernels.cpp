// SPDX-License-Identifier: Apache-2.0

#include "rotalab/kernels.hpp"

#include <algorithm>

#include "rotalab/error.hpp"

namespace rotalab::kernels {

namespace {

inline void block_row(const BlockRef& b, std::size_t r, std::span<const double> x,
                      std::span<double> y, bool transpose) {
  const DenseMatrix& m = *b.matrix;
  const std::size_t n = m.rows();
  const double* xs = x.data() + b.offset;
  double s = 0.0;
  if (!transpose) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < n; ++c) s += row[c] * xs[c];
  } else {
    for (std::size_t c = 0; c < n; ++c) s += m(c, r) * xs[c];
  }
  y[b.offset + r] = s;
}

void check_blocks(std::span<const BlockRef> blocks, std::span<const double> x,
                  std::span<double> y) {
  require(x.size() == y.size(), ErrorKind::length_mismatch,
          "apply_blocks: buffer length mismatch");
  for (const auto& b : blocks)
    require(b.matrix && b.matrix->rows() == b.matrix->cols() &&
                b.offset + b.matrix->rows() <= x.size(),
            ErrorKind::length_mismatch, "apply_blocks: block out of range");
}

}  // namespace

std::vector<RowTile> make_row_tiles(std::span<const BlockRef> blocks,
                                    std::size_t tile_rows) {
  tile_rows = std::max<std::size_t>(tile_rows, 1);
  std::vector<RowTile> tiles;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::size_t n = blocks[b].matrix->rows();
    for (std::size_t r = 0; r < n; r += tile_rows)
      tiles.push_back({b, r, std::min(n, r + tile_rows)});
  }
  return tiles;
}

void apply_blocks_serial(std::span<const BlockRef> blocks, std::span<const double> x,
                         std::span<double> y, bool transpose) {
  check_blocks(blocks, x, y);
  for (const auto& b : blocks)
    for (std::size_t r = 0; r < b.matrix->rows(); ++r) block_row(b, r, x, y, transpose);
}

void apply_blocks_parallel(std::span<const BlockRef> blocks,
                           std::span<const RowTile> tiles, std::span<const double> x,
                           std::span<double> y, bool transpose) {
  check_blocks(blocks, x, y);
  std::size_t work = 0;
  for (const auto& b : blocks) work += b.matrix->size();
  if (work < kParallelThreshold) {
    apply_blocks_serial(blocks, x, y, transpose);
    return;
  }
  const auto count = static_cast<std::ptrdiff_t>(tiles.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t t = 0; t < count; ++t) {
    const RowTile& tile = tiles[static_cast<std::size_t>(t)];
    const BlockRef& b = blocks[tile.block];
    for (std::size_t r = tile.row_begin; r < tile.row_end; ++r)
      block_row(b, r, x, y, transpose);
  }
}

void matvec_serial(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
  require(a.cols() == x.size() && a.rows() == y.size(), ErrorKind::length_mismatch,
          "matvec: length mismatch");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

void matvec_parallel(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
  require(a.cols() == x.size() && a.rows() == y.size(), ErrorKind::length_mismatch,
          "matvec: length mismatch");
  if (a.size() < kParallelThreshold) {
    matvec_serial(a, x, y);
    return;
  }
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto row = a.row(static_cast<std::size_t>(i));
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += row[j] * x[j];
    y[static_cast<std::size_t>(i)] = s;
  }
}

void matvec_transposed_serial(const DenseMatrix& a, std::span<const double> x,
                              std::span<double> y) {
  require(a.rows() == x.size() && a.cols() == y.size(), ErrorKind::length_mismatch,
          "matvec_transposed: length mismatch");
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * x[i];
    y[j] = s;
  }
}

void matvec_transposed_parallel(const DenseMatrix& a, std::span<const double> x,
                                std::span<double> y) {
  require(a.rows() == x.size() && a.cols() == y.size(), ErrorKind::length_mismatch,
          "matvec_transposed: length mismatch");
  if (a.size() < kParallelThreshold) {
    matvec_transposed_serial(a, x, y);
    return;
  }
  const auto cols = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jj = 0; jj < cols; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * x[i];
    y[j] = s;
  }
}

}  // namespace rotalab::kernels
