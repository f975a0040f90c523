// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision linear algebra: row-major matrices, Householder QR,
// one-sided Jacobi SVD, permutations and the Haar-orthogonal sampler.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "rotalab/random.hpp"

namespace rotalab {

using DenseVector = std::vector<double>;

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  DenseMatrix transposed() const;
  bool all_finite() const noexcept;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Vector helpers.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> x);
double norm1(std::span<const double> x);
double norm_inf(std::span<const double> x);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> x) noexcept;

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ·b without forming the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a·bᵀ without forming the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseVector matvec(const DenseMatrix& a, std::span<const double> x);
DenseVector matvec_transposed(const DenseMatrix& a, std::span<const double> x);

double frobenius_norm(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
/// max |(QᵀQ − I)_ij|.
double orthogonality_residual(const DenseMatrix& q);

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols,
                            RandomStream& rng);

struct QrResult {
  DenseMatrix q;  // rows × cols, orthonormal columns
  DenseMatrix r;  // cols × cols, upper triangular, nonnegative diagonal
};

/// Thin Householder QR of a rows ≥ cols matrix.
QrResult householder_qr(const DenseMatrix& m);

struct SvdOptions {
  int max_sweeps = 80;
};

struct SvdResult {
  DenseMatrix u;  // rows × rows
  DenseVector s;  // min(rows, cols), nonincreasing
  DenseMatrix v;  // cols × cols
  int sweeps = 0;
};

/// Full SVD M = U·diag(S)·Vᵀ by one-sided (Hestenes) Jacobi.
///
/// Sign convention: for each of the first min(rows, cols) columns, U's first
/// entry of magnitude above 1e-14 is nonnegative; V is flipped with it.
/// Null-space columns of U and V are completed deterministically from the
/// canonical basis, so the zero matrix decomposes to U = I, V = I.
SvdResult svd_full(const DenseMatrix& m, const SvdOptions& options = {});

/// Haar-distributed sample from O(n) via QR of a Gaussian matrix with the
/// triangular factor normalized to a positive diagonal. No projection onto
/// SO(n) is applied. n = 1 returns [[1.0]] without drawing from the stream.
DenseMatrix haar_orthogonal(std::size_t n, RandomStream& rng);

/// Bijection on {0, …, d−1}. apply() gathers: out[k] = x[forward[k]].
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> forward);

  static Permutation identity(std::size_t d);

  std::size_t size() const noexcept { return forward_.size(); }
  std::size_t operator[](std::size_t k) const noexcept { return forward_[k]; }
  std::span<const std::size_t> forward() const noexcept { return forward_; }

  Permutation inverse() const;
  bool is_identity() const noexcept;

  DenseVector apply(std::span<const double> x) const;
  DenseVector apply_inverse(std::span<const double> y) const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> forward_;
};

/// Fisher–Yates shuffle.
Permutation random_permutation(std::size_t d, RandomStream& rng);

}  // namespace rotalab
