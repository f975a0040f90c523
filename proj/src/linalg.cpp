// SPDX-License-Identifier: Apache-2.0

#include "rotalab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "rotalab/error.hpp"

namespace rotalab {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorKind::length_mismatch,
          "DenseMatrix: data length " + std::to_string(data_.size()) +
              " != " + std::to_string(rows) + "x" + std::to_string(cols));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorKind::length_mismatch,
            "DenseMatrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(data));
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool DenseMatrix::all_finite() const noexcept {
  return rotalab::all_finite(data_);
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::length_mismatch, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> x) {
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double s = 0.0;
  for (double v : x) {
    const double t = v / scale;
    s += t * t;
  }
  return scale * std::sqrt(s);
}

double norm1(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s;
}

double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::length_mismatch,
          "max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(std::span<const double> x) noexcept {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), ErrorKind::length_mismatch, "matmul: inner dimension mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows(), ErrorKind::length_mismatch, "matmul_tn: inner dimension mismatch");
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto arow = a.row(k);
    const auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto out = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.cols(), ErrorKind::length_mismatch, "matmul_nt: inner dimension mismatch");
  DenseMatrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      const auto arow = a.row(i);
      const auto brow = b.row(j);
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  return c;
}

DenseVector matvec(const DenseMatrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), ErrorKind::length_mismatch, "matvec: length mismatch");
  DenseVector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

DenseVector matvec_transposed(const DenseMatrix& a, std::span<const double> x) {
  require(a.rows() == x.size(), ErrorKind::length_mismatch,
          "matvec_transposed: length mismatch");
  DenseVector y(a.cols(), 0.0);
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * x[i];
    y[j] = s;
  }
  return y;
}

double frobenius_norm(const DenseMatrix& a) { return norm2(a.data()); }

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::length_mismatch,
          "max_abs_diff: shape mismatch");
  return max_abs_diff(a.data(), b.data());
}

double orthogonality_residual(const DenseMatrix& q) {
  const DenseMatrix g = matmul_tn(q, q);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, RandomStream& rng) {
  DenseMatrix m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

QrResult householder_qr(const DenseMatrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  require(cols >= 1 && rows >= cols, ErrorKind::invalid_dimension,
          "householder_qr: need rows >= cols >= 1, got " + std::to_string(rows) +
              "x" + std::to_string(cols));

  DenseMatrix a = m;
  std::vector<DenseVector> reflectors(cols);
  std::vector<double> reflector_norm2(cols, 0.0);

  for (std::size_t j = 0; j < cols; ++j) {
    DenseVector v(rows - j);
    for (std::size_t i = j; i < rows; ++i) v[i - j] = a(i, j);
    const double xnorm = norm2(v);
    if (xnorm == 0.0) continue;
    const double alpha = v[0] >= 0.0 ? -xnorm : xnorm;
    v[0] -= alpha;
    const double vv = dot(v, v);
    if (vv == 0.0) continue;

    for (std::size_t c = j; c < cols; ++c) {
      double s = 0.0;
      for (std::size_t i = j; i < rows; ++i) s += v[i - j] * a(i, c);
      const double f = 2.0 * s / vv;
      for (std::size_t i = j; i < rows; ++i) a(i, c) -= f * v[i - j];
    }
    reflectors[j] = std::move(v);
    reflector_norm2[j] = vv;
  }

  DenseMatrix r(cols, cols);
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = i; j < cols; ++j) r(i, j) = a(i, j);

  DenseMatrix q(rows, cols);
  for (std::size_t i = 0; i < cols; ++i) q(i, i) = 1.0;
  for (std::size_t jj = cols; jj-- > 0;) {
    const DenseVector& v = reflectors[jj];
    if (v.empty()) continue;
    const double vv = reflector_norm2[jj];
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (std::size_t i = jj; i < rows; ++i) s += v[i - jj] * q(i, c);
      const double f = 2.0 * s / vv;
      for (std::size_t i = jj; i < rows; ++i) q(i, c) -= f * v[i - jj];
    }
  }

  for (std::size_t j = 0; j < cols; ++j) {
    if (r(j, j) < 0.0) {
      for (std::size_t c = j; c < cols; ++c) r(j, c) = -r(j, c);
      for (std::size_t i = 0; i < rows; ++i) q(i, j) = -q(i, j);
    }
  }
  return {std::move(q), std::move(r)};
}

namespace {

constexpr double kSignThreshold = 1e-14;

void flip_column(DenseMatrix& m, std::size_t j) {
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) = -m(i, j);
}

bool leading_entry_negative(const DenseMatrix& m, std::size_t j) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double x = m(i, j);
    if (std::abs(x) > kSignThreshold) return x < 0.0;
  }
  return false;
}

// Appends columns drawn from the canonical basis until `basis` holds `target`
// orthonormal columns. Picks the candidate with the largest residual each
// time and orthogonalizes twice.
void complete_basis(std::vector<DenseVector>& basis, std::size_t dim,
                    std::size_t target) {
  while (basis.size() < target) {
    DenseVector best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < dim; ++e) {
      DenseVector x(dim, 0.0);
      x[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) {
          const double proj = dot(b, x);
          for (std::size_t i = 0; i < dim; ++i) x[i] -= proj * b[i];
        }
      const double n = norm2(x);
      if (n > best_norm + 1e-12) {
        best_norm = n;
        best = std::move(x);
      }
    }
    for (double& v : best) v /= best_norm;
    basis.push_back(std::move(best));
  }
}

// One-sided Jacobi for rows >= cols.
SvdResult svd_tall(const DenseMatrix& m, const SvdOptions& options) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  constexpr double eps = std::numeric_limits<double>::epsilon();

  std::vector<DenseVector> a(cols, DenseVector(rows));
  std::vector<DenseVector> v(cols, DenseVector(cols, 0.0));
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) a[j][i] = m(i, j);
    v[j][j] = 1.0;
  }

  int sweep = 0;
  bool converged = cols < 2;
  double worst_coupling = 0.0;
  while (!converged && sweep < options.max_sweeps) {
    ++sweep;
    bool rotated = false;
    worst_coupling = 0.0;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        const double alpha = dot(a[p], a[p]);
        const double beta = dot(a[q], a[q]);
        const double gamma = dot(a[p], a[q]);
        if (alpha == 0.0 || beta == 0.0 || gamma == 0.0) continue;
        const double coupling = std::abs(gamma) / std::sqrt(alpha * beta);
        worst_coupling = std::max(worst_coupling, coupling);
        if (coupling <= eps) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double ap = a[p][i];
          const double aq = a[q][i];
          a[p][i] = c * ap - s * aq;
          a[q][i] = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < cols; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged)
    throw DecompositionError("svd_full: Jacobi did not converge in " +
                                 std::to_string(options.max_sweeps) +
                                 " sweeps (column coupling " +
                                 std::to_string(worst_coupling) + ")",
                             worst_coupling);

  DenseVector sigma(cols);
  for (std::size_t j = 0; j < cols; ++j) sigma[j] = norm2(a[j]);
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double smax = cols == 0 ? 0.0 : sigma[order[0]];
  const double threshold = smax * static_cast<double>(std::max(rows, cols)) * eps;

  SvdResult out;
  out.sweeps = sweep;
  out.s.resize(cols);
  out.v = DenseMatrix(cols, cols);
  std::vector<DenseVector> ucols;
  ucols.reserve(rows);
  std::size_t rank = 0;
  for (std::size_t k = 0; k < cols; ++k) {
    const std::size_t j = order[k];
    out.s[k] = sigma[j];
    for (std::size_t i = 0; i < cols; ++i) out.v(i, k) = v[j][i];
    if (sigma[j] > threshold && sigma[j] > 0.0 && rank == k) {
      DenseVector u = a[j];
      for (double& x : u) x /= sigma[j];
      ucols.push_back(std::move(u));
      ++rank;
    }
  }
  complete_basis(ucols, rows, rows);
  out.u = DenseMatrix(rows, rows);
  for (std::size_t k = 0; k < rows; ++k)
    for (std::size_t i = 0; i < rows; ++i) out.u(i, k) = ucols[k][i];
  return out;
}

}  // namespace

SvdResult svd_full(const DenseMatrix& m, const SvdOptions& options) {
  require(m.rows() >= 1 && m.cols() >= 1, ErrorKind::invalid_dimension,
          "svd_full: empty matrix");
  require(m.all_finite(), ErrorKind::invalid_spec, "svd_full: non-finite input");

  SvdResult out;
  if (m.rows() >= m.cols()) {
    out = svd_tall(m, options);
  } else {
    SvdResult t = svd_tall(m.transposed(), options);
    out.u = std::move(t.v);
    out.v = std::move(t.u);
    out.s = std::move(t.s);
    out.sweeps = t.sweeps;
  }

  const std::size_t k = out.s.size();
  for (std::size_t j = 0; j < k; ++j)
    if (leading_entry_negative(out.u, j)) {
      flip_column(out.u, j);
      flip_column(out.v, j);
    }
  for (std::size_t j = k; j < out.u.cols(); ++j)
    if (leading_entry_negative(out.u, j)) flip_column(out.u, j);
  for (std::size_t j = k; j < out.v.cols(); ++j)
    if (leading_entry_negative(out.v, j)) flip_column(out.v, j);
  return out;
}

DenseMatrix haar_orthogonal(std::size_t n, RandomStream& rng) {
  require(n >= 1, ErrorKind::invalid_dimension, "haar_orthogonal: n must be >= 1");
  if (n == 1) return DenseMatrix::identity(1);
  return householder_qr(gaussian_matrix(n, n, rng)).q;
}

Permutation::Permutation(std::vector<std::size_t> forward)
    : forward_(std::move(forward)) {
  std::vector<char> seen(forward_.size(), 0);
  for (std::size_t k : forward_) {
    require(k < forward_.size() && !seen[k], ErrorKind::invalid_spec,
            "Permutation: forward map is not a bijection");
    seen[k] = 1;
  }
}

Permutation Permutation::identity(std::size_t d) {
  std::vector<std::size_t> f(d);
  std::iota(f.begin(), f.end(), std::size_t{0});
  return Permutation(std::move(f));
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(forward_.size());
  for (std::size_t k = 0; k < forward_.size(); ++k) inv[forward_[k]] = k;
  return Permutation(std::move(inv));
}

bool Permutation::is_identity() const noexcept {
  for (std::size_t k = 0; k < forward_.size(); ++k)
    if (forward_[k] != k) return false;
  return true;
}

DenseVector Permutation::apply(std::span<const double> x) const {
  require(x.size() == forward_.size(), ErrorKind::length_mismatch,
          "Permutation::apply: length mismatch");
  DenseVector out(x.size());
  for (std::size_t k = 0; k < forward_.size(); ++k) out[k] = x[forward_[k]];
  return out;
}

DenseVector Permutation::apply_inverse(std::span<const double> y) const {
  require(y.size() == forward_.size(), ErrorKind::length_mismatch,
          "Permutation::apply_inverse: length mismatch");
  DenseVector out(y.size());
  for (std::size_t k = 0; k < forward_.size(); ++k) out[forward_[k]] = y[k];
  return out;
}

Permutation random_permutation(std::size_t d, RandomStream& rng) {
  require(d >= 1, ErrorKind::invalid_dimension, "random_permutation: d must be >= 1");
  std::vector<std::size_t> f(d);
  std::iota(f.begin(), f.end(), std::size_t{0});
  for (std::size_t i = d - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i + 1));
    std::swap(f[i], f[j]);
  }
  return Permutation(std::move(f));
}

}  // namespace rotalab
