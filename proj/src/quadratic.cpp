// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "rotalab/error.hpp"
#include "rotalab/random.hpp"
#include "rotalab/testbeds.hpp"

namespace rotalab {

namespace {

bool cholesky_succeeds(const DenseMatrix& a) {
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) return false;
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return true;
}

DenseVector make_spectrum(const QuadraticSpec& spec) {
  if (!spec.eigenvalues.empty()) {
    require(spec.eigenvalues.size() == spec.dim, ErrorKind::invalid_spec,
            "quadratic: eigenvalue count does not match dim");
    for (double l : spec.eigenvalues)
      require(l > 0.0 && std::isfinite(l), ErrorKind::invalid_spec,
              "quadratic: eigenvalues must be positive and finite");
    return spec.eigenvalues;
  }
  require(spec.eig_min > 0.0 && spec.eig_max >= spec.eig_min && std::isfinite(spec.eig_max),
          ErrorKind::invalid_spec, "quadratic: need 0 < eig_min <= eig_max");
  const std::size_t d = spec.dim;
  const double lo = std::log(spec.eig_min);
  const double hi = std::log(spec.eig_max);
  DenseVector lambda(d);
  if (spec.spacing == Spacing::geometric) {
    for (std::size_t i = 0; i < d; ++i) {
      const double frac = d == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(d - 1);
      lambda[i] = std::exp(lo + (hi - lo) * frac);
    }
    lambda.front() = spec.eig_min;
    if (d > 1) lambda.back() = spec.eig_max;
  } else {
    RandomStream rng(derive_seed(spec.seed, "spectrum", 0));
    for (double& l : lambda) l = std::exp(lo + (hi - lo) * rng.uniform());
    std::sort(lambda.begin(), lambda.end());
  }
  return lambda;
}

}  // namespace

QuadraticProblem::QuadraticProblem(QuadraticSpec spec) : spec_(std::move(spec)) {
  const std::size_t d = spec_.dim;
  require(d >= 1, ErrorKind::invalid_spec, "quadratic: dim must be >= 1");
  require(spec_.sigma >= 0.0, ErrorKind::invalid_spec, "quadratic: sigma must be >= 0");

  if (spec_.layout) {
    require(spec_.layout->dim() == d, ErrorKind::invalid_spec,
            "quadratic: layout dimension " + std::to_string(spec_.layout->dim()) +
                " != dim " + std::to_string(d));
    layout_ = *spec_.layout;
  } else {
    layout_.add_vector("w", d);
  }

  if (spec_.hessian) {
    const DenseMatrix& a = *spec_.hessian;
    require(a.rows() == d && a.cols() == d, ErrorKind::invalid_spec,
            "quadratic: hessian must be dim x dim");
    require(a.all_finite(), ErrorKind::invalid_spec, "quadratic: hessian is not finite");
    const double tol = 1e-12 * std::max(1.0, norm_inf(a.data()));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j)
        require(std::abs(a(i, j) - a(j, i)) <= tol, ErrorKind::invalid_spec,
                "quadratic: hessian is not symmetric");
    require(cholesky_succeeds(a), ErrorKind::invalid_spec,
            "quadratic: hessian is not positive definite (nonpositive eigenvalue)");
    dense_ = a;
    diagonal_ = false;
  } else {
    eigenvalues_ = make_spectrum(spec_);
    if (spec_.basis == QuadraticBasis::rotated) {
      RandomStream rng(spec_.basis_seed);
      basis_ = haar_orthogonal(d, rng);
      DenseMatrix scaled = basis_;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) scaled(i, j) *= eigenvalues_[j];
      dense_ = matmul_nt(scaled, basis_);
      // Exact symmetry.
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) dense_(j, i) = dense_(i, j);
      diagonal_ = false;
    }
  }

  if (spec_.minimizer.empty()) {
    minimizer_.assign(d, 0.0);
  } else {
    require(spec_.minimizer.size() == d, ErrorKind::invalid_spec,
            "quadratic: minimizer length does not match dim");
    minimizer_ = spec_.minimizer;
  }
}

DenseMatrix QuadraticProblem::hessian() const {
  if (!diagonal_) return dense_;
  DenseMatrix a(spec_.dim, spec_.dim);
  for (std::size_t i = 0; i < spec_.dim; ++i) a(i, i) = eigenvalues_[i];
  return a;
}

DenseVector QuadraticProblem::hessian_times(std::span<const double> x) const {
  require(x.size() == spec_.dim, ErrorKind::length_mismatch, "quadratic: length mismatch");
  if (!diagonal_) return matvec(dense_, x);
  DenseVector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = eigenvalues_[i] * x[i];
  return y;
}

DenseVector QuadraticProblem::noise(const Batch& batch) const {
  DenseVector xi(spec_.dim, 0.0);
  if (batch.full || spec_.sigma == 0.0) return xi;
  RandomStream rng(batch.id, derive_seed(spec_.seed, "noise", 0));
  for (double& x : xi) x = rng.normal();
  return xi;
}

double QuadraticProblem::value(std::span<const double> w, const Batch& batch) const {
  require(w.size() == spec_.dim, ErrorKind::length_mismatch, "quadratic: length mismatch");
  DenseVector e(w.begin(), w.end());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= minimizer_[i];
  const DenseVector ae = hessian_times(e);
  double v = 0.5 * dot(e, ae);
  if (!batch.full && spec_.sigma != 0.0) v += spec_.sigma * dot(noise(batch), e);
  return v;
}

DenseVector QuadraticProblem::grad(std::span<const double> w, const Batch& batch) const {
  require(w.size() == spec_.dim, ErrorKind::length_mismatch, "quadratic: length mismatch");
  DenseVector e(w.begin(), w.end());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= minimizer_[i];
  DenseVector g = hessian_times(e);
  if (!batch.full && spec_.sigma != 0.0) {
    const DenseVector xi = noise(batch);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += spec_.sigma * xi[i];
  }
  return g;
}

DenseVector QuadraticProblem::hvp(std::span<const double> /*w*/, std::span<const double> dir,
                                  const Batch& /*batch*/) const {
  return hessian_times(dir);
}

DenseVector QuadraticProblem::initial_point() const {
  DenseVector w = minimizer_;
  if (spec_.init == InitKind::ones) {
    for (double& x : w) x += spec_.init_scale;
  } else {
    RandomStream rng(derive_seed(spec_.seed, "init", 0));
    for (double& x : w) x += spec_.init_scale * rng.normal();
  }
  return w;
}

QuadraticProblem make_quadratic(QuadraticSpec spec) { return QuadraticProblem(std::move(spec)); }

}  // namespace rotalab
