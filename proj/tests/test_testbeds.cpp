// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rotalab/error.hpp"
#include "rotalab/testbeds.hpp"

using namespace rotalab;

namespace {

DenseVector random_vector(std::size_t n, RandomStream& rng, double scale = 1.0) {
  DenseVector x(n);
  for (double& v : x) v = scale * rng.normal();
  return x;
}

// Central differences of value() along every coordinate.
DenseVector numeric_grad(const Problem& p, const DenseVector& w, const Batch& b, double h) {
  DenseVector g(w.size());
  DenseVector x = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    x[i] = w[i] + h;
    const double fp = p.value(x, b);
    x[i] = w[i] - h;
    const double fm = p.value(x, b);
    x[i] = w[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(const DenseVector& a, const DenseVector& b) {
  return oracle::max_abs(a, b) / std::max(1.0, norm_inf(b));
}

}  // namespace

TEST_CASE("quadratic examples") {
  QuadraticSpec s;
  s.dim = 2;
  s.eigenvalues = {1.0, 1.0};
  s.minimizer = {0.5, -0.25};
  const QuadraticProblem q = make_quadratic(s);
  const DenseVector w{1.5, -0.25};
  CHECK(q.full_grad(w) == DenseVector{1.0, 0.0});
  CHECK(q.full_value(w) == 0.5);

  s.eigenvalues = {1.0, 100.0};
  s.minimizer.clear();
  const QuadraticProblem d = make_quadratic(s);
  CHECK(d.hvp(w, DenseVector{0.0, 1.0}, Batch{}) == DenseVector{0.0, 100.0});

  s.eigenvalues = {1.0, -1.0};
  CHECK_THROWS_AS(make_quadratic(s), Error);
  s.eigenvalues = {1.0};
  CHECK_THROWS_AS(make_quadratic(s), Error);
}

TEST_CASE("geometric spectrum spans eig_min to eig_max") {
  QuadraticSpec s;
  s.dim = 5;
  s.eig_min = 1e-2;
  s.eig_max = 1e2;
  const QuadraticProblem q = make_quadratic(s);
  const auto& l = q.eigenvalues();
  CHECK(l.front() == 1e-2);
  CHECK(l.back() == 1e2);
  for (std::size_t i = 1; i < l.size(); ++i) CHECK(l[i] / l[i - 1] == doctest::Approx(10.0));
}

TEST_CASE("rotated quadratic hvp equals the dense reconstruction") {
  QuadraticSpec s;
  s.dim = 24;
  s.eig_min = 0.1;
  s.eig_max = 50.0;
  s.basis = QuadraticBasis::rotated;
  s.basis_seed = 5;
  const QuadraticProblem q = make_quadratic(s);
  const DenseMatrix& basis = q.basis();
  DenseMatrix scaled = basis;
  for (std::size_t i = 0; i < 24; ++i)
    for (std::size_t j = 0; j < 24; ++j) scaled(i, j) *= q.eigenvalues()[j];
  const DenseMatrix a = oracle::multiply(scaled, oracle::transpose(basis));
  CHECK(orthogonality_residual(basis) < 1e-12);
  RandomStream rng(1);
  const DenseVector w = random_vector(24, rng);
  for (int k = 0; k < 100; ++k) {
    const DenseVector v = random_vector(24, rng);
    CHECK(oracle::max_abs(q.hvp(w, v, Batch{}), oracle::times(a, v)) < 1e-12);
  }
}

TEST_CASE("explicit hessian must be symmetric positive definite") {
  QuadraticSpec s;
  s.dim = 2;
  s.hessian = DenseMatrix(2, 2, {2.0, 1.0, 1.0, 2.0});
  const QuadraticProblem q = make_quadratic(s);
  CHECK(q.hvp(DenseVector{0, 0}, DenseVector{1.0, 0.0}, Batch{}) == DenseVector{2.0, 1.0});
  s.hessian = DenseMatrix(2, 2, {1.0, 2.0, 2.0, 1.0});
  CHECK_THROWS_AS(make_quadratic(s), Error);
  s.hessian = DenseMatrix(2, 2, {1.0, 0.5, 0.0, 1.0});
  CHECK_THROWS_AS(make_quadratic(s), Error);
}

TEST_CASE("quadratic gradients match finite differences of value") {
  QuadraticSpec s;
  s.dim = 10;
  s.eig_min = 0.5;
  s.eig_max = 5.0;
  s.basis = QuadraticBasis::rotated;
  s.sigma = 0.3;
  const QuadraticProblem q = make_quadratic(s);
  RandomStream rng(2);
  const BatchStream batches(4);
  for (int k = 0; k < 10; ++k) {
    const DenseVector w = random_vector(10, rng);
    const Batch b = batches.at(static_cast<std::uint64_t>(k));
    CHECK(relative_error(q.grad(w, b), numeric_grad(q, w, b, 1e-5)) < 1e-6);
  }
}

TEST_CASE("stochastic quadratic gradients average to the full gradient") {
  QuadraticSpec s;
  s.dim = 6;
  s.eig_min = 1.0;
  s.eig_max = 4.0;
  s.sigma = 0.5;
  s.seed = 11;
  const QuadraticProblem q = make_quadratic(s);
  const DenseVector w{1, -1, 2, 0, 0.5, 3};
  const DenseVector full = q.full_grad(w);
  const BatchStream batches(1);
  const int n = 10000;
  DenseVector mean(6, 0.0);
  for (int t = 0; t < n; ++t) {
    const DenseVector g = q.grad(w, batches.at(static_cast<std::uint64_t>(t)));
    for (std::size_t i = 0; i < 6; ++i) mean[i] += g[i] / n;
  }
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(mean[i] - full[i]) < 4.0 * 0.5 / 100.0);
  CHECK(q.grad(w, batches.at(7)) == q.grad(w, batches.at(7)));
  CHECK(q.grad(w, batches.at(7)) != q.grad(w, batches.at(8)));
}

TEST_CASE("mlp layout enumerates weights and biases") {
  MlpSpec s;
  s.widths = {5, 7, 3};
  const MlpProblem p = make_mlp(s);
  const ParamLayout& l = p.layout();
  REQUIRE(l.layer_count() == 4);
  CHECK(l.layer(0).name == "W0");
  CHECK(l.layer(0).rows == 7);
  CHECK(l.layer(0).cols == 5);
  CHECK(l.layer(1).name == "b0");
  CHECK(l.layer(3).name == "b1");
  CHECK(p.dim() == 7 * 5 + 7 + 3 * 7 + 3);
  MlpSpec big;
  big.widths = {400, 400};
  CHECK_THROWS_AS(make_mlp(big), Error);
}

TEST_CASE("zero network regression to zero targets") {
  MlpSpec s;
  s.widths = {4, 6, 2};
  s.teacher_scale = 0.0;
  s.batch_size = 0;
  const MlpProblem p = make_mlp(s);
  const DenseVector w(p.dim(), 0.0);
  for (std::size_t i = 0; i < 8; ++i) CHECK(p.forward(w, i) == DenseVector{0.0, 0.0});
  CHECK(p.full_value(w) == 0.0);
  for (double x : p.full_grad(w)) CHECK(x == 0.0);

  // with a nonzero output bias only the output bias carries gradient
  DenseVector b(p.dim(), 0.0);
  b[p.dim() - 2] = 1.0;
  const DenseVector g = p.full_grad(b);
  for (std::size_t i = 0; i + 2 < p.dim(); ++i) CHECK(g[i] == 0.0);
  CHECK(g[p.dim() - 2] == doctest::Approx(1.0));
}

TEST_CASE("mlp gradients match central differences") {
  for (Activation act : {Activation::tanh, Activation::relu})
    for (MlpTask task : {MlpTask::regression, MlpTask::classification}) {
      MlpSpec s;
      s.widths = {5, 6, 4, 3};
      s.activation = act;
      s.task = task;
      s.seed = 21;
      s.dataset_size = 64;
      s.batch_size = 16;
      const MlpProblem p = make_mlp(s);
      RandomStream rng(4);
      const BatchStream batches(2);
      int checked = 0;
      for (int k = 0; k < 30; ++k) {
        const DenseVector w = random_vector(p.dim(), rng, 0.7);
        const Batch b = batches.at(static_cast<std::uint64_t>(k));
        const double err = relative_error(p.grad(w, b), numeric_grad(p, w, b, 1e-6));
        if (act == Activation::relu && err > 1e-6) continue;  // probe straddles a kink
        CHECK(err < 1e-6);
        ++checked;
      }
      CHECK(checked >= 25);
    }
}

TEST_CASE("mlp finite-difference hvp is symmetric for tanh") {
  MlpSpec s;
  s.widths = {4, 8, 2};
  s.seed = 7;
  const MlpProblem p = make_mlp(s);
  RandomStream rng(9);
  const Batch b = BatchStream(3).at(0);
  for (int k = 0; k < 10; ++k) {
    const DenseVector w = random_vector(p.dim(), rng, 0.5);
    const DenseVector u = random_vector(p.dim(), rng);
    const DenseVector v = random_vector(p.dim(), rng);
    const double uv = dot(p.hvp(w, u, b), v);
    const double vu = dot(p.hvp(w, v, b), u);
    CHECK(std::abs(uv - vu) <= 1e-4 * std::max(1.0, std::abs(uv)));
  }
}

TEST_CASE("finite-difference hvp reproduces an exact quadratic hvp") {
  QuadraticSpec s;
  s.dim = 8;
  s.eig_min = 0.5;
  s.eig_max = 20.0;
  s.basis = QuadraticBasis::rotated;
  const QuadraticProblem q = make_quadratic(s);
  RandomStream rng(5);
  const DenseVector w = random_vector(8, rng);
  const DenseVector v = random_vector(8, rng);
  CHECK(relative_error(finite_difference_hvp(q, w, v, Batch::full_data()),
                       q.hvp(w, v, Batch::full_data())) < 1e-8);
  CHECK(finite_difference_hvp(q, w, DenseVector(8, 0.0), Batch{}) == DenseVector(8, 0.0));
}

TEST_CASE("mlp batches and full data") {
  MlpSpec s;
  s.dataset_size = 40;
  s.batch_size = 8;
  const MlpProblem p = make_mlp(s);
  CHECK(!p.deterministic());
  const auto idx = p.batch_indices(BatchStream(1).at(0));
  CHECK(idx.size() == 8);
  for (auto i : idx) CHECK(i < 40);
  CHECK(p.batch_indices(Batch::full_data()).size() == 40);
  CHECK(p.batch_indices(BatchStream(1).at(3)) == p.batch_indices(BatchStream(1).at(3)));
  const MlpProblem q = make_mlp(s);
  CHECK(p.initial_point() == q.initial_point());
}

TEST_CASE("fig2 demo") {
  QuadraticSpec s;
  s.dim = 2;
  s.eigenvalues = {1.0, 100.0};
  const QuadraticProblem q = make_quadratic(s);
  OptimizerConfig sgd;
  sgd.alpha = 0.005;
  sgd.momentum = 0.9;
  OptimizerConfig adam;
  adam.alpha = 0.05;
  const DenseVector w0{1.0, 1.0};

  const Fig2Result flat = fig2_demo(q, sgd, adam, 0.0, 100, w0);
  REQUIRE(flat.paths.size() == 4);
  CHECK(flat.paths[0].points == flat.paths[1].points);
  CHECK(flat.paths[2].points == flat.paths[3].points);

  const Fig2Result turned = fig2_demo(q, sgd, adam, M_PI / 4, 200, w0);
  CHECK(turned.sgd_deviation < 1e-9);
  CHECK(turned.adam_deviation > 1e-2);
  CHECK(turned.paths[0].points.size() == 201);
  const std::string csv = turned.to_csv();
  CHECK(csv.rfind("alg,variant,step,x,y\n", 0) == 0);
  CHECK(csv.find("adamw,rotated,200,") != std::string::npos);
}
