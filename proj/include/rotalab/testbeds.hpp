// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale problems: noisy quadratics with exact Hessian-vector products
// and a small fully connected network with hand-written backpropagation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rotalab/layout.hpp"
#include "rotalab/linalg.hpp"
#include "rotalab/optim.hpp"
#include "rotalab/problem.hpp"

namespace rotalab {

// ---------------------------------------------------------------------------
// Quadratic

enum class QuadraticBasis { axis_aligned, rotated };
enum class Spacing { geometric, random };
enum class InitKind { ones, gaussian };

struct QuadraticSpec {
  std::size_t dim = 2;
  // Explicit spectrum; when empty, eig_min..eig_max is filled log-uniformly,
  // ascending along the flat index.
  std::vector<double> eigenvalues;
  double eig_min = 1.0;
  double eig_max = 1.0;
  Spacing spacing = Spacing::geometric;
  QuadraticBasis basis = QuadraticBasis::axis_aligned;
  std::uint64_t basis_seed = 0;
  // Explicit symmetric positive-definite Hessian; overrides the spectrum.
  std::optional<DenseMatrix> hessian;
  // Minimizer w*; zero when empty.
  std::vector<double> minimizer;
  double sigma = 0.0;  // per-coordinate gradient noise
  std::uint64_t seed = 0;
  InitKind init = InitKind::ones;
  double init_scale = 1.0;
  // Defaults to a single vector layer "w" of length dim.
  std::optional<ParamLayout> layout;
};

/// f_B(w) = ½(w−w*)ᵀA(w−w*) + σ·ξ_Bᵀ(w−w*), ξ_B ~ N(0, I) regenerated from
/// the batch id. The full-data batch has ξ = 0.
class QuadraticProblem final : public Problem {
 public:
  explicit QuadraticProblem(QuadraticSpec spec);

  const ParamLayout& layout() const override { return layout_; }
  double value(std::span<const double> w, const Batch& batch) const override;
  DenseVector grad(std::span<const double> w, const Batch& batch) const override;
  DenseVector hvp(std::span<const double> w, std::span<const double> dir,
                  const Batch& batch) const override;
  DenseVector initial_point() const override;
  bool deterministic() const override { return spec_.sigma == 0.0; }

  const QuadraticSpec& spec() const noexcept { return spec_; }
  const DenseVector& eigenvalues() const noexcept { return eigenvalues_; }
  /// Eigenbasis Q for rotated problems; empty otherwise.
  const DenseMatrix& basis() const noexcept { return basis_; }
  const DenseVector& minimizer() const noexcept { return minimizer_; }
  DenseMatrix hessian() const;
  /// A·x.
  DenseVector hessian_times(std::span<const double> x) const;
  DenseVector noise(const Batch& batch) const;

 private:
  QuadraticSpec spec_;
  ParamLayout layout_;
  DenseVector eigenvalues_;
  DenseMatrix basis_;
  DenseMatrix dense_;  // materialized A unless axis-aligned
  bool diagonal_ = true;
  DenseVector minimizer_;
};

QuadraticProblem make_quadratic(QuadraticSpec spec);

// ---------------------------------------------------------------------------
// MLP

enum class Activation { tanh, relu };
enum class MlpTask { regression, classification };

struct MlpSpec {
  std::vector<std::size_t> widths{4, 8, 2};  // in, hidden…, out
  Activation activation = Activation::tanh;
  MlpTask task = MlpTask::regression;
  std::uint64_t seed = 0;
  std::size_t dataset_size = 256;
  // 0 means every batch is the full data set.
  std::size_t batch_size = 32;
  // Nonzero input features per sample; 0 means dense inputs.
  std::size_t active_features = 2;
  // Teacher weight scale; 0 gives all-zero regression targets.
  double teacher_scale = 1.0;
  double init_scale = 1.0;
};

/// Fully connected network W0,b0,W1,b1,… with the chosen activation on every
/// hidden layer and a linear output. Regression uses ½‖y − t‖² averaged over
/// the batch; classification uses softmax cross-entropy against the
/// teacher's argmax.
class MlpProblem final : public Problem {
 public:
  explicit MlpProblem(MlpSpec spec);

  const ParamLayout& layout() const override { return layout_; }
  double value(std::span<const double> w, const Batch& batch) const override;
  DenseVector grad(std::span<const double> w, const Batch& batch) const override;
  DenseVector initial_point() const override;
  bool deterministic() const override { return spec_.batch_size == 0; }

  const MlpSpec& spec() const noexcept { return spec_; }
  /// Network output for dataset sample `i`.
  DenseVector forward(std::span<const double> w, std::size_t sample) const;
  std::vector<std::size_t> batch_indices(const Batch& batch) const;
  std::span<const double> input(std::size_t sample) const;
  std::span<const double> target(std::size_t sample) const;

 private:
  double evaluate(std::span<const double> w, const Batch& batch, DenseVector* grad) const;

  MlpSpec spec_;
  ParamLayout layout_;
  std::vector<double> inputs_;   // dataset_size × widths.front()
  std::vector<double> targets_;  // dataset_size × widths.back()
};

MlpProblem make_mlp(MlpSpec spec);

// ---------------------------------------------------------------------------
// Two-dimensional trajectory demo

struct Fig2Path {
  BaseOptimizer alg = BaseOptimizer::sgd;
  bool rotated = false;
  std::vector<DenseVector> points;  // in the coordinates the run operates in
};

struct Fig2Result {
  DenseMatrix rotation;  // 2×2 planar rotation by `angle`
  std::vector<Fig2Path> paths;  // sgd/unrotated, sgd/rotated, adamw/unrotated, adamw/rotated
  double sgd_deviation = 0.0;   // max_t ‖R·w_t − w_t^rot‖_∞
  double adam_deviation = 0.0;

  /// alg,variant,step,x,y
  std::string to_csv() const;
};

/// Runs SGD-momentum and Adam on a 2-D quadratic and on its rotation.
Fig2Result fig2_demo(const QuadraticProblem& problem, const OptimizerConfig& cfg_sgd,
                     const OptimizerConfig& cfg_adam, double angle, std::size_t steps,
                     std::span<const double> w0, std::uint64_t batch_seed = 0);

DenseMatrix planar_rotation(std::size_t dim, std::size_t i, std::size_t j, double angle);

}  // namespace rotalab
