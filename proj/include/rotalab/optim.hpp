// SPDX-License-Identifier: Apache-2.0
//
// SGD (heavy ball), AdamW, the rotated stepping pipeline and the
// rotation-equivariance checker.
//
// Rotated pipeline: the gradient is rotated, the base optimizer produces a
// raw update in the rotated basis, the update is rotated back with the
// transpose, and decoupled weight decay is applied in the original basis:
//
//     g̃ = R·g,   u = step(g̃),   w ← w − α·Rᵀ·u − α·λ·w
//
// Moments therefore live in the rotated basis.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rotalab/linalg.hpp"
#include "rotalab/problem.hpp"
#include "rotalab/rotation.hpp"

namespace rotalab {

enum class BaseOptimizer { sgd, adamw };
enum class Schedule { constant, cosine };

std::string_view to_string(BaseOptimizer b) noexcept;
BaseOptimizer parse_base(std::string_view text);

struct OptimizerConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda = 0.0;
  double momentum = 0.0;  // SGD only
  // Global ℓ2 clipping of the unrotated gradient; 0 disables.
  double clip_norm = 0.0;
  Schedule schedule = Schedule::constant;
  std::size_t warmup_steps = 0;
  double min_alpha = 0.0;

  void validate() const;
  /// Step size for 0-based step t of a run with `total` steps.
  double alpha_at(std::size_t t, std::size_t total) const;
};

struct OptimizerState {
  DenseVector m;
  DenseVector v;
  DenseVector momentum_buf;
  std::uint64_t t = 0;

  static OptimizerState zeros(std::size_t dim);
};

/// One AdamW step in place. Throws PoisonedStateError (state untouched) on a
/// non-finite gradient.
void adamw_step(const OptimizerConfig& cfg, OptimizerState& state, std::span<double> w,
                std::span<const double> g);

/// Heavy-ball SGD: buf ← μ·buf + g; w ← w − α·buf − α·λ·w.
void sgd_step(const OptimizerConfig& cfg, OptimizerState& state, std::span<double> w,
              std::span<const double> g);

/// One step of the rotated pipeline. Returns the rotated-back raw update Rᵀ·u
/// (before scaling by α and without weight decay).
DenseVector rotated_step(const OptimizerConfig& cfg, OptimizerState& state,
                         const CompiledRotation& rot, std::span<double> w,
                         std::span<const double> g, BaseOptimizer base);

struct TrajectoryRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_inf_norm = 0.0;
  std::optional<DenseVector> params;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;

  /// CSV with header step,loss,grad_inf_norm.
  std::string to_csv() const;
};

struct RefreshRecord {
  std::size_t step = 0;
  double offdiagonal_ratio = 0.0;
};

struct TrainingOptions {
  BaseOptimizer base = BaseOptimizer::adamw;
  std::size_t steps = 0;
  std::size_t snapshot_every = 0;  // 0 disables parameter snapshots
  std::uint64_t batch_seed = 0;
  // Map m and v into the new basis when an SVD rotation refreshes.
  bool reproject_moments = false;
};

struct TrainingResult {
  Trajectory trajectory;
  DenseVector params;
  OptimizerState state;
  CompiledRotation rotation;
  std::vector<RefreshRecord> refreshes;
  // −α·Rᵀ·u of the last completed step (weight decay excluded).
  DenseVector last_displacement;
  double final_loss = 0.0;
  bool failed = false;
  std::string failure;
};

/// Trains from w0 under the rotation described by `spec`. Compiles the
/// rotation once (seeded by spec.seed); an svd rotation refreshes from the
/// current minibatch gradient whenever t mod refresh_interval == 0. A failing
/// step stops the run and returns the partial trajectory with `failed` set.
TrainingResult run_training(const Problem& problem, const OptimizerConfig& cfg,
                            const RotationSpec& spec, const TrainingOptions& options,
                            DenseVector w0);

/// Same, with an already compiled (static) rotation.
TrainingResult run_training(const Problem& problem, const OptimizerConfig& cfg,
                            const CompiledRotation& rotation,
                            const TrainingOptions& options, DenseVector w0);

inline constexpr std::size_t kMaxEquivarianceDim = 256;

/// Parameter paths of a base optimizer on f from w0 and on f^(R): w ↦ f(Rᵀw)
/// from R·w0, driven by the same batch sequence. paths[t] is the iterate
/// after t steps (t = 0 … steps).
struct EquivariancePaths {
  std::vector<DenseVector> original;
  std::vector<DenseVector> rotated;
};

EquivariancePaths trace_equivariance(BaseOptimizer alg, const Problem& problem,
                                     const DenseMatrix& r, std::size_t steps,
                                     const OptimizerConfig& cfg, std::uint64_t batch_seed,
                                     std::span<const double> w0);

struct EquivarianceReport {
  BaseOptimizer alg = BaseOptimizer::sgd;
  std::size_t steps = 0;
  double max_discrepancy = 0.0;
  std::vector<double> per_step;  // ‖R·w_t − w_t^rot‖_∞ for t = 1 … steps
};

/// Refuses (ErrorKind::refused) when the dimension exceeds kMaxEquivarianceDim.
EquivarianceReport check_equivariance(BaseOptimizer alg, const Problem& problem,
                                      const DenseMatrix& r, std::size_t steps,
                                      const OptimizerConfig& cfg, std::uint64_t batch_seed,
                                      std::span<const double> w0);

}  // namespace rotalab
