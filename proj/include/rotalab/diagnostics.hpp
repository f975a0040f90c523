// SPDX-License-Identifier: Apache-2.0
//
// Rotation-dependent diagnostics evaluated at a checkpoint:
//   - empirical ℓ∞ bound of rotated stochastic gradients,
//   - sampled rows of the rotated Hessian R·∇²f·Rᵀ and their split into
//     same-neuron / same-layer / other-layer parts,
//   - a (1,1)-norm estimate from sampled row ℓ1 norms,
//   - the distribution of AdamW second moments.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rotalab/kernels.hpp"
#include "rotalab/layout.hpp"
#include "rotalab/optim.hpp"
#include "rotalab/problem.hpp"
#include "rotalab/rotation.hpp"

namespace rotalab {

struct GradBoundReport {
  double c_tilde = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::string probe_tag;
  std::string checkpoint_tag;
  std::vector<double> per_trial;
  // Mean of the per-trial ℓ∞ norms and its standard error.
  double mean = 0.0;
  double standard_error = 0.0;

  nlohmann::json to_json() const;
};

/// C̃ = max over `trials` minibatches of ‖R·∇f_B(w)‖_∞. Batch i is
/// BatchStream(seed).at(i), so the serial and parallel paths agree exactly and
/// C̃ is nondecreasing in `trials`.
GradBoundReport linf_gradient_bound(const Problem& problem, std::span<const double> w,
                                    const CompiledRotation& rot, std::size_t trials,
                                    std::uint64_t seed,
                                    kernels::Exec exec = kernels::Exec::parallel);

struct HessianRowSample {
  std::size_t index = 0;
  DenseVector row;
  std::size_t k = 1;
  std::string probe_tag;
  std::string checkpoint_tag;
};

/// r_i = (1/k) Σ_j R·∇²f_{B_j}(w)·Rᵀ·e_i with B_j = BatchStream(seed).at(j).
HessianRowSample hessian_row(const Problem& problem, std::span<const double> w,
                             const CompiledRotation& rot, std::size_t i, std::size_t k,
                             std::uint64_t seed,
                             kernels::Exec exec = kernels::Exec::parallel);

struct PartStats {
  std::size_t count = 0;
  double mean_abs = 0.0;
  double max_abs = 0.0;
};

/// Three-way split of a Hessian row. I_N is the output-neuron partition of
/// index i (a whole vector layer for biases), I_L the rest of its layer and
/// I_other everything outside the layer.
struct RowPartition {
  std::size_t index = 0;
  IndexSet neuron_indices;
  IndexSet layer_indices;
  IndexSet other_indices;
  DenseVector neuron;
  DenseVector layer;
  DenseVector other;
  PartStats neuron_stats;
  PartStats layer_stats;
  PartStats other_stats;
};

RowPartition partition_row(const HessianRowSample& sample, const ParamLayout& layout,
                           std::size_t i);

struct RowContribution {
  double neuron = 0.0;
  double layer = 0.0;
  double other = 0.0;
  double total = 0.0;  // r_i·δw computed directly
};

RowContribution row_contribution(const RowPartition& parts, std::span<const double> dw);

DenseVector random_unit_direction(std::size_t dim, RandomStream& rng);

/// Uniform sample of `count` distinct row indices.
std::vector<std::size_t> sample_rows(std::size_t dim, std::size_t count, RandomStream& rng);
/// Same, spreading the rows over layers in proportion to their size.
std::vector<std::size_t> sample_rows_stratified(const ParamLayout& layout, std::size_t count,
                                                RandomStream& rng);

struct OneOneEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t rows = 0;

  nlohmann::json to_json() const;
};

/// d × mean_i ‖r_i‖₁.
OneOneEstimate one_one_norm_estimate(std::span<const HessianRowSample> samples,
                                     std::size_t dim);

struct SecondMomentHistogram {
  bool log_scale = true;
  std::vector<double> edges;  // bins + 1 entries (log10 units when log_scale)
  std::vector<std::size_t> counts;
  std::size_t zero_count = 0;  // v entries equal to zero, excluded from log bins
  bool degenerate = false;     // every v entry is zero
  double iqr_log10 = 0.0;      // interquartile range of log10 v over positive entries

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

SecondMomentHistogram second_moment_histogram(const OptimizerState& state, std::size_t bins,
                                              bool log_scale = true);

/// Interquartile range with linear interpolation between order statistics.
double interquartile_range(std::vector<double> values);

}  // namespace rotalab
