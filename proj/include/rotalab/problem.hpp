// SPDX-License-Identifier: Apache-2.0
//
// Differentiable test problems and their minibatch streams.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "rotalab/layout.hpp"
#include "rotalab/linalg.hpp"

namespace rotalab {

/// Identifies a minibatch. A problem regenerates the batch contents from the
/// id, so two runs sharing a BatchStream seed see identical data.
struct Batch {
  std::uint64_t id = 0;
  bool full = false;  // full-data (deterministic) evaluation

  static Batch full_data() { return {0, true}; }
};

class BatchStream {
 public:
  explicit BatchStream(std::uint64_t seed) : seed_(seed) {}

  Batch at(std::uint64_t t) const;
  Batch next() { return at(position_++); }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
};

class Problem {
 public:
  virtual ~Problem() = default;

  virtual const ParamLayout& layout() const = 0;
  std::size_t dim() const { return layout().dim(); }

  virtual double value(std::span<const double> w, const Batch& batch) const = 0;
  virtual DenseVector grad(std::span<const double> w, const Batch& batch) const = 0;
  /// Hessian-vector product; defaults to central differences of grad().
  virtual DenseVector hvp(std::span<const double> w, std::span<const double> dir,
                          const Batch& batch) const;
  virtual DenseVector initial_point() const = 0;
  /// True when every batch is the full data set (no gradient noise).
  virtual bool deterministic() const = 0;

  double full_value(std::span<const double> w) const {
    return value(w, Batch::full_data());
  }
  DenseVector full_grad(std::span<const double> w) const {
    return grad(w, Batch::full_data());
  }
};

/// (∇f(w + h·d̂) − ∇f(w − h·d̂)) / (2h) · ‖dir‖_∞ with d̂ = dir / ‖dir‖_∞ and
/// h = rel_step · (1 + ‖w‖_∞).
DenseVector finite_difference_hvp(const Problem& problem, std::span<const double> w,
                                  std::span<const double> dir, const Batch& batch,
                                  double rel_step = 1e-5);

}  // namespace rotalab
