// SPDX-License-Identifier: Apache-2.0

#include "rotalab/problem.hpp"

#include "rotalab/error.hpp"
#include "rotalab/random.hpp"

namespace rotalab {

Batch BatchStream::at(std::uint64_t t) const {
  return {derive_seed(seed_, "batch", t), false};
}

DenseVector Problem::hvp(std::span<const double> w, std::span<const double> dir,
                         const Batch& batch) const {
  return finite_difference_hvp(*this, w, dir, batch);
}

DenseVector finite_difference_hvp(const Problem& problem, std::span<const double> w,
                                  std::span<const double> dir, const Batch& batch,
                                  double rel_step) {
  require(w.size() == dir.size(), ErrorKind::length_mismatch, "hvp: length mismatch");
  const double scale = norm_inf(dir);
  if (scale == 0.0) return DenseVector(w.size(), 0.0);
  const double h = rel_step * (1.0 + norm_inf(w));
  DenseVector plus(w.begin(), w.end());
  DenseVector minus(w.begin(), w.end());
  for (std::size_t i = 0; i < w.size(); ++i) {
    plus[i] += h * dir[i] / scale;
    minus[i] -= h * dir[i] / scale;
  }
  const DenseVector gp = problem.grad(plus, batch);
  const DenseVector gm = problem.grad(minus, batch);
  DenseVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = (gp[i] - gm[i]) / (2.0 * h) * scale;
  return out;
}

}  // namespace rotalab
