// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "rotalab/csv.hpp"
#include "rotalab/error.hpp"
#include "rotalab/testbeds.hpp"

namespace rotalab {

DenseMatrix planar_rotation(std::size_t dim, std::size_t i, std::size_t j, double angle) {
  require(i < dim && j < dim && i != j, ErrorKind::invalid_dimension,
          "planar_rotation: bad plane");
  DenseMatrix r = DenseMatrix::identity(dim);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  r(i, i) = c;
  r(i, j) = -s;
  r(j, i) = s;
  r(j, j) = c;
  return r;
}

std::string Fig2Result::to_csv() const {
  CsvWriter csv({"alg", "variant", "step", "x", "y"});
  for (const auto& p : paths)
    for (std::size_t t = 0; t < p.points.size(); ++t)
      csv.row(std::string(to_string(p.alg)), p.rotated ? "rotated" : "unrotated", t,
              p.points[t][0], p.points[t][1]);
  return csv.str();
}

Fig2Result fig2_demo(const QuadraticProblem& problem, const OptimizerConfig& cfg_sgd,
                     const OptimizerConfig& cfg_adam, double angle, std::size_t steps,
                     std::span<const double> w0, std::uint64_t batch_seed) {
  require(problem.dim() == 2, ErrorKind::invalid_spec, "fig2_demo: needs a 2-D quadratic");
  Fig2Result out;
  out.rotation = planar_rotation(2, 0, 1, angle);

  auto run = [&](BaseOptimizer alg, const OptimizerConfig& cfg, double& deviation) {
    EquivariancePaths p =
        trace_equivariance(alg, problem, out.rotation, steps, cfg, batch_seed, w0);
    deviation = 0.0;
    for (std::size_t t = 0; t < p.original.size(); ++t) {
      const DenseVector rw = matvec(out.rotation, p.original[t]);
      deviation = std::max(deviation, max_abs_diff(rw, p.rotated[t]));
    }
    out.paths.push_back({alg, false, std::move(p.original)});
    out.paths.push_back({alg, true, std::move(p.rotated)});
  };
  run(BaseOptimizer::sgd, cfg_sgd, out.sgd_deviation);
  run(BaseOptimizer::adamw, cfg_adam, out.adam_deviation);
  return out;
}

}  // namespace rotalab
