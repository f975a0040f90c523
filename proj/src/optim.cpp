// SPDX-License-Identifier: Apache-2.0

#include "rotalab/optim.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "rotalab/csv.hpp"
#include "rotalab/error.hpp"
#include "rotalab/kernels.hpp"

namespace rotalab {

std::string_view to_string(BaseOptimizer b) noexcept {
  return b == BaseOptimizer::sgd ? "sgd" : "adamw";
}

BaseOptimizer parse_base(std::string_view text) {
  if (text == "sgd") return BaseOptimizer::sgd;
  if (text == "adamw" || text == "adam") return BaseOptimizer::adamw;
  throw Error(ErrorKind::invalid_spec,
              "unknown optimizer '" + std::string(text) + "' (expected sgd|adamw)");
}

void OptimizerConfig::validate() const {
  require(alpha >= 0.0 && std::isfinite(alpha), ErrorKind::invalid_spec,
          "optimizer: alpha must be finite and >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0, ErrorKind::invalid_spec,
          "optimizer: beta1 must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, ErrorKind::invalid_spec,
          "optimizer: beta2 must lie in [0, 1)");
  require(epsilon > 0.0, ErrorKind::invalid_spec, "optimizer: epsilon must be > 0");
  require(lambda >= 0.0, ErrorKind::invalid_spec, "optimizer: lambda must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::invalid_spec,
          "optimizer: momentum must lie in [0, 1)");
  require(clip_norm >= 0.0, ErrorKind::invalid_spec, "optimizer: clip_norm must be >= 0");
  require(min_alpha >= 0.0 && min_alpha <= alpha, ErrorKind::invalid_spec,
          "optimizer: min_alpha must lie in [0, alpha]");
}

double OptimizerConfig::alpha_at(std::size_t t, std::size_t total) const {
  if (schedule == Schedule::constant) return alpha;
  if (t < warmup_steps)
    return alpha * static_cast<double>(t + 1) / static_cast<double>(warmup_steps);
  const std::size_t span = total > warmup_steps ? total - warmup_steps : 1;
  const double progress =
      std::min(1.0, static_cast<double>(t - warmup_steps) / static_cast<double>(span));
  return min_alpha + 0.5 * (alpha - min_alpha) * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::zeros(std::size_t dim) {
  OptimizerState s;
  s.m.assign(dim, 0.0);
  s.v.assign(dim, 0.0);
  s.momentum_buf.assign(dim, 0.0);
  return s;
}

namespace {

void ensure_state(OptimizerState& state, std::size_t dim) {
  if (state.m.empty() && state.v.empty() && state.momentum_buf.empty()) {
    state = OptimizerState::zeros(dim);
    return;
  }
  require(state.m.size() == dim && state.v.size() == dim && state.momentum_buf.size() == dim,
          ErrorKind::length_mismatch, "optimizer: state length does not match parameters");
}

void check_gradient(std::span<const double> w, std::span<const double> g) {
  require(w.size() == g.size(), ErrorKind::length_mismatch,
          "optimizer: parameter/gradient length mismatch");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]))
      throw PoisonedStateError("optimizer: non-finite gradient entry at index " +
                                   std::to_string(i),
                               i);
}

// Raw AdamW direction m̂/(√v̂ + ε); advances m, v and t.
DenseVector adam_direction(const OptimizerConfig& cfg, OptimizerState& state,
                           std::span<const double> g) {
  const std::uint64_t t = state.t + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  DenseVector u(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    u[i] = m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  state.t = t;
  return u;
}

DenseVector sgd_direction(const OptimizerConfig& cfg, OptimizerState& state,
                          std::span<const double> g) {
  for (std::size_t i = 0; i < g.size(); ++i)
    state.momentum_buf[i] = cfg.momentum * state.momentum_buf[i] + g[i];
  ++state.t;
  return state.momentum_buf;
}

// w ← w − α·u − α·λ·w, with both terms evaluated at the old w.
void apply_update(const OptimizerConfig& cfg, std::span<double> w, std::span<const double> u) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double old = w[i];
    w[i] = old - cfg.alpha * u[i] - cfg.alpha * cfg.lambda * old;
  }
}

DenseVector base_direction(BaseOptimizer base, const OptimizerConfig& cfg,
                           OptimizerState& state, std::span<const double> g) {
  return base == BaseOptimizer::adamw ? adam_direction(cfg, state, g)
                                      : sgd_direction(cfg, state, g);
}

}  // namespace

void adamw_step(const OptimizerConfig& cfg, OptimizerState& state, std::span<double> w,
                std::span<const double> g) {
  check_gradient(w, g);
  ensure_state(state, w.size());
  const DenseVector u = adam_direction(cfg, state, g);
  apply_update(cfg, w, u);
}

void sgd_step(const OptimizerConfig& cfg, OptimizerState& state, std::span<double> w,
              std::span<const double> g) {
  check_gradient(w, g);
  ensure_state(state, w.size());
  const DenseVector u = sgd_direction(cfg, state, g);
  apply_update(cfg, w, u);
}

DenseVector rotated_step(const OptimizerConfig& cfg, OptimizerState& state,
                         const CompiledRotation& rot, std::span<double> w,
                         std::span<const double> g, BaseOptimizer base) {
  check_gradient(w, g);
  require(rot.dim() == w.size(), ErrorKind::length_mismatch,
          "rotated_step: rotation dimension does not match parameters");
  ensure_state(state, w.size());
  const DenseVector g_rot = rot.apply(g);
  const DenseVector u = base_direction(base, cfg, state, g_rot);
  DenseVector back = rot.apply_inverse(u);
  apply_update(cfg, w, back);
  return back;
}

std::string Trajectory::to_csv() const {
  CsvWriter csv({"step", "loss", "grad_inf_norm"});
  for (const auto& r : records) csv.row(r.step, r.loss, r.grad_inf_norm);
  return csv.str();
}

namespace {

// Maps SVD-basis moments into a refreshed basis. m transforms linearly;
// v uses the entrywise-squared operator so it stays nonnegative.
void reproject_moments(OptimizerState& state, const CompiledRotation& old_rot,
                       const CompiledRotation& new_rot) {
  if (state.m.empty()) return;
  for (std::size_t k = 0; k < new_rot.factors().size(); ++k) {
    const SvdFactors& of = old_rot.factors()[k];
    const SvdFactors& nf = new_rot.factors()[k];
    const std::size_t rows = nf.u.rows();
    const std::size_t cols = nf.v.rows();
    const DenseMatrix left = matmul_tn(nf.u, of.u);
    const DenseMatrix right = matmul_tn(of.v, nf.v);
    DenseMatrix left2 = left;
    DenseMatrix right2 = right;
    for (double& x : left2.data()) x *= x;
    for (double& x : right2.data()) x *= x;
    auto slice = [&](DenseVector& vec) {
      return DenseMatrix(rows, cols,
                         std::vector<double>(vec.begin() + static_cast<std::ptrdiff_t>(nf.start),
                                             vec.begin() + static_cast<std::ptrdiff_t>(
                                                               nf.start + rows * cols)));
    };
    const DenseMatrix m = matmul(matmul(left, slice(state.m)), right);
    const DenseMatrix v = matmul(matmul(left2, slice(state.v)), right2);
    std::copy(m.data().begin(), m.data().end(),
              state.m.begin() + static_cast<std::ptrdiff_t>(nf.start));
    std::copy(v.data().begin(), v.data().end(),
              state.v.begin() + static_cast<std::ptrdiff_t>(nf.start));
  }
}

TrainingResult train(const Problem& problem, const OptimizerConfig& cfg,
                     CompiledRotation rotation, std::size_t refresh_interval,
                     const TrainingOptions& options, DenseVector w0) {
  cfg.validate();
  const ParamLayout& layout = problem.layout();
  require(w0.size() == layout.dim(), ErrorKind::length_mismatch,
          "run_training: initial point has wrong length");
  require(rotation.dim() == layout.dim(), ErrorKind::length_mismatch,
          "run_training: rotation dimension does not match the problem");

  TrainingResult result;
  result.params = std::move(w0);
  result.state = OptimizerState::zeros(layout.dim());
  const bool svd = rotation.scope() == RotationScope::svd;
  BatchStream batches(options.batch_seed);

  for (std::size_t t = 0; t < options.steps; ++t) {
    const Batch batch = batches.next();
    DenseVector g = problem.grad(result.params, batch);
    TrajectoryRecord rec;
    rec.step = t;
    rec.loss = problem.value(result.params, batch);
    rec.grad_inf_norm = norm_inf(g);
    if (options.snapshot_every > 0 && t % options.snapshot_every == 0)
      rec.params = result.params;
    result.trajectory.records.push_back(std::move(rec));

    try {
      if (!all_finite(g)) {
        // Reuse the optimizer's error message naming the bad index.
        check_gradient(result.params, g);
      }
      if (cfg.clip_norm > 0.0) {
        const double n = norm2(g);
        if (n > cfg.clip_norm)
          for (double& x : g) x *= cfg.clip_norm / n;
      }
      if (svd && t % refresh_interval == 0) {
        CompiledRotation fresh = svd_refresh(rotation, layout, g);
        if (options.reproject_moments && t > 0)
          reproject_moments(result.state, rotation, fresh);
        rotation = std::move(fresh);
        result.refreshes.push_back({t, svd_offdiagonal_ratio(rotation, layout, g)});
      }
      OptimizerConfig step_cfg = cfg;
      step_cfg.alpha = cfg.alpha_at(t, options.steps);
      DenseVector back =
          rotated_step(step_cfg, result.state, rotation, result.params, g, options.base);
      for (double& x : back) x *= -step_cfg.alpha;
      result.last_displacement = std::move(back);
    } catch (const Error& e) {
      result.failed = true;
      result.failure = "step " + std::to_string(t) + ": " + e.what();
      break;
    }
  }
  result.rotation = std::move(rotation);
  result.final_loss = problem.full_value(result.params);
  return result;
}

}  // namespace

TrainingResult run_training(const Problem& problem, const OptimizerConfig& cfg,
                            const RotationSpec& spec, const TrainingOptions& options,
                            DenseVector w0) {
  spec.validate();
  RandomStream rng(spec.seed);
  CompiledRotation rot = compile(spec, problem.layout(), rng);
  return train(problem, cfg, std::move(rot), spec.refresh_interval, options, std::move(w0));
}

TrainingResult run_training(const Problem& problem, const OptimizerConfig& cfg,
                            const CompiledRotation& rotation,
                            const TrainingOptions& options, DenseVector w0) {
  require(rotation.scope() != RotationScope::svd, ErrorKind::invalid_spec,
          "run_training: pass a RotationSpec for svd rotations");
  return train(problem, cfg, rotation, 1, options, std::move(w0));
}

namespace {

void base_step(BaseOptimizer alg, const OptimizerConfig& cfg, OptimizerState& state,
               std::span<double> w, std::span<const double> g) {
  if (alg == BaseOptimizer::adamw)
    adamw_step(cfg, state, w, g);
  else
    sgd_step(cfg, state, w, g);
}

}  // namespace

EquivariancePaths trace_equivariance(BaseOptimizer alg, const Problem& problem,
                                     const DenseMatrix& r, std::size_t steps,
                                     const OptimizerConfig& cfg, std::uint64_t batch_seed,
                                     std::span<const double> w0) {
  const std::size_t d = problem.dim();
  if (d > kMaxEquivarianceDim)
    throw Error(ErrorKind::refused,
                "equivariance: dimension " + std::to_string(d) +
                    " exceeds the dense-rotation limit of " +
                    std::to_string(kMaxEquivarianceDim));
  require(r.rows() == d && r.cols() == d, ErrorKind::length_mismatch,
          "equivariance: rotation must be d x d");
  require(w0.size() == d, ErrorKind::length_mismatch, "equivariance: bad initial point");
  cfg.validate();

  EquivariancePaths paths;
  DenseVector w(w0.begin(), w0.end());
  DenseVector z(d);
  kernels::matvec_serial(r, w, z);
  OptimizerState s_orig = OptimizerState::zeros(d);
  OptimizerState s_rot = OptimizerState::zeros(d);
  paths.original.push_back(w);
  paths.rotated.push_back(z);

  const BatchStream batches(batch_seed);
  DenseVector back(d);
  DenseVector g_rot(d);
  for (std::size_t t = 0; t < steps; ++t) {
    const Batch batch = batches.at(t);
    OptimizerConfig step_cfg = cfg;
    step_cfg.alpha = cfg.alpha_at(t, steps);

    const DenseVector g = problem.grad(w, batch);
    base_step(alg, step_cfg, s_orig, w, g);

    // ∇f^(R)(z) = R·∇f(Rᵀz)
    kernels::matvec_transposed_serial(r, z, back);
    const DenseVector inner = problem.grad(back, batch);
    kernels::matvec_serial(r, inner, g_rot);
    base_step(alg, step_cfg, s_rot, z, g_rot);

    paths.original.push_back(w);
    paths.rotated.push_back(z);
  }
  return paths;
}

EquivarianceReport check_equivariance(BaseOptimizer alg, const Problem& problem,
                                      const DenseMatrix& r, std::size_t steps,
                                      const OptimizerConfig& cfg, std::uint64_t batch_seed,
                                      std::span<const double> w0) {
  const EquivariancePaths paths =
      trace_equivariance(alg, problem, r, steps, cfg, batch_seed, w0);
  EquivarianceReport report;
  report.alg = alg;
  report.steps = steps;
  DenseVector rw(problem.dim());
  for (std::size_t t = 1; t < paths.original.size(); ++t) {
    kernels::matvec_serial(r, paths.original[t], rw);
    const double gap = max_abs_diff(rw, paths.rotated[t]);
    report.per_step.push_back(gap);
    report.max_discrepancy = std::max(report.max_discrepancy, gap);
  }
  return report;
}

}  // namespace rotalab
