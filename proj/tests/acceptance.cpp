// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rotalab/config.hpp"
#include "rotalab/csv.hpp"
#include "rotalab/diagnostics.hpp"
#include "rotalab/harness.hpp"
#include "rotalab/optim.hpp"
#include "rotalab/rotation.hpp"
#include "rotalab/testbeds.hpp"

using namespace rotalab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rotalab_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out[fs::relative(e.path(), dir).generic_string()] = read_text_file(e.path());
  return out;
}

QuadraticProblem noisy_quadratic(std::size_t dim, std::uint64_t seed) {
  QuadraticSpec s;
  s.dim = dim;
  s.eig_min = 0.1;
  s.eig_max = 10.0;
  s.basis = QuadraticBasis::rotated;
  s.basis_seed = seed;
  s.sigma = 0.1;
  s.seed = seed;
  s.init = InitKind::gaussian;
  return make_quadratic(s);
}

MlpProblem tanh_mlp(std::uint64_t seed) {
  MlpSpec s;
  s.widths = {4, 6, 2};
  s.activation = Activation::tanh;
  s.seed = seed;
  s.dataset_size = 64;
  s.batch_size = 8;
  return make_mlp(s);
}

DenseMatrix signed_permutation(std::size_t d, RandomStream& rng) {
  const Permutation p = random_permutation(d, rng);
  DenseMatrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) m(i, p[i]) = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return m;
}

Outcome sgd_equivariance() {
  const QuadraticProblem quad = noisy_quadratic(32, 1);
  const MlpProblem mlp = tanh_mlp(2);
  const Problem* problems[] = {&quad, &mlp};
  RandomStream rng(101);
  double worst = 0.0;
  for (const Problem* p : problems) {
    const DenseVector w0 = p->initial_point();
    for (int k = 0; k < 20; ++k) {
      const DenseMatrix r = haar_orthogonal(p->dim(), rng);
      for (double mu : {0.0, 0.9}) {
        OptimizerConfig cfg;
        cfg.alpha = 0.01;
        cfg.momentum = mu;
        const auto rep = check_equivariance(BaseOptimizer::sgd, *p, r, 100, cfg,
                                            static_cast<std::uint64_t>(k), w0);
        worst = std::max(worst, rep.max_discrepancy);
      }
    }
  }
  return {worst < 1e-9, "max discrepancy " + fmt(worst)};
}

Outcome adam_not_equivariant() {
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
  const Fig2Result r = fig2_demo(q, sgd, adam, M_PI / 4.0, 200, w0);
  return {r.adam_deviation > 1e-2 && r.sgd_deviation < 1e-9,
          "adam " + fmt(r.adam_deviation) + ", sgd " + fmt(r.sgd_deviation)};
}

Outcome adam_signed_permutations() {
  const QuadraticProblem quad = noisy_quadratic(24, 3);
  const MlpProblem mlp = tanh_mlp(4);
  const Problem* problems[] = {&quad, &mlp};
  RandomStream rng(303);
  double worst = 0.0;
  for (const Problem* p : problems) {
    const DenseVector w0 = p->initial_point();
    for (int k = 0; k < 20; ++k) {
      const DenseMatrix r = signed_permutation(p->dim(), rng);
      const DenseMatrix rt = oracle::transpose(r);
      OptimizerConfig cfg;
      cfg.alpha = 0.01;
      cfg.lambda = 0.01;
      const auto paths = trace_equivariance(BaseOptimizer::adamw, *p, r, 500, cfg,
                                            static_cast<std::uint64_t>(k), w0);
      for (std::size_t t = 0; t < paths.original.size(); ++t) {
        const double a = p->full_value(paths.original[t]);
        const double b = p->full_value(oracle::times(rt, paths.rotated[t]));
        worst = std::max(worst, std::abs(a - b));
      }
    }
  }
  return {worst <= 1e-10, "max loss gap " + fmt(worst)};
}

Outcome compiled_rotations() {
  const ParamLayout layout = ParamLayout::parse("W0:5x7,b0:5,W1:3x5,b1:3");
  RandomStream rng(404);
  double worst_oracle = 0.0;
  double worst_round = 0.0;
  double worst_orth = 0.0;
  bool residuals_ok = true;
  for (std::size_t n : {3, 4, 7, 64}) {
    for (RotationScope scope : {RotationScope::none, RotationScope::global, RotationScope::layer,
                                RotationScope::output, RotationScope::input,
                                RotationScope::svd}) {
      RotationSpec spec;
      spec.scope = scope;
      spec.block_dim = n;
      spec.seed = n;
      CompiledRotation rot = compile(spec, layout, rng);
      if (scope == RotationScope::svd) {
        DenseVector g(layout.dim());
        for (double& x : g) x = rng.normal();
        rot = svd_refresh(rot, layout, g);
      }
      const DenseMatrix dense = scope == RotationScope::svd ? oracle::dense_svd_rotation(rot)
                                                            : oracle::dense_rotation(rot);
      worst_orth = std::max(worst_orth, orthogonality_residual(dense));
      for (int k = 0; k < 1000; ++k) {
        DenseVector x(layout.dim());
        for (double& v : x) v = rng.normal();
        worst_oracle = std::max(worst_oracle, oracle::max_abs(rot.apply(x), oracle::times(dense, x)));
        worst_round = std::max(worst_round, oracle::max_abs(rot.apply_inverse(rot.apply(x)), x));
      }
      if (scope == RotationScope::svd || scope == RotationScope::none) continue;
      const auto sets = partition_indices(layout, scope);
      const auto& parts = rot.partitions();
      if (parts.size() != sets.size()) residuals_ok = false;
      for (std::size_t k = 0; k < parts.size() && residuals_ok; ++k) {
        const std::size_t s = sets[k].size();
        const std::size_t p = s - n * (s / n);
        std::size_t full = 0;
        std::size_t residual = 0;
        for (const auto& slot : parts[k].blocks) {
          const std::size_t b = rot.pool()[slot.pool_index].rows();
          if (b == n) {
            ++full;
          } else {
            residual = b;
          }
        }
        if (full != s / n || residual != p) residuals_ok = false;
      }
    }
  }
  const bool pass =
      worst_oracle < 1e-12 && worst_round < 1e-12 && worst_orth < 1e-12 && residuals_ok;
  return {pass, "oracle " + fmt(worst_oracle) + ", round trip " + fmt(worst_round) +
                    ", residual sizes " + (residuals_ok ? "exact" : "WRONG")};
}

Outcome haar_statistics() {
  constexpr std::size_t n = 8;
  constexpr int samples = 10000;
  RandomStream rng(505);
  std::vector<double> s1(n * n, 0.0), s2(n * n, 0.0), q1(n * n, 0.0), q2(n * n, 0.0);
  double worst_orth = 0.0;
  for (int k = 0; k < samples; ++k) {
    const DenseMatrix q = haar_orthogonal(n, rng);
    worst_orth = std::max(worst_orth, orthogonality_residual(q));
    for (std::size_t e = 0; e < n * n; ++e) {
      const double x = q.data()[e];
      s1[e] += x;
      s2[e] += x * x;
      q1[e] += x * x;
      q2[e] += x * x * x * x;
    }
  }
  int bad = 0;
  double worst_z = 0.0;
  auto z_score = [&](double sum, double sum_sq, double target) {
    const double mean = sum / samples;
    const double var = (sum_sq / samples - mean * mean) * samples / (samples - 1);
    return std::abs(mean - target) / std::sqrt(var / samples);
  };
  for (std::size_t e = 0; e < n * n; ++e) {
    const double z1 = z_score(s1[e], s2[e], 0.0);
    const double z2 = z_score(q1[e], q2[e], 1.0 / n);
    worst_z = std::max({worst_z, z1, z2});
    if (z1 > 3.0 || z2 > 3.0) ++bad;
  }
  // 128 comparisons at 3 SE: a correct sampler exceeds 4 of them with probability < 1e-3.
  return {bad <= 4 && worst_z < 4.5 && worst_orth < 1e-12,
          std::to_string(bad) + "/128 outside 3 SE, worst |z| " + fmt(worst_z) +
              ", orthogonality " + fmt(worst_orth)};
}

Outcome svd_diagonalization() {
  MlpSpec s;
  s.widths = {6, 10, 8, 3};
  s.seed = 6;
  const MlpProblem p = make_mlp(s);
  RotationSpec spec;
  spec.scope = RotationScope::svd;
  spec.refresh_interval = 20;
  TrainingOptions opt;
  opt.steps = 200;
  opt.batch_seed = 6;
  OptimizerConfig cfg;
  cfg.alpha = 0.003;
  const TrainingResult r = run_training(p, cfg, spec, opt, p.initial_point());
  double worst = 0.0;
  for (const auto& rec : r.refreshes) worst = std::max(worst, rec.offdiagonal_ratio);
  return {!r.failed && r.refreshes.size() == 10 && worst < 1e-8,
          std::to_string(r.refreshes.size()) + " refreshes, worst off-diagonal ratio " +
              fmt(worst)};
}

struct Sweep {
  std::map<std::string, std::vector<RunRecord>> by_variant;
};

Sweep run_recipe(const std::string& file, const fs::path& root) {
  const ExperimentConfig cfg = load_config(fs::path(ROTALAB_RECIPES_DIR) / file);
  const ExperimentOutputs out = execute_experiment(cfg, root / cfg.run.output);
  Sweep s;
  for (const auto& r : out.runs) s.by_variant[r.variant].push_back(r);
  for (auto& [name, runs] : s.by_variant)
    std::sort(runs.begin(), runs.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
  return s;
}

Outcome scope_ordering() {
  const fs::path root = scratch("fig1");
  const Sweep s = run_recipe("fig1-analog.cfg", root);
  fs::remove_all(root);
  const auto& none = s.by_variant.at("none");
  const auto& output = s.by_variant.at("output");
  const auto& layer = s.by_variant.at("layer");
  const auto& global = s.by_variant.at("global");
  auto mean = [](const std::vector<RunRecord>& runs) {
    double m = 0.0;
    for (const auto& r : runs) m += r.final_loss / static_cast<double>(runs.size());
    return m;
  };
  const double mn = mean(none), mo = mean(output), ml = mean(layer), mg = mean(global);
  int ordered = 0;
  for (std::size_t k = 0; k < none.size(); ++k)
    if (none[k].final_loss <= output[k].final_loss && output[k].final_loss < layer[k].final_loss &&
        layer[k].final_loss <= global[k].final_loss)
      ++ordered;
  const bool pass = mn <= mo && mo < ml && ml <= mg && mg / mn > 1.1 && ordered >= 9;
  return {pass, "means " + fmt(mn) + " / " + fmt(mo) + " / " + fmt(ml) + " / " + fmt(mg) +
                    ", global/none " + fmt(mg / mn) + ", ordered in " + std::to_string(ordered) +
                    "/10 seeds"};
}

Outcome diagnostics_congruence() {
  QuadraticSpec s;
  s.dim = 35;
  s.eig_min = 0.1;
  s.eig_max = 10.0;
  s.basis = QuadraticBasis::rotated;
  s.basis_seed = 8;
  s.sigma = 0.2;
  s.seed = 8;
  s.layout = ParamLayout::parse("W0:4x4,b0:4,W1:3x4,b1:3");
  const QuadraticProblem q = make_quadratic(s);
  const DenseMatrix a = q.hessian();
  const DenseVector w = q.initial_point();
  RandomStream rng(808);
  double worst_row = 0.0;
  double worst_sum = 0.0;
  bool cover_ok = true;
  for (int k = 0; k < 20; ++k) {
    const DenseMatrix r = haar_orthogonal(s.dim, rng);
    const DenseMatrix rar = oracle::multiply(oracle::multiply(r, a), oracle::transpose(r));
    const CompiledRotation rot = CompiledRotation::dense(r);
    for (std::size_t i : sample_rows(s.dim, 5, rng)) {
      const HessianRowSample row = hessian_row(q, w, rot, i, 4, static_cast<std::uint64_t>(k));
      for (std::size_t j = 0; j < s.dim; ++j)
        worst_row = std::max(worst_row, std::abs(row.row[j] - rar(i, j)));
      const RowPartition parts = partition_row(row, q.layout(), i);
      std::vector<int> seen(s.dim, 0);
      for (const IndexSet* idx : {&parts.neuron_indices, &parts.layer_indices, &parts.other_indices})
        for (std::size_t j : *idx) ++seen[j];
      for (int c : seen) cover_ok = cover_ok && c == 1;
      for (std::size_t j = 0; j < s.dim; ++j)
        worst_sum = std::max(worst_sum,
                             std::abs(parts.neuron[j] + parts.layer[j] + parts.other[j] - row.row[j]));
      const DenseVector dw = random_unit_direction(s.dim, rng);
      const RowContribution c = row_contribution(parts, dw);
      worst_sum = std::max(worst_sum, std::abs(c.neuron + c.layer + c.other - c.total));
    }
  }
  return {worst_row < 1e-10 && worst_sum < 1e-12 && cover_ok,
          "row error " + fmt(worst_row) + ", sum identities " + fmt(worst_sum)};
}

Outcome one_one_calibration() {
  constexpr std::size_t d = 64;
  RandomStream rng(909);
  int within = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    DenseMatrix h(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) h(i, j) = h(j, i) = rng.normal();
    const double exact = oracle::entrywise_l1(h);
    std::vector<HessianRowSample> samples;
    for (std::size_t i : sample_rows(d, 16, rng)) {
      HessianRowSample smp;
      smp.index = i;
      smp.row.assign(h.row(i).begin(), h.row(i).end());
      samples.push_back(std::move(smp));
    }
    const double rel = std::abs(one_one_norm_estimate(samples, d).estimate - exact) / exact;
    worst = std::max(worst, rel);
    if (rel <= 0.25) ++within;
  }
  return {within >= 90, std::to_string(within) + "/100 within 25%, worst " + fmt(worst)};
}

Outcome gradient_bound() {
  QuadraticSpec s;
  s.dim = 20;
  s.eig_min = 0.01;
  s.eig_max = 100.0;
  s.init = InitKind::gaussian;
  s.seed = 10;
  for (std::size_t i = 0; i < s.dim; ++i) s.minimizer.push_back(0.1 * static_cast<double>(i));
  const QuadraticProblem det = make_quadratic(s);
  const DenseVector w = det.initial_point();
  double expect = 0.0;
  for (std::size_t i = 0; i < s.dim; ++i)
    expect = std::max(expect, std::abs(det.eigenvalues()[i] * (w[i] - s.minimizer[i])));
  const double got = linf_gradient_bound(det, w, CompiledRotation::identity(s.dim), 50, 1).c_tilde;
  const bool exact = got == expect;

  s.sigma = 0.3;
  s.layout = ParamLayout::parse("W:4x4,b:4");
  const QuadraticProblem noisy = make_quadratic(s);
  RandomStream rng(1010);
  RotationSpec spec;
  spec.scope = RotationScope::global;
  spec.block_dim = 8;
  bool bitwise = true;
  for (const CompiledRotation& rot :
       {CompiledRotation::identity(s.dim), compile(spec, noisy.layout(), rng)}) {
    const BatchStream batches(77);
    double brute = 0.0;
    for (std::uint64_t i = 0; i < 1000; ++i)
      brute = std::max(brute, norm_inf(rot.apply(noisy.grad(w, batches.at(i)), kernels::Exec::serial)));
    for (kernels::Exec ex : {kernels::Exec::serial, kernels::Exec::parallel})
      bitwise = bitwise && linf_gradient_bound(noisy, w, rot, 1000, 77, ex).c_tilde == brute;
  }
  return {exact && bitwise, std::string("deterministic ") + (exact ? "exact" : "MISMATCH") +
                                ", stochastic " + (bitwise ? "bitwise equal" : "MISMATCH")};
}

Outcome second_moment_concentration() {
  const fs::path root = scratch("fig6");
  const Sweep s = run_recipe("fig6-histograms.cfg", root);
  fs::remove_all(root);
  const auto& none = s.by_variant.at("none");
  const auto& global = s.by_variant.at("global");
  int tighter = 0;
  for (std::size_t k = 0; k < none.size(); ++k)
    if (global[k].iqr_log10_v < none[k].iqr_log10_v) ++tighter;
  return {tighter >= 9, "global IQR smaller in " + std::to_string(tighter) + "/" +
                            std::to_string(none.size()) + " seeds"};
}

Outcome reproducibility() {
  const fs::path root = scratch("repro");
  std::size_t recipes = 0;
  std::size_t files = 0;
  std::string mismatch;
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(ROTALAB_RECIPES_DIR))
    if (e.path().extension() == ".cfg") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  for (const fs::path& p : paths) {
    std::ostringstream log;
    const ExperimentConfig cfg = load_config(p);
    HarnessOptions first{root / "a", &log};
    HarnessOptions second{root / "b", &log};
    if (cmd_run(p, first) != exit_ok) mismatch += " " + p.filename().string() + "(run)";
    const fs::path a = root / "a" / cfg.run.output;
    if (cmd_run(a / "manifest.json", second) != exit_ok)
      mismatch += " " + p.filename().string() + "(rerun)";
    const auto fa = csv_files(a);
    const auto fb = csv_files(root / "b" / cfg.run.output);
    if (fa.empty() || fa != fb) mismatch += " " + p.filename().string();
    ++recipes;
    files += fa.size();
  }
  fs::remove_all(root);
  return {recipes > 0 && mismatch.empty(),
          std::to_string(recipes) + " recipes, " + std::to_string(files) +
              " CSV files" + (mismatch.empty() ? " identical" : ", differing:" + mismatch)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"SGD rotation equivariance", sgd_equivariance},
      {"Adam non-equivariance under a 45 degree rotation", adam_not_equivariant},
      {"AdamW signed-permutation equivariance", adam_signed_permutations},
      {"compiled rotation correctness", compiled_rotations},
      {"Haar sampler statistics", haar_statistics},
      {"SVD rotation diagonalization", svd_diagonalization},
      {"scope degradation ordering", scope_ordering},
      {"Hessian row congruence and partition identities", diagnostics_congruence},
      {"(1,1)-norm estimator calibration", one_one_calibration},
      {"gradient bound estimator", gradient_bound},
      {"second-moment concentration", second_moment_concentration},
      {"manifest reruns are byte-identical", reproducibility},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("[%2zu] %s  %s: %s (%.2f s)\n", k + 1, o.pass ? "PASS" : "FAIL",
                criteria[k].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
