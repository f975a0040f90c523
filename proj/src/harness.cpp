// SPDX-License-Identifier: Apache-2.0

#include "rotalab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include "rotalab/csv.hpp"
#include "rotalab/error.hpp"
#include "rotalab/random.hpp"
#include "rotalab/testbeds.hpp"

namespace fs = std::filesystem;

namespace rotalab {

int exit_code_for(const std::exception& e) noexcept {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::poisoned_state:
      case ErrorKind::decomposition_failure:
        return exit_numeric;
      default:
        return exit_config;
    }
  }
  if (dynamic_cast<const fs::filesystem_error*>(&e) ||
      dynamic_cast<const nlohmann::json::exception*>(&e))
    return exit_config;
  return exit_numeric;
}

fs::path resolve_output_root(const HarnessOptions& options) {
  if (options.output_root) return *options.output_root;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return fs::path(env);
  return fs::current_path();
}

std::string config_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunSeeds derive_run_seeds(const ExperimentConfig& cfg, std::size_t repetition,
                          RotationScope variant) {
  require(repetition < cfg.run.seeds.size(), ErrorKind::invalid_spec,
          "run: repetition index out of range");
  RunSeeds s;
  s.master = cfg.run.seeds[repetition];
  s.repetition = repetition;
  s.problem = cfg.problem.seed.value_or(derive_seed(s.master, "problem", repetition));
  s.batches = derive_seed(s.master, "batches", repetition);
  s.rotation = derive_seed(s.master, to_string(variant), repetition);
  return s;
}

std::unique_ptr<Problem> build_problem(const ProblemConfig& cfg, std::uint64_t seed) {
  if (cfg.kind == ProblemKind::quadratic) {
    QuadraticSpec spec = cfg.quadratic;
    spec.seed = seed;
    return std::make_unique<QuadraticProblem>(std::move(spec));
  }
  MlpSpec spec = cfg.mlp;
  spec.seed = seed;
  return std::make_unique<MlpProblem>(std::move(spec));
}

namespace {

std::ostream& log_of(const HarnessOptions& o) { return o.log ? *o.log : std::cout; }

std::string run_label(const RunSeeds& s, std::string_view variant) {
  std::ostringstream out;
  out << "seed=" << s.master << "\nrepetition=" << s.repetition << "\nvariant=" << variant
      << "\nproblem_seed=" << s.problem << "\nbatch_seed=" << s.batches
      << "\nrotation_seed=" << s.rotation << "\n";
  return out.str();
}

std::optional<std::string> label_value(const std::string& label, std::string_view key) {
  std::istringstream in(label);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.substr(0, eq) == key) return line.substr(eq + 1);
  }
  return std::nullopt;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class FileSink {
 public:
  FileSink(fs::path base, std::vector<fs::path>* written) : base_(std::move(base)), out_(written) {}

  void write(const fs::path& rel, std::string_view text) {
    write_text_file(base_ / rel, text);
    if (out_) out_->push_back(rel);
  }
  void snapshot(const fs::path& rel, const Snapshot& snap) {
    save_snapshot(base_ / rel, snap);
    if (out_) out_->push_back(rel);
  }

 private:
  fs::path base_;
  std::vector<fs::path>* out_;
};

CompiledRotation probe_rotation(const ExperimentConfig& cfg, const Snapshot& snap,
                                const Problem& problem, std::span<const double> w,
                                const std::string& probe) {
  if (probe == "checkpoint") return snap.rotation;
  RotationSpec spec = cfg.rotation.spec;
  spec.scope = parse_scope(probe);
  spec.seed = derive_seed(cfg.diagnostics.seed, probe, 0);
  RandomStream rng(spec.seed);
  CompiledRotation rot = compile(spec, problem.layout(), rng);
  if (spec.scope == RotationScope::svd)
    rot = svd_refresh(rot, problem.layout(), problem.full_grad(w));
  return rot;
}

nlohmann::json stats_json(const PartStats& s) {
  return {{"count", s.count}, {"mean_abs", s.mean_abs}, {"max_abs", s.max_abs}};
}

DenseVector unit(DenseVector x) {
  const double n = norm2(x);
  if (n > 0.0)
    for (double& v : x) v /= n;
  return x;
}

}  // namespace

nlohmann::json diagnose_checkpoint(const ExperimentConfig& cfg, const Snapshot& snap,
                                   const fs::path& dir, std::vector<fs::path>* written) {
  const DiagnosticsConfig& dc = cfg.diagnostics;
  require(snap.params.has_value(), ErrorKind::io, "checkpoint carries no parameters");
  std::uint64_t problem_seed = 0;
  if (auto v = label_value(snap.label, "problem_seed"))
    problem_seed = std::stoull(*v);
  else
    problem_seed = derive_run_seeds(cfg, 0, RotationScope::none).problem;
  const std::unique_ptr<Problem> problem = build_problem(cfg.problem, problem_seed);
  const std::size_t d = problem->dim();
  require(snap.rotation.dim() == d, ErrorKind::length_mismatch,
          "checkpoint dimension " + std::to_string(snap.rotation.dim()) +
              " does not match the configured problem (" + std::to_string(d) + ")");
  const DenseVector& w = *snap.params;
  const std::string tag = label_value(snap.label, "variant").value_or(
      std::string(to_string(snap.rotation.scope())));

  RandomStream row_rng(derive_seed(dc.seed, "rows", 0));
  const std::size_t row_count = std::min(dc.rows, d);
  const std::vector<std::size_t> rows = dc.stratified
                                            ? sample_rows_stratified(problem->layout(), row_count, row_rng)
                                            : sample_rows(d, row_count, row_rng);
  const std::size_t k = problem->deterministic() ? 1 : dc.k;

  FileSink sink(dir, written);
  CsvWriter bounds({"probe", "trials", "c_tilde", "mean_linf", "standard_error"});
  CsvWriter norms({"probe", "rows", "estimate", "standard_error"});
  CsvWriter row_stats({"probe", "row", "part", "count", "mean_abs", "max_abs"});
  CsvWriter contrib({"probe", "row", "direction", "neuron", "layer", "other", "total"});

  nlohmann::json report;
  report["checkpoint"] = tag;
  report["dim"] = d;
  report["k"] = k;
  report["seed"] = dc.seed;
  report["probes"] = nlohmann::json::array();

  double first_norm = 0.0;
  for (std::size_t p = 0; p < dc.probes.size(); ++p) {
    const std::string& name = dc.probes[p];
    const CompiledRotation rot = probe_rotation(cfg, snap, *problem, w, name);

    GradBoundReport gb =
        linf_gradient_bound(*problem, w, rot, dc.trials, derive_seed(dc.seed, "trials", 0));
    gb.probe_tag = name;
    gb.checkpoint_tag = tag;
    bounds.row(name, gb.trials, gb.c_tilde, gb.mean, gb.standard_error);

    std::optional<DenseVector> update_dir;
    if (snap.last_update) update_dir = unit(rot.apply(*snap.last_update));

    std::vector<HessianRowSample> samples;
    nlohmann::json row_json = nlohmann::json::array();
    for (std::size_t i : rows) {
      HessianRowSample s = hessian_row(*problem, w, rot, i, k, derive_seed(dc.seed, "hvp", 0));
      s.probe_tag = name;
      s.checkpoint_tag = tag;
      const RowPartition part = partition_row(s, problem->layout(), i);
      row_stats.row(name, i, "neuron", part.neuron_stats.count, part.neuron_stats.mean_abs,
                    part.neuron_stats.max_abs);
      row_stats.row(name, i, "layer", part.layer_stats.count, part.layer_stats.mean_abs,
                    part.layer_stats.max_abs);
      row_stats.row(name, i, "other", part.other_stats.count, part.other_stats.mean_abs,
                    part.other_stats.max_abs);

      RandomStream dir_rng(derive_seed(dc.seed, "direction", i));
      const RowContribution cr = row_contribution(part, random_unit_direction(d, dir_rng));
      contrib.row(name, i, "random", cr.neuron, cr.layer, cr.other, cr.total);
      nlohmann::json rj = {{"index", i},
                           {"neuron", stats_json(part.neuron_stats)},
                           {"layer", stats_json(part.layer_stats)},
                           {"other", stats_json(part.other_stats)},
                           {"random", {cr.neuron, cr.layer, cr.other, cr.total}}};
      if (update_dir) {
        const RowContribution cu = row_contribution(part, *update_dir);
        contrib.row(name, i, "update", cu.neuron, cu.layer, cu.other, cu.total);
        rj["update"] = {cu.neuron, cu.layer, cu.other, cu.total};
      }
      row_json.push_back(std::move(rj));
      samples.push_back(std::move(s));
    }
    const OneOneEstimate est = one_one_norm_estimate(samples, d);
    norms.row(name, est.rows, est.estimate, est.standard_error);
    if (p == 0) first_norm = est.estimate;

    nlohmann::json pj = {{"probe", name},
                         {"gradient_bound", gb.to_json()},
                         {"one_one_norm", est.to_json()},
                         {"rows", std::move(row_json)}};
    if (p > 0 && first_norm != 0.0)
      pj["one_one_norm_relative_change"] = (est.estimate - first_norm) / first_norm;
    report["probes"].push_back(std::move(pj));
  }

  sink.write("gradient_bounds.csv", bounds.str());
  sink.write("one_one_norm.csv", norms.str());
  sink.write("row_stats.csv", row_stats.str());
  sink.write("contributions.csv", contrib.str());
  if (snap.state && !snap.state->v.empty()) {
    const SecondMomentHistogram h = second_moment_histogram(*snap.state, dc.bins);
    report["second_moment"] = h.to_json();
    sink.write("v_histogram.csv", h.to_csv());
  }
  sink.write("diagnostics.json", report.dump(2) + "\n");
  return report;
}

std::vector<DenseMatrix> equivariance_rotations(const EquivarianceConfig& cfg, std::size_t dim) {
  std::vector<DenseMatrix> out;
  RandomStream rng(cfg.seed);
  for (std::size_t r = 0; r < cfg.rotations; ++r) {
    switch (cfg.kind) {
      case EquivarianceKind::identity:
        out.push_back(DenseMatrix::identity(dim));
        break;
      case EquivarianceKind::dense:
        out.push_back(haar_orthogonal(dim, rng));
        break;
      case EquivarianceKind::planar:
        require(dim >= 2, ErrorKind::invalid_spec, "equivariance: planar needs dim >= 2");
        out.push_back(planar_rotation(dim, 0, 1, cfg.angle_deg * std::numbers::pi / 180.0));
        break;
      case EquivarianceKind::signed_permutation: {
        const Permutation p = random_permutation(dim, rng);
        DenseMatrix m(dim, dim);
        for (std::size_t i = 0; i < dim; ++i) m(i, p[i]) = (rng.next_u64() >> 63) ? -1.0 : 1.0;
        out.push_back(std::move(m));
        break;
      }
    }
  }
  return out;
}

namespace {

struct Job {
  std::size_t repetition = 0;
  RotationScope variant = RotationScope::none;
};

RunRecord run_job(const ExperimentConfig& cfg, const Job& job, const fs::path& root,
                  std::vector<fs::path>& files) {
  const RunSeeds seeds = derive_run_seeds(cfg, job.repetition, job.variant);
  const std::string variant(to_string(job.variant));
  const fs::path rel = fs::path("seed-" + std::to_string(seeds.master)) / variant;
  const std::unique_ptr<Problem> problem = build_problem(cfg.problem, seeds.problem);

  RotationSpec spec = cfg.rotation.spec;
  spec.scope = job.variant;
  spec.seed = seeds.rotation;
  TrainingOptions opts;
  opts.base = cfg.base;
  opts.steps = cfg.run.steps;
  opts.snapshot_every = cfg.run.snapshot_every;
  opts.batch_seed = seeds.batches;
  opts.reproject_moments = cfg.rotation.reproject_moments;
  const TrainingResult result =
      run_training(*problem, cfg.optimizer, spec, opts, problem->initial_point());

  FileSink sink(root, &files);
  sink.write(rel / "trajectory.csv", result.trajectory.to_csv());
  if (cfg.run.snapshot_every > 0) {
    CsvWriter snaps({"step", "index", "value"});
    for (const auto& rec : result.trajectory.records)
      if (rec.params)
        for (std::size_t i = 0; i < rec.params->size(); ++i) snaps.row(rec.step, i, (*rec.params)[i]);
    sink.write(rel / "snapshots.csv", snaps.str());
  }
  if (job.variant == RotationScope::svd) {
    CsvWriter refresh({"step", "offdiagonal_ratio"});
    for (const auto& r : result.refreshes) refresh.row(r.step, r.offdiagonal_ratio);
    sink.write(rel / "refreshes.csv", refresh.str());
  }

  Snapshot snap;
  snap.rotation = result.rotation;
  snap.params = result.params;
  snap.state = result.state;
  if (!result.last_displacement.empty()) snap.last_update = result.last_displacement;
  snap.label = run_label(seeds, variant);
  sink.snapshot(rel / "checkpoint.rotl", snap);

  RunRecord rec;
  rec.seed = seeds.master;
  rec.variant = variant;
  rec.dir = rel;
  rec.final_loss = result.final_loss;
  rec.failed = result.failed;
  rec.failure = result.failure;
  if (cfg.base == BaseOptimizer::adamw && !result.failed) {
    const SecondMomentHistogram h = second_moment_histogram(result.state, cfg.diagnostics.bins);
    rec.iqr_log10_v = h.iqr_log10;
    sink.write(rel / "v_histogram.csv", h.to_csv());
  }
  if (cfg.run.diagnose && !result.failed) {
    std::vector<fs::path> diag_files;
    diagnose_checkpoint(cfg, snap, root / rel / "diagnostics", &diag_files);
    for (auto& f : diag_files) files.push_back(rel / "diagnostics" / f);
  }
  return rec;
}

ExperimentOutputs execute_fig2(const ExperimentConfig& cfg, const fs::path& dir) {
  const std::uint64_t master = cfg.run.seeds.empty() ? 0 : cfg.run.seeds.front();
  QuadraticSpec spec = cfg.problem.quadratic;
  spec.seed = cfg.problem.seed.value_or(derive_seed(master, "problem", 0));
  const QuadraticProblem problem(spec);

  OptimizerConfig sgd = cfg.optimizer;
  sgd.alpha = cfg.fig2.sgd_alpha;
  sgd.momentum = cfg.fig2.sgd_momentum;
  sgd.min_alpha = std::min(sgd.min_alpha, sgd.alpha);
  OptimizerConfig adam = cfg.optimizer;
  adam.alpha = cfg.fig2.adam_alpha;
  adam.min_alpha = std::min(adam.min_alpha, adam.alpha);

  const Fig2Result res =
      fig2_demo(problem, sgd, adam, cfg.fig2.angle_deg * std::numbers::pi / 180.0, cfg.fig2.steps,
                cfg.fig2.start, derive_seed(master, "batches", 0));

  ExperimentOutputs out;
  out.dir = dir;
  FileSink sink(dir, &out.files);
  sink.write("fig2.csv", res.to_csv());
  CsvWriter dev({"alg", "max_deviation"});
  dev.row("sgd", res.sgd_deviation);
  dev.row("adamw", res.adam_deviation);
  sink.write("deviation.csv", dev.str());
  return out;
}

void write_manifest(const ExperimentConfig& cfg, ExperimentOutputs& out, double seconds) {
  std::sort(out.files.begin(), out.files.end());
  nlohmann::json m;
  m["version"] = kVersion;
  m["name"] = cfg.run.name;
  m["config_hash"] = config_hash(cfg.source);
  m["config"] = cfg.source;
  m["output"] = cfg.run.output;
  m["created_utc"] = utc_timestamp();
  m["wall_clock_seconds"] = seconds;
  m["runs"] = nlohmann::json::array();
  for (std::size_t r = 0; r < cfg.run.seeds.size() && cfg.run.mode == RunMode::train; ++r) {
    for (RotationScope v : cfg.rotation.scopes) {
      const RunSeeds s = derive_run_seeds(cfg, r, v);
      m["runs"].push_back({{"seed", s.master},
                           {"repetition", r},
                           {"variant", to_string(v)},
                           {"problem_seed", s.problem},
                           {"batch_seed", s.batches},
                           {"rotation_seed", s.rotation}});
    }
  }
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : out.files) files.push_back(f.generic_string());
  m["files"] = std::move(files);
  write_text_file(out.dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace

ExperimentOutputs execute_experiment(const ExperimentConfig& cfg, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentOutputs out;
  if (cfg.run.mode == RunMode::fig2) {
    out = execute_fig2(cfg, dir);
  } else {
    out.dir = dir;
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < cfg.run.seeds.size(); ++r)
      for (RotationScope v : cfg.rotation.scopes) jobs.push_back({r, v});

    std::vector<RunRecord> records(jobs.size());
    std::vector<std::vector<fs::path>> files(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    const auto count = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < count; ++j) {
      const auto k = static_cast<std::size_t>(j);
      try {
        records[k] = run_job(cfg, jobs[k], dir, files[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    CsvWriter summary({"seed", "variant", "final_loss", "iqr_log10_v", "failed"});
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      const RunRecord& r = records[k];
      summary.row(r.seed, r.variant, r.final_loss, r.iqr_log10_v, r.failed ? 1 : 0);
      out.any_failed = out.any_failed || r.failed;
      out.files.insert(out.files.end(), files[k].begin(), files[k].end());
    }
    FileSink(dir, &out.files).write("summary.csv", summary.str());
    out.runs = std::move(records);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(cfg, out, seconds);
  return out;
}

int cmd_run(const fs::path& config_or_manifest, const HarnessOptions& options) {
  std::string text;
  try {
    text = read_text_file(config_or_manifest);
  } catch (const Error&) {
    throw ConfigError("cannot read " + config_or_manifest.string());
  }
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(text);
      text = manifest.at("config").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("not a valid manifest: " + std::string(e.what()));
    }
  }
  const ExperimentConfig cfg = parse_config(text);
  const fs::path dir = resolve_output_root(options) / cfg.run.output;
  const ExperimentOutputs out = execute_experiment(cfg, dir);

  std::ostream& log = log_of(options);
  for (const auto& r : out.runs) {
    log << "seed " << r.seed << " " << r.variant << ": final loss " << format_double(r.final_loss);
    if (r.failed) log << " FAILED (" << r.failure << ")";
    log << "\n";
  }
  log << "wrote " << out.files.size() << " files and manifest.json to " << dir.string() << "\n";
  return out.any_failed ? exit_numeric : exit_ok;
}

int cmd_equivariance(const fs::path& config, const HarnessOptions& options) {
  const ExperimentConfig cfg = load_config(config);
  const RunSeeds seeds = derive_run_seeds(cfg, 0, RotationScope::none);
  const std::unique_ptr<Problem> problem = build_problem(cfg.problem, seeds.problem);
  const DenseVector w0 = problem->initial_point();
  const std::vector<DenseMatrix> rotations =
      equivariance_rotations(cfg.equivariance, problem->dim());
  const std::size_t steps = cfg.equivariance.steps;
  const double tol = cfg.equivariance.tolerance;

  nlohmann::json report;
  report["kind"] = to_string(cfg.equivariance.kind);
  report["rotations"] = rotations.size();
  report["steps"] = steps;
  report["tolerance"] = tol;
  report["results"] = nlohmann::json::array();

  std::ostream& log = log_of(options);
  bool gate_failed = false;
  for (BaseOptimizer alg : cfg.equivariance.algs) {
    double worst = 0.0;
    std::vector<double> per_rotation;
    for (const auto& r : rotations) {
      const EquivarianceReport rep =
          check_equivariance(alg, *problem, r, steps, cfg.optimizer, seeds.batches, w0);
      per_rotation.push_back(rep.max_discrepancy);
      worst = std::max(worst, rep.max_discrepancy);
    }
    const bool equivariant = worst <= tol;
    std::string note;
    if (alg == BaseOptimizer::sgd) {
      note = equivariant ? "equivariant" : "regression: SGD must be rotation equivariant";
      gate_failed = gate_failed || !equivariant;
    } else {
      note = equivariant ? "no discrepancy under these rotations"
                         : "not equivariant under these rotations (expected for adaptive methods)";
    }
    report["results"].push_back({{"alg", to_string(alg)},
                                 {"max_discrepancy", worst},
                                 {"per_rotation", per_rotation},
                                 {"equivariant", equivariant},
                                 {"note", note}});
    log << to_string(alg) << ": max discrepancy " << format_double(worst) << " (" << note
        << ")\n";
  }
  const fs::path dir = resolve_output_root(options) / cfg.run.output;
  write_text_file(dir / "equivariance.json", report.dump(2) + "\n");
  log << "wrote " << (dir / "equivariance.json").string() << "\n";
  return gate_failed ? exit_numeric : exit_ok;
}

int cmd_diagnose(const fs::path& config, const fs::path& checkpoint,
                 const HarnessOptions& options) {
  const ExperimentConfig cfg = load_config(config);
  const Snapshot snap = load_snapshot(checkpoint);
  std::string sub = "diagnose";
  if (auto s = label_value(snap.label, "seed")) sub += "-seed-" + *s;
  if (auto v = label_value(snap.label, "variant")) sub += "-" + *v;
  const fs::path dir = resolve_output_root(options) / cfg.run.output / sub;
  const nlohmann::json report = diagnose_checkpoint(cfg, snap, dir);

  std::ostream& log = log_of(options);
  for (const auto& p : report["probes"]) {
    log << "probe " << p["probe"].get<std::string>() << ": C~ = "
        << format_double(p["gradient_bound"]["c_tilde"].get<double>())
        << ", (1,1)-norm ~ " << format_double(p["one_one_norm"]["estimate"].get<double>())
        << "\n";
  }
  log << "wrote diagnostics to " << dir.string() << "\n";
  return exit_ok;
}

int cmd_sample_rotation(const SampleRotationArgs& args, const HarnessOptions& options) {
  ParamLayout layout;
  if (args.layout.empty()) {
    require(args.dim >= 1, ErrorKind::invalid_dimension, "sample-rotation: --dim must be >= 1");
    layout.add_vector("w", args.dim);
  } else {
    layout = ParamLayout::parse(args.layout);
    require(args.dim == 0 || args.dim == layout.dim(), ErrorKind::invalid_spec,
            "sample-rotation: --dim does not match --layout");
  }
  RotationSpec spec;
  spec.scope = args.scope;
  spec.block_dim = args.block;
  spec.seed = args.seed;
  spec.shared_blocks = args.shared_blocks;
  spec.validate();
  RandomStream rng(spec.seed);
  const CompiledRotation rot = compile(spec, layout, rng);
  const std::size_t d = layout.dim();

  std::ostream& log = log_of(options);
  log << "scope " << to_string(spec.scope) << ", d = " << d << ", block = " << spec.block_dim
      << ", seed = " << spec.seed << "\n";
  const auto summary = rot.summary();
  for (std::size_t k = 0; k < summary.size(); ++k)
    log << "partition " << k << ": size " << summary[k].size << ", full blocks "
        << summary[k].full_blocks << " x " << summary[k].block_dim << ", residual "
        << summary[k].residual << "\n";

  RandomStream probe(derive_seed(spec.seed, "probe", 0));
  double round_trip = 0.0;
  double norm_gap = 0.0;
  for (int trial = 0; trial < 16; ++trial) {
    DenseVector x(d);
    for (double& v : x) v = probe.normal();
    const DenseVector y = rot.apply(x);
    round_trip = std::max(round_trip, max_abs_diff(rot.apply_inverse(y), x));
    norm_gap = std::max(norm_gap, std::abs(norm2(y) - norm2(x)) / norm2(x));
  }
  log << "round-trip error " << format_double(round_trip) << ", relative norm change "
      << format_double(norm_gap) << "\n";
  double residual = std::max(round_trip, norm_gap);
  if (d <= 1024) {
    const double orth = orthogonality_residual(rot.to_dense());
    log << "dense orthogonality residual " << format_double(orth) << "\n";
    residual = std::max(residual, orth);
  }

  const fs::path out = args.out.value_or(
      resolve_output_root(options) /
      ("rotation-" + std::string(to_string(spec.scope)) + "-d" + std::to_string(d) + "-n" +
       std::to_string(spec.block_dim) + "-s" + std::to_string(spec.seed) + ".rotl"));
  Snapshot snap;
  snap.rotation = rot;
  snap.label = "scope=" + std::string(to_string(spec.scope)) + "\nseed=" + std::to_string(spec.seed) + "\n";
  save_snapshot(out, snap);
  log << "wrote " << out.string() << "\n";
  return residual <= 1e-10 ? exit_ok : exit_numeric;
}

}  // namespace rotalab
