// SPDX-License-Identifier: Apache-2.0

#include "rotalab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "rotalab/csv.hpp"
#include "rotalab/error.hpp"

namespace rotalab {

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(std::span<const double> xs) {
  MeanSe out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  // Shifted by the first sample so constant inputs give an exact mean and zero error.
  const double shift = xs.front();
  double sum = 0.0;
  for (double x : xs) sum += x - shift;
  const double offset = sum / n;
  out.mean = shift + offset;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - shift - offset) * (x - shift - offset);
    out.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

PartStats stats_over(std::span<const double> row, const IndexSet& idx) {
  PartStats s;
  s.count = idx.size();
  for (std::size_t j : idx) {
    const double a = std::abs(row[j]);
    s.mean_abs += a;
    s.max_abs = std::max(s.max_abs, a);
  }
  if (s.count > 0) s.mean_abs /= static_cast<double>(s.count);
  return s;
}

// Runs body(i) for i in [0, n), in parallel when requested. The first
// exception (lowest trial index) is rethrown after the loop.
template <class Body>
void for_each_trial(std::size_t n, kernels::Exec exec, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
  if (exec == kernels::Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string rotation_tag(const CompiledRotation& rot) {
  return std::string(to_string(rot.scope())) + "/d" + std::to_string(rot.dim()) + "/n" +
         std::to_string(rot.block_dim());
}

}  // namespace

nlohmann::json GradBoundReport::to_json() const {
  return {{"c_tilde", c_tilde},       {"trials", trials},
          {"seed", seed},             {"probe", probe_tag},
          {"checkpoint", checkpoint_tag}, {"mean_linf", mean},
          {"standard_error", standard_error}};
}

GradBoundReport linf_gradient_bound(const Problem& problem, std::span<const double> w,
                                    const CompiledRotation& rot, std::size_t trials,
                                    std::uint64_t seed, kernels::Exec exec) {
  require(trials >= 1, ErrorKind::invalid_spec, "linf_gradient_bound: trials must be >= 1");
  require(w.size() == problem.dim() && rot.dim() == problem.dim(),
          ErrorKind::length_mismatch, "linf_gradient_bound: dimension mismatch");

  const BatchStream stream(seed);
  GradBoundReport rep;
  rep.trials = trials;
  rep.seed = seed;
  rep.probe_tag = rotation_tag(rot);
  rep.per_trial.assign(trials, 0.0);

  for_each_trial(trials, exec, [&](std::size_t i) {
    const DenseVector g = problem.grad(w, stream.at(i));
    if (!all_finite(g))
      throw PoisonedStateError("linf_gradient_bound: non-finite gradient in trial " +
                                   std::to_string(i),
                               i);
    rep.per_trial[i] = norm_inf(rot.apply(g, kernels::Exec::serial));
  });

  rep.c_tilde = *std::max_element(rep.per_trial.begin(), rep.per_trial.end());
  const MeanSe ms = mean_and_se(rep.per_trial);
  rep.mean = ms.mean;
  rep.standard_error = ms.se;
  return rep;
}

HessianRowSample hessian_row(const Problem& problem, std::span<const double> w,
                             const CompiledRotation& rot, std::size_t i, std::size_t k,
                             std::uint64_t seed, kernels::Exec exec) {
  const std::size_t d = problem.dim();
  require(i < d, ErrorKind::invalid_dimension,
          "hessian_row: index " + std::to_string(i) + " out of range");
  require(k >= 1, ErrorKind::invalid_spec, "hessian_row: k must be >= 1");
  require(w.size() == d && rot.dim() == d, ErrorKind::length_mismatch,
          "hessian_row: dimension mismatch");

  DenseVector e(d, 0.0);
  e[i] = 1.0;
  const DenseVector dir = rot.apply_inverse(e, kernels::Exec::serial);

  const BatchStream stream(seed);
  std::vector<DenseVector> hv(k);
  for_each_trial(k, exec, [&](std::size_t j) { hv[j] = problem.hvp(w, dir, stream.at(j)); });

  // Mean as h_0 + (1/k)·Σ(h_j − h_0): identical batches reproduce h_0 bit for bit.
  for (const auto& h : hv)
    require(h.size() == d, ErrorKind::length_mismatch, "hessian_row: hvp length mismatch");
  DenseVector sum = hv.front();
  DenseVector spread(d, 0.0);
  for (std::size_t j = 1; j < k; ++j)
    for (std::size_t a = 0; a < d; ++a) spread[a] += hv[j][a] - hv[0][a];
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t a = 0; a < d; ++a) sum[a] += spread[a] * inv_k;

  HessianRowSample out;
  out.index = i;
  out.k = k;
  out.row = rot.apply(sum, kernels::Exec::serial);
  out.probe_tag = rotation_tag(rot);
  require(all_finite(out.row), ErrorKind::poisoned_state, "hessian_row: non-finite row");
  return out;
}

RowPartition partition_row(const HessianRowSample& sample, const ParamLayout& layout,
                           std::size_t i) {
  const std::size_t d = layout.dim();
  require(sample.row.size() == d, ErrorKind::length_mismatch,
          "partition_row: row length does not match layout");
  require(i < d, ErrorKind::invalid_dimension,
          "partition_row: index " + std::to_string(i) + " out of range");

  const std::size_t li = layout.layer_index_of(i);
  const LayerInfo& layer = layout.layer(li);

  IndexSet neuron;
  for (IndexSet& set : partition_indices(layout, RotationScope::output,
                                         std::vector<std::string>{layer.name})) {
    if (std::find(set.begin(), set.end(), i) != set.end()) {
      neuron = std::move(set);
      break;
    }
  }
  std::sort(neuron.begin(), neuron.end());

  std::vector<char> tag(d, 2);  // 0 neuron, 1 layer, 2 other
  for (std::size_t j = layer.start; j < layer.end; ++j) tag[j] = 1;
  for (std::size_t j : neuron) tag[j] = 0;

  RowPartition p;
  p.index = i;
  p.neuron.assign(d, 0.0);
  p.layer.assign(d, 0.0);
  p.other.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double x = sample.row[j];
    switch (tag[j]) {
      case 0:
        p.neuron_indices.push_back(j);
        p.neuron[j] = x;
        break;
      case 1:
        p.layer_indices.push_back(j);
        p.layer[j] = x;
        break;
      default:
        p.other_indices.push_back(j);
        p.other[j] = x;
        break;
    }
  }
  p.neuron_stats = stats_over(sample.row, p.neuron_indices);
  p.layer_stats = stats_over(sample.row, p.layer_indices);
  p.other_stats = stats_over(sample.row, p.other_indices);
  return p;
}

RowContribution row_contribution(const RowPartition& parts, std::span<const double> dw) {
  const std::size_t d = parts.neuron.size();
  require(dw.size() == d, ErrorKind::length_mismatch, "row_contribution: length mismatch");
  RowContribution c;
  for (std::size_t j : parts.neuron_indices) c.neuron += parts.neuron[j] * dw[j];
  for (std::size_t j : parts.layer_indices) c.layer += parts.layer[j] * dw[j];
  for (std::size_t j : parts.other_indices) c.other += parts.other[j] * dw[j];
  for (std::size_t j = 0; j < d; ++j)
    c.total += (parts.neuron[j] + parts.layer[j] + parts.other[j]) * dw[j];
  return c;
}

DenseVector random_unit_direction(std::size_t dim, RandomStream& rng) {
  require(dim >= 1, ErrorKind::invalid_dimension, "random_unit_direction: dim must be >= 1");
  DenseVector x(dim);
  double n = 0.0;
  while (n == 0.0) {
    for (double& v : x) v = rng.normal();
    n = norm2(x);
  }
  for (double& v : x) v /= n;
  return x;
}

std::vector<std::size_t> sample_rows(std::size_t dim, std::size_t count, RandomStream& rng) {
  require(count <= dim, ErrorKind::invalid_spec, "sample_rows: more rows than dimension");
  std::vector<std::size_t> pool(dim);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t k = 0; k < count; ++k) {
    const auto j = k + static_cast<std::size_t>(rng.uniform_index(dim - k));
    std::swap(pool[k], pool[j]);
  }
  pool.resize(count);
  return pool;
}

std::vector<std::size_t> sample_rows_stratified(const ParamLayout& layout, std::size_t count,
                                                RandomStream& rng) {
  const std::size_t d = layout.dim();
  require(count <= d, ErrorKind::invalid_spec, "sample_rows: more rows than dimension");
  // Largest-remainder allocation of `count` rows over layers by size.
  const auto& layers = layout.layers();
  std::vector<std::size_t> quota(layers.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const double exact =
        static_cast<double>(count) * static_cast<double>(layers[l].size()) / static_cast<double>(d);
    quota[l] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[l];
    remainders.emplace_back(exact - static_cast<double>(quota[l]), l);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < count; ++r, ++assigned) ++quota[remainders[r].second];

  std::vector<std::size_t> rows;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t j : sample_rows(layers[l].size(), quota[l], rng))
      rows.push_back(layers[l].start + j);
  }
  return rows;
}

nlohmann::json OneOneEstimate::to_json() const {
  return {{"estimate", estimate}, {"standard_error", standard_error}, {"rows", rows}};
}

OneOneEstimate one_one_norm_estimate(std::span<const HessianRowSample> samples,
                                     std::size_t dim) {
  require(!samples.empty(), ErrorKind::invalid_spec,
          "one_one_norm_estimate: need at least one sample");
  std::vector<double> l1(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    require(samples[s].row.size() == dim, ErrorKind::length_mismatch,
            "one_one_norm_estimate: row length mismatch");
    l1[s] = norm1(samples[s].row);
  }
  const MeanSe ms = mean_and_se(l1);
  const double scale = static_cast<double>(dim);
  return {scale * ms.mean, scale * ms.se, samples.size()};
}

double interquartile_range(std::vector<double> values) {
  if (values.size() < 2) return 0.0;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return quantile(0.75) - quantile(0.25);
}

SecondMomentHistogram second_moment_histogram(const OptimizerState& state, std::size_t bins,
                                              bool log_scale) {
  require(!state.v.empty(), ErrorKind::invalid_spec,
          "second_moment_histogram: second moment is empty");
  require(bins >= 1, ErrorKind::invalid_spec, "second_moment_histogram: bins must be >= 1");
  require(all_finite(state.v), ErrorKind::poisoned_state,
          "second_moment_histogram: non-finite second moment");

  SecondMomentHistogram h;
  h.log_scale = log_scale;

  std::vector<double> xs;
  std::vector<double> logs;
  for (double v : state.v) {
    if (v > 0.0) logs.push_back(std::log10(v));
    if (log_scale) {
      if (v > 0.0)
        xs.push_back(std::log10(v));
      else
        ++h.zero_count;
    } else {
      xs.push_back(v);
    }
  }
  h.iqr_log10 = interquartile_range(logs);

  const bool all_zero = std::all_of(state.v.begin(), state.v.end(), [](double v) { return v == 0.0; });
  if (all_zero) {
    h.degenerate = true;
    h.edges = {0.0, 0.0};
    h.counts = {state.v.size()};
    h.zero_count = state.v.size();
    return h;
  }

  const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  double lo = *mn;
  double hi = *mx;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double x : xs) {
    auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

std::string SecondMomentHistogram::to_csv() const {
  CsvWriter csv({"bin_lo", "bin_hi", "count"});
  for (std::size_t b = 0; b < counts.size(); ++b) csv.row(edges[b], edges[b + 1], counts[b]);
  return csv.str();
}

nlohmann::json SecondMomentHistogram::to_json() const {
  return {{"log_scale", log_scale}, {"edges", edges},         {"counts", counts},
          {"zero_count", zero_count}, {"degenerate", degenerate}, {"iqr_log10", iqr_log10}};
}

}  // namespace rotalab
