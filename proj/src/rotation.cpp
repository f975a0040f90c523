// SPDX-License-Identifier: Apache-2.0

#include "rotalab/rotation.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

#include "rotalab/error.hpp"

namespace rotalab {

std::string_view to_string(RotationScope scope) noexcept {
  switch (scope) {
    case RotationScope::none: return "none";
    case RotationScope::global: return "global";
    case RotationScope::layer: return "layer";
    case RotationScope::output: return "output";
    case RotationScope::input: return "input";
    case RotationScope::svd: return "svd";
  }
  return "none";
}

RotationScope parse_scope(std::string_view text) {
  for (auto s : {RotationScope::none, RotationScope::global, RotationScope::layer,
                 RotationScope::output, RotationScope::input, RotationScope::svd})
    if (to_string(s) == text) return s;
  throw Error(ErrorKind::invalid_spec, "unknown rotation scope '" + std::string(text) +
                                           "' (expected none|global|layer|output|input|svd)");
}

void RotationSpec::validate() const {
  require(block_dim >= 1, ErrorKind::invalid_spec, "rotation: block_dim must be >= 1");
  require(scope != RotationScope::svd || refresh_interval >= 1, ErrorKind::invalid_spec,
          "rotation: refresh_interval must be >= 1 for svd scope");
}

namespace {

std::vector<bool> mask_layers(const ParamLayout& layout,
                              const std::optional<std::vector<std::string>>& mask) {
  std::vector<bool> selected(layout.layer_count(), !mask.has_value());
  if (mask) {
    for (const auto& name : *mask) {
      const auto k = layout.find(name);
      if (!k)
        throw Error(ErrorKind::invalid_spec,
                    "rotation: layer_mask names unknown layer '" + name + "'");
      selected[*k] = true;
    }
  }
  return selected;
}

IndexSet layer_range(const LayerInfo& l) {
  IndexSet s(l.size());
  std::iota(s.begin(), s.end(), l.start);
  return s;
}

// Indices of logical output neuron `o` (fixed_out = true) or input neuron.
IndexSet neuron_set(const LayerInfo& l, std::size_t neuron, bool output) {
  // Storage rows index the logical output unless the layer is transposed.
  const bool along_row = output != l.transposed;
  IndexSet s;
  if (along_row) {
    s.reserve(l.cols);
    for (std::size_t c = 0; c < l.cols; ++c) s.push_back(l.start + neuron * l.cols + c);
  } else {
    s.reserve(l.rows);
    for (std::size_t r = 0; r < l.rows; ++r) s.push_back(l.start + r * l.cols + neuron);
  }
  return s;
}

}  // namespace

std::vector<IndexSet> partition_indices(
    const ParamLayout& layout, RotationScope scope,
    const std::optional<std::vector<std::string>>& layer_mask) {
  const auto selected = mask_layers(layout, layer_mask);
  std::vector<IndexSet> sets;
  switch (scope) {
    case RotationScope::none:
      break;
    case RotationScope::global: {
      IndexSet all;
      for (std::size_t k = 0; k < layout.layer_count(); ++k)
        if (selected[k]) {
          const auto r = layer_range(layout.layer(k));
          all.insert(all.end(), r.begin(), r.end());
        }
      if (!all.empty()) sets.push_back(std::move(all));
      break;
    }
    case RotationScope::layer:
      for (std::size_t k = 0; k < layout.layer_count(); ++k)
        if (selected[k]) sets.push_back(layer_range(layout.layer(k)));
      break;
    case RotationScope::output:
    case RotationScope::input: {
      const bool output = scope == RotationScope::output;
      for (std::size_t k = 0; k < layout.layer_count(); ++k) {
        if (!selected[k]) continue;
        const LayerInfo& l = layout.layer(k);
        if (l.kind == LayerKind::vector) {
          sets.push_back(layer_range(l));
          continue;
        }
        const std::size_t neurons = output ? l.out_dim() : l.in_dim();
        for (std::size_t o = 0; o < neurons; ++o) sets.push_back(neuron_set(l, o, output));
      }
      break;
    }
    case RotationScope::svd:
      for (std::size_t k = 0; k < layout.layer_count(); ++k)
        if (selected[k] && layout.layer(k).kind == LayerKind::matrix)
          sets.push_back(layer_range(layout.layer(k)));
      break;
  }
  return sets;
}

CompiledRotation::CompiledRotation(Parts parts) : parts_(std::move(parts)) {
  std::vector<char> seen(parts_.dim, 0);
  for (const auto& p : parts_.partitions) {
    require(p.permutation.size() == p.indices.size(), ErrorKind::invalid_spec,
            "rotation: permutation size does not match partition");
    for (std::size_t i : p.indices) {
      require(i < parts_.dim && !seen[i], ErrorKind::invalid_spec,
              "rotation: partitions overlap or exceed the dimension");
      seen[i] = 1;
    }
    std::size_t covered = 0;
    for (const auto& b : p.blocks) {
      require(b.pool_index < parts_.pool.size(), ErrorKind::invalid_spec,
              "rotation: block references a missing matrix");
      const DenseMatrix& m = parts_.pool[b.pool_index];
      require(m.rows() == m.cols() && b.offset == covered, ErrorKind::invalid_spec,
              "rotation: blocks must be square and contiguous");
      covered += m.rows();
    }
    require(covered == p.indices.size(), ErrorKind::invalid_spec,
            "rotation: blocks do not tile the partition");
  }
  for (const auto& f : parts_.factors) {
    require(f.u.rows() == f.u.cols() && f.v.rows() == f.v.cols() &&
                f.start + f.u.rows() * f.v.rows() <= parts_.dim,
            ErrorKind::invalid_spec, "rotation: malformed svd factors");
  }
  derive();
}

CompiledRotation::CompiledRotation(const CompiledRotation& other) : parts_(other.parts_) {
  derive();
}

CompiledRotation& CompiledRotation::operator=(const CompiledRotation& other) {
  if (this != &other) {
    parts_ = other.parts_;
    derive();
  }
  return *this;
}

void CompiledRotation::derive() {
  gather_.clear();
  scatter_.clear();
  block_refs_.clear();
  std::size_t base = 0;
  for (const auto& p : parts_.partitions) {
    for (std::size_t k = 0; k < p.indices.size(); ++k) {
      gather_.push_back(p.indices[p.permutation[k]]);
      scatter_.push_back(parts_.omit_permutation_undo ? p.indices[k]
                                                      : p.indices[p.permutation[k]]);
    }
    for (const auto& b : p.blocks)
      block_refs_.push_back({base + b.offset, &parts_.pool[b.pool_index]});
    base += p.indices.size();
  }
  tiles_ = kernels::make_row_tiles(block_refs_);
}

CompiledRotation CompiledRotation::identity(std::size_t dim) {
  Parts p;
  p.dim = dim;
  return CompiledRotation(std::move(p));
}

CompiledRotation CompiledRotation::dense(DenseMatrix r) {
  require(r.rows() == r.cols() && r.rows() >= 1, ErrorKind::invalid_dimension,
          "CompiledRotation::dense: need a square matrix");
  Parts p;
  p.scope = RotationScope::global;
  p.dim = r.rows();
  p.block_dim = r.rows();
  PartitionOperator op;
  op.indices.resize(p.dim);
  std::iota(op.indices.begin(), op.indices.end(), std::size_t{0});
  op.permutation = Permutation::identity(p.dim);
  op.blocks.push_back({0, 0});
  p.pool.push_back(std::move(r));
  p.partitions.push_back(std::move(op));
  return CompiledRotation(std::move(p));
}

bool CompiledRotation::is_identity() const noexcept {
  return parts_.partitions.empty() && parts_.factors.empty();
}

void CompiledRotation::transform(std::span<const double> in, std::span<double> out,
                                 bool inverse, kernels::Exec exec) const {
  require(in.size() == parts_.dim, ErrorKind::length_mismatch,
          "rotation: vector length " + std::to_string(in.size()) + " != dimension " +
              std::to_string(parts_.dim));
  std::copy(in.begin(), in.end(), out.begin());
  if (parts_.scope == RotationScope::svd) {
    transform_svd(in, out, inverse);
    return;
  }
  if (gather_.empty()) return;

  // Forward: buf = P·x, y = B·buf, scatter with Pᵀ.
  // Inverse: read through the scatter map, multiply by Bᵀ, write via gather.
  const auto& read = inverse ? scatter_ : gather_;
  const auto& write = inverse ? gather_ : scatter_;
  DenseVector buf(read.size());
  for (std::size_t k = 0; k < read.size(); ++k) buf[k] = in[read[k]];
  DenseVector y(buf.size(), 0.0);
  if (exec == kernels::Exec::parallel)
    kernels::apply_blocks_parallel(block_refs_, tiles_, buf, y, inverse);
  else
    kernels::apply_blocks_serial(block_refs_, buf, y, inverse);
  for (std::size_t k = 0; k < write.size(); ++k) out[write[k]] = y[k];
}

void CompiledRotation::transform_svd(std::span<const double> in, std::span<double> out,
                                     bool inverse) const {
  for (const auto& f : parts_.factors) {
    const std::size_t rows = f.u.rows();
    const std::size_t cols = f.v.rows();
    DenseMatrix x(rows, cols,
                  std::vector<double>(in.begin() + static_cast<std::ptrdiff_t>(f.start),
                                      in.begin() + static_cast<std::ptrdiff_t>(f.start +
                                                                               rows * cols)));
    // forward: Uᵀ·X·V; inverse: U·X·Vᵀ
    const DenseMatrix y = inverse ? matmul_nt(matmul(f.u, x), f.v)
                                  : matmul(matmul_tn(f.u, x), f.v);
    std::copy(y.data().begin(), y.data().end(),
              out.begin() + static_cast<std::ptrdiff_t>(f.start));
  }
}

DenseVector CompiledRotation::apply(std::span<const double> g, kernels::Exec exec) const {
  DenseVector out(g.size());
  transform(g, out, false, exec);
  return out;
}

DenseVector CompiledRotation::apply_inverse(std::span<const double> u,
                                            kernels::Exec exec) const {
  DenseVector out(u.size());
  transform(u, out, true, exec);
  return out;
}

std::vector<PartitionSummary> CompiledRotation::summary() const {
  std::vector<PartitionSummary> out;
  if (parts_.scope == RotationScope::svd) {
    for (const auto& f : parts_.factors)
      out.push_back({f.u.rows() * f.v.rows(), 0, 0, 0});
    return out;
  }
  for (const auto& p : parts_.partitions) {
    PartitionSummary s;
    s.size = p.indices.size();
    const std::size_t n = std::min(parts_.block_dim, s.size);
    s.block_dim = n;
    for (const auto& b : p.blocks) {
      if (parts_.pool[b.pool_index].rows() == n)
        ++s.full_blocks;
      else
        s.residual = parts_.pool[b.pool_index].rows();
    }
    out.push_back(s);
  }
  return out;
}

DenseMatrix CompiledRotation::to_dense() const {
  const std::size_t d = parts_.dim;
  DenseMatrix m(d, d);
  DenseVector e(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    e[j] = 1.0;
    const DenseVector col = apply(e, kernels::Exec::serial);
    for (std::size_t i = 0; i < d; ++i) m(i, j) = col[i];
    e[j] = 0.0;
  }
  return m;
}

CompiledRotation compile(const RotationSpec& spec, const ParamLayout& layout,
                         RandomStream& rng) {
  spec.validate();
  CompiledRotation::Parts parts;
  parts.scope = spec.scope;
  parts.dim = layout.dim();
  parts.block_dim = spec.block_dim;
  parts.omit_permutation_undo = spec.omit_permutation_undo;
  if (spec.scope == RotationScope::none) return CompiledRotation(std::move(parts));

  auto sets = partition_indices(layout, spec.scope, spec.layer_mask);
  require(!sets.empty(), ErrorKind::invalid_spec,
          std::string("rotation: scope '") + std::string(to_string(spec.scope)) +
              "' selects no parameters");

  if (spec.scope == RotationScope::svd) {
    const auto& selected = spec.layer_mask;
    for (std::size_t k = 0; k < layout.layer_count(); ++k) {
      const LayerInfo& l = layout.layer(k);
      if (l.kind != LayerKind::matrix) continue;
      if (selected &&
          std::find(selected->begin(), selected->end(), l.name) == selected->end())
        continue;
      parts.factors.push_back(
          {k, l.start, DenseMatrix::identity(l.rows), DenseMatrix::identity(l.cols)});
    }
    return CompiledRotation(std::move(parts));
  }

  std::map<std::size_t, std::size_t> shared;  // block size -> pool index
  auto block_of_size = [&](std::size_t n) -> std::size_t {
    if (spec.shared_blocks) {
      if (auto it = shared.find(n); it != shared.end()) return it->second;
    }
    parts.pool.push_back(haar_orthogonal(n, rng));
    const std::size_t idx = parts.pool.size() - 1;
    if (spec.shared_blocks) shared.emplace(n, idx);
    return idx;
  };

  for (auto& set : sets) {
    const std::size_t s = set.size();
    PartitionOperator op;
    op.permutation = random_permutation(s, rng);
    op.indices = std::move(set);
    if (s <= spec.block_dim) {
      op.blocks.push_back({0, block_of_size(s)});
    } else {
      const std::size_t n = spec.block_dim;
      const std::size_t full = s / n;
      const std::size_t residual = s - n * full;
      for (std::size_t b = 0; b < full; ++b) op.blocks.push_back({b * n, block_of_size(n)});
      if (residual > 0) op.blocks.push_back({full * n, block_of_size(residual)});
    }
    parts.partitions.push_back(std::move(op));
  }
  return CompiledRotation(std::move(parts));
}

CompiledRotation svd_refresh(const CompiledRotation& rot,
                             std::span<const DenseMatrix> per_layer_grads) {
  require(rot.scope() == RotationScope::svd, ErrorKind::invalid_spec,
          "svd_refresh: rotation scope is not svd");
  require(per_layer_grads.size() == rot.factors().size(), ErrorKind::length_mismatch,
          "svd_refresh: expected " + std::to_string(rot.factors().size()) +
              " layer gradients, got " + std::to_string(per_layer_grads.size()));
  CompiledRotation::Parts parts = rot.parts();
  for (std::size_t k = 0; k < parts.factors.size(); ++k) {
    SvdFactors& f = parts.factors[k];
    const DenseMatrix& g = per_layer_grads[k];
    require(g.rows() == f.u.rows() && g.cols() == f.v.rows(), ErrorKind::length_mismatch,
            "svd_refresh: gradient shape mismatch for layer " + std::to_string(f.layer));
    if (norm_inf(g.data()) == 0.0) {
      f.u = DenseMatrix::identity(g.rows());
      f.v = DenseMatrix::identity(g.cols());
      continue;
    }
    SvdResult svd = svd_full(g);
    f.u = std::move(svd.u);
    f.v = std::move(svd.v);
  }
  return CompiledRotation(std::move(parts));
}

CompiledRotation svd_refresh(const CompiledRotation& rot, const ParamLayout& layout,
                             std::span<const double> flat_grad) {
  std::vector<DenseMatrix> grads;
  grads.reserve(rot.factors().size());
  for (const auto& f : rot.factors()) grads.push_back(layout.extract(flat_grad, f.layer));
  return svd_refresh(rot, grads);
}

double svd_offdiagonal_ratio(const CompiledRotation& rot, const ParamLayout& layout,
                             std::span<const double> flat_grad) {
  double worst = 0.0;
  for (const auto& f : rot.factors()) {
    const DenseMatrix g = layout.extract(flat_grad, f.layer);
    const double total = frobenius_norm(g);
    if (total == 0.0) continue;
    DenseMatrix r = matmul(matmul_tn(f.u, g), f.v);
    for (std::size_t i = 0; i < r.rows(); ++i)
      if (i < r.cols()) r(i, i) = 0.0;
    worst = std::max(worst, frobenius_norm(r) / total);
  }
  return worst;
}

}  // namespace rotalab
