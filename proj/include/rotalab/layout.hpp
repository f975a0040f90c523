// SPDX-License-Identifier: Apache-2.0
//
// Flat parameter vector <-> per-layer matrices.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rotalab/linalg.hpp"

namespace rotalab {

enum class LayerKind { matrix, vector };

struct LayerInfo {
  std::string name;
  LayerKind kind = LayerKind::vector;
  // Storage shape. Matrix layers are row-major; a vector layer is rows = len, cols = 1.
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  // Stored as (in_dim, out_dim), like embedding tables.
  bool transposed = false;

  std::size_t size() const noexcept { return end - start; }
  std::size_t out_dim() const noexcept { return transposed ? cols : rows; }
  std::size_t in_dim() const noexcept { return transposed ? rows : cols; }
};

class ParamLayout {
 public:
  ParamLayout() = default;

  /// Appends an out_dim × in_dim weight matrix. A transposed layer is stored
  /// in_dim × out_dim.
  ParamLayout& add_matrix(std::string name, std::size_t out_dim, std::size_t in_dim,
                          bool transposed = false);
  ParamLayout& add_vector(std::string name, std::size_t len);

  /// Parses "W0:4x8,b0:4,E:10x3T" (T marks a transposed matrix layer).
  static ParamLayout parse(std::string_view text);
  std::string to_string() const;

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<LayerInfo>& layers() const noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const LayerInfo& layer(std::size_t k) const { return layers_.at(k); }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Index of the layer whose flat range contains `index`.
  std::size_t layer_index_of(std::size_t index) const;

  /// Copies a matrix layer out of the flat vector in storage orientation.
  DenseMatrix extract(std::span<const double> flat, std::size_t layer) const;
  void store(std::span<double> flat, std::size_t layer, const DenseMatrix& m) const;

  friend bool operator==(const ParamLayout& a, const ParamLayout& b) {
    return a.to_string() == b.to_string();
  }

 private:
  void check_name(const std::string& name) const;

  std::vector<LayerInfo> layers_;
  std::size_t dim_ = 0;
};

}  // namespace rotalab
