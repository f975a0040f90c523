// SPDX-License-Identifier: Apache-2.0

#include "rotalab/layout.hpp"

#include <algorithm>
#include <charconv>

#include "rotalab/error.hpp"

namespace rotalab {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::size_t parse_count(std::string_view s, std::string_view context) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || value == 0)
    throw Error(ErrorKind::invalid_spec,
                "layout: bad dimension '" + std::string(s) + "' in '" +
                    std::string(context) + "'");
  return value;
}

}  // namespace

void ParamLayout::check_name(const std::string& name) const {
  require(!name.empty(), ErrorKind::invalid_spec, "layout: empty layer name");
  require(!find(name).has_value(), ErrorKind::invalid_spec,
          "layout: duplicate layer name '" + name + "'");
}

ParamLayout& ParamLayout::add_matrix(std::string name, std::size_t out_dim,
                                     std::size_t in_dim, bool transposed) {
  check_name(name);
  require(out_dim >= 1 && in_dim >= 1, ErrorKind::invalid_dimension,
          "layout: matrix layer '" + name + "' needs positive dimensions");
  LayerInfo info;
  info.name = std::move(name);
  info.kind = LayerKind::matrix;
  info.rows = transposed ? in_dim : out_dim;
  info.cols = transposed ? out_dim : in_dim;
  info.transposed = transposed;
  info.start = dim_;
  info.end = dim_ + out_dim * in_dim;
  dim_ = info.end;
  layers_.push_back(std::move(info));
  return *this;
}

ParamLayout& ParamLayout::add_vector(std::string name, std::size_t len) {
  check_name(name);
  require(len >= 1, ErrorKind::invalid_dimension,
          "layout: vector layer '" + name + "' needs positive length");
  LayerInfo info;
  info.name = std::move(name);
  info.kind = LayerKind::vector;
  info.rows = len;
  info.cols = 1;
  info.start = dim_;
  info.end = dim_ + len;
  dim_ = info.end;
  layers_.push_back(std::move(info));
  return *this;
}

ParamLayout ParamLayout::parse(std::string_view text) {
  ParamLayout layout;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) throw Error(ErrorKind::invalid_spec, "layout: empty layer entry");
    const auto colon = item.find(':');
    if (colon == std::string_view::npos)
      throw Error(ErrorKind::invalid_spec,
                  "layout: expected name:shape, got '" + std::string(item) + "'");
    const std::string name(trim(item.substr(0, colon)));
    std::string_view shape = trim(item.substr(colon + 1));
    bool transposed = false;
    if (!shape.empty() && shape.back() == 'T') {
      transposed = true;
      shape.remove_suffix(1);
    }
    const auto x = shape.find('x');
    if (x == std::string_view::npos) {
      if (transposed)
        throw Error(ErrorKind::invalid_spec, "layout: only matrices can be transposed");
      layout.add_vector(name, parse_count(shape, item));
    } else {
      layout.add_matrix(name, parse_count(shape.substr(0, x), item),
                        parse_count(shape.substr(x + 1), item), transposed);
    }
  }
  require(layout.dim() > 0, ErrorKind::invalid_spec, "layout: no layers");
  return layout;
}

std::string ParamLayout::to_string() const {
  std::string out;
  for (const auto& l : layers_) {
    if (!out.empty()) out += ',';
    out += l.name + ':';
    if (l.kind == LayerKind::vector) {
      out += std::to_string(l.rows);
    } else {
      out += std::to_string(l.out_dim()) + 'x' + std::to_string(l.in_dim());
      if (l.transposed) out += 'T';
    }
  }
  return out;
}

std::optional<std::size_t> ParamLayout::find(std::string_view name) const {
  for (std::size_t k = 0; k < layers_.size(); ++k)
    if (layers_[k].name == name) return k;
  return std::nullopt;
}

std::size_t ParamLayout::layer_index_of(std::size_t index) const {
  require(index < dim_, ErrorKind::invalid_dimension,
          "layout: index " + std::to_string(index) + " out of range");
  const auto it = std::upper_bound(
      layers_.begin(), layers_.end(), index,
      [](std::size_t i, const LayerInfo& l) { return i < l.end; });
  return static_cast<std::size_t>(it - layers_.begin());
}

DenseMatrix ParamLayout::extract(std::span<const double> flat, std::size_t layer) const {
  require(flat.size() == dim_, ErrorKind::length_mismatch, "layout: flat length mismatch");
  const LayerInfo& l = layers_.at(layer);
  return DenseMatrix(l.rows, l.cols,
                     std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(l.start),
                                         flat.begin() + static_cast<std::ptrdiff_t>(l.end)));
}

void ParamLayout::store(std::span<double> flat, std::size_t layer,
                        const DenseMatrix& m) const {
  require(flat.size() == dim_, ErrorKind::length_mismatch, "layout: flat length mismatch");
  const LayerInfo& l = layers_.at(layer);
  require(m.rows() == l.rows && m.cols() == l.cols, ErrorKind::length_mismatch,
          "layout: matrix shape mismatch for layer '" + l.name + "'");
  std::copy(m.data().begin(), m.data().end(),
            flat.begin() + static_cast<std::ptrdiff_t>(l.start));
}

}  // namespace rotalab
