// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rotalab/error.hpp"
#include "rotalab/random.hpp"
#include "rotalab/testbeds.hpp"

namespace rotalab {

namespace {

double activate(Activation a, double z) {
  return a == Activation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the pre-activation and the activation value.
double activate_prime(Activation a, double z, double value) {
  return a == Activation::tanh ? 1.0 - value * value : (z > 0.0 ? 1.0 : 0.0);
}

// Plain forward pass used for the teacher network; all hidden layers tanh.
DenseVector teacher_forward(const std::vector<DenseMatrix>& weights,
                            const std::vector<DenseVector>& biases,
                            std::span<const double> x) {
  DenseVector a(x.begin(), x.end());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    DenseVector z = matvec(weights[l], a);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += biases[l][i];
    if (l + 1 < weights.size())
      for (double& v : z) v = std::tanh(v);
    a = std::move(z);
  }
  return a;
}

}  // namespace

MlpProblem::MlpProblem(MlpSpec spec) : spec_(std::move(spec)) {
  const auto& w = spec_.widths;
  require(w.size() >= 2, ErrorKind::invalid_spec, "mlp: need at least input and output widths");
  for (std::size_t x : w)
    require(x >= 1, ErrorKind::invalid_spec, "mlp: widths must be >= 1");
  require(spec_.dataset_size >= 1, ErrorKind::invalid_spec, "mlp: dataset_size must be >= 1");
  require(spec_.task == MlpTask::regression || w.back() >= 2, ErrorKind::invalid_spec,
          "mlp: classification needs at least two outputs");

  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    layout_.add_matrix("W" + std::to_string(l), w[l + 1], w[l]);
    layout_.add_vector("b" + std::to_string(l), w[l + 1]);
  }
  require(layout_.dim() <= 100000, ErrorKind::invalid_spec,
          "mlp: more than 1e5 parameters is beyond desk scale");

  const std::size_t in = w.front();
  const std::size_t out = w.back();
  const std::size_t n = spec_.dataset_size;

  RandomStream data_rng(derive_seed(spec_.seed, "data", 0));
  inputs_.assign(n * in, 0.0);
  const std::size_t active =
      spec_.active_features == 0 ? in : std::min(spec_.active_features, in);
  std::vector<std::size_t> features(in);
  for (std::size_t s = 0; s < n; ++s) {
    std::iota(features.begin(), features.end(), std::size_t{0});
    for (std::size_t k = 0; k < active; ++k) {
      const auto j = k + static_cast<std::size_t>(data_rng.uniform_index(in - k));
      std::swap(features[k], features[j]);
      inputs_[s * in + features[k]] = data_rng.normal();
    }
  }

  RandomStream teacher_rng(derive_seed(spec_.seed, "teacher", 0));
  std::vector<DenseMatrix> tw;
  std::vector<DenseVector> tb;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    DenseMatrix m(w[l + 1], w[l]);
    const double scale = spec_.teacher_scale / std::sqrt(static_cast<double>(w[l]));
    for (double& x : m.data()) x = scale * teacher_rng.normal();
    DenseVector b(w[l + 1]);
    for (double& x : b) x = 0.1 * spec_.teacher_scale * teacher_rng.normal();
    tw.push_back(std::move(m));
    tb.push_back(std::move(b));
  }
  targets_.assign(n * out, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const DenseVector y = teacher_forward(tw, tb, input(s));
    if (spec_.task == MlpTask::regression) {
      std::copy(y.begin(), y.end(), targets_.begin() + static_cast<std::ptrdiff_t>(s * out));
    } else {
      const auto c = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
      targets_[s * out + c] = 1.0;
    }
  }
}

std::span<const double> MlpProblem::input(std::size_t sample) const {
  const std::size_t in = spec_.widths.front();
  return {inputs_.data() + sample * in, in};
}

std::span<const double> MlpProblem::target(std::size_t sample) const {
  const std::size_t out = spec_.widths.back();
  return {targets_.data() + sample * out, out};
}

std::vector<std::size_t> MlpProblem::batch_indices(const Batch& batch) const {
  std::vector<std::size_t> idx;
  if (batch.full || spec_.batch_size == 0) {
    idx.resize(spec_.dataset_size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  RandomStream rng(batch.id, derive_seed(spec_.seed, "sample", 0));
  idx.reserve(spec_.batch_size);
  for (std::size_t k = 0; k < spec_.batch_size; ++k)
    idx.push_back(static_cast<std::size_t>(rng.uniform_index(spec_.dataset_size)));
  return idx;
}

DenseVector MlpProblem::initial_point() const {
  DenseVector w(layout_.dim(), 0.0);
  RandomStream rng(derive_seed(spec_.seed, "init", 0));
  for (const auto& l : layout_.layers()) {
    if (l.kind != LayerKind::matrix) continue;
    const double scale = spec_.init_scale / std::sqrt(static_cast<double>(l.in_dim()));
    for (std::size_t i = l.start; i < l.end; ++i) w[i] = scale * rng.normal();
  }
  return w;
}

DenseVector MlpProblem::forward(std::span<const double> w, std::size_t sample) const {
  require(w.size() == layout_.dim(), ErrorKind::length_mismatch, "mlp: length mismatch");
  const std::size_t layers = spec_.widths.size() - 1;
  DenseVector a(input(sample).begin(), input(sample).end());
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerInfo& wl = layout_.layer(2 * l);
    const LayerInfo& bl = layout_.layer(2 * l + 1);
    DenseVector z(wl.rows);
    for (std::size_t r = 0; r < wl.rows; ++r) {
      double s = w[bl.start + r];
      for (std::size_t c = 0; c < wl.cols; ++c) s += w[wl.start + r * wl.cols + c] * a[c];
      z[r] = s;
    }
    if (l + 1 < layers)
      for (double& v : z) v = activate(spec_.activation, v);
    a = std::move(z);
  }
  return a;
}

double MlpProblem::value(std::span<const double> w, const Batch& batch) const {
  return evaluate(w, batch, nullptr);
}

DenseVector MlpProblem::grad(std::span<const double> w, const Batch& batch) const {
  DenseVector g(layout_.dim(), 0.0);
  evaluate(w, batch, &g);
  return g;
}

double MlpProblem::evaluate(std::span<const double> w, const Batch& batch,
                            DenseVector* grad) const {
  require(w.size() == layout_.dim(), ErrorKind::length_mismatch, "mlp: length mismatch");
  const std::size_t layers = spec_.widths.size() - 1;
  const auto samples = batch_indices(batch);
  const double inv_count = 1.0 / static_cast<double>(samples.size());

  // pre[l] = z_l, post[l] = a_l (post[0] is the input).
  std::vector<DenseVector> pre(layers);
  std::vector<DenseVector> post(layers + 1);
  double loss = 0.0;

  for (std::size_t s : samples) {
    post[0].assign(input(s).begin(), input(s).end());
    for (std::size_t l = 0; l < layers; ++l) {
      const LayerInfo& wl = layout_.layer(2 * l);
      const LayerInfo& bl = layout_.layer(2 * l + 1);
      DenseVector& z = pre[l];
      z.assign(wl.rows, 0.0);
      for (std::size_t r = 0; r < wl.rows; ++r) {
        double acc = w[bl.start + r];
        for (std::size_t c = 0; c < wl.cols; ++c)
          acc += w[wl.start + r * wl.cols + c] * post[l][c];
        z[r] = acc;
      }
      post[l + 1] = z;
      if (l + 1 < layers)
        for (double& v : post[l + 1]) v = activate(spec_.activation, v);
    }

    const DenseVector& y = post[layers];
    const auto t = target(s);
    DenseVector delta(y.size());
    if (spec_.task == MlpTask::regression) {
      for (std::size_t i = 0; i < y.size(); ++i) {
        delta[i] = y[i] - t[i];
        loss += 0.5 * delta[i] * delta[i];
      }
    } else {
      const double ymax = *std::max_element(y.begin(), y.end());
      double z = 0.0;
      for (double v : y) z += std::exp(v - ymax);
      const double log_z = ymax + std::log(z);
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = std::exp(y[i] - log_z);
        delta[i] = p - t[i];
        loss -= t[i] * (y[i] - log_z);
      }
    }
    if (!grad) continue;

    for (std::size_t l = layers; l-- > 0;) {
      const LayerInfo& wl = layout_.layer(2 * l);
      const LayerInfo& bl = layout_.layer(2 * l + 1);
      for (std::size_t r = 0; r < wl.rows; ++r) {
        const double dr = delta[r] * inv_count;
        (*grad)[bl.start + r] += dr;
        for (std::size_t c = 0; c < wl.cols; ++c)
          (*grad)[wl.start + r * wl.cols + c] += dr * post[l][c];
      }
      if (l == 0) break;
      DenseVector prev(wl.cols, 0.0);
      for (std::size_t r = 0; r < wl.rows; ++r)
        for (std::size_t c = 0; c < wl.cols; ++c)
          prev[c] += w[wl.start + r * wl.cols + c] * delta[r];
      for (std::size_t c = 0; c < wl.cols; ++c)
        prev[c] *= activate_prime(spec_.activation, pre[l - 1][c], post[l][c]);
      delta = std::move(prev);
    }
  }
  return loss * inv_count;
}

MlpProblem make_mlp(MlpSpec spec) { return MlpProblem(std::move(spec)); }

}  // namespace rotalab
