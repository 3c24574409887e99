// Copyright 2026 The SPFM Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spfm/numcore.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "spfm/error.hpp"

namespace spfm {

namespace {

std::atomic<std::uint64_t> g_forward{0};
std::atomic<std::uint64_t> g_backward{0};

double activate(Activation a, double z) {
  return a == Activation::kTanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the pre-activation.
double activate_grad(Activation a, double z) {
  if (a == Activation::kTanh) {
    const double h = std::tanh(z);
    return 1.0 - h * h;
  }
  return z > 0.0 ? 1.0 : 0.0;
}

void check_inputs(const VelocityModel& m, std::span<const double> x, double t,
                  Condition cond) {
  if (x.size() != m.in_dim()) {
    fail(ErrorKind::kShapeMismatch, "velocity input has dimension " +
                                        std::to_string(x.size()) + ", model expects " +
                                        std::to_string(m.in_dim()));
  }
  if (!(t >= 0.0 && t <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "time must lie in [0, 1], got " + std::to_string(t));
  }
  if (!cond.is_null() && cond.id() >= m.num_classes) {
    fail(ErrorKind::kInvalidArgument, "class id " + std::to_string(cond.id()) +
                                          " out of range for " +
                                          std::to_string(m.num_classes) + " classes");
  }
}

Vec assemble_input(const VelocityModel& m, std::span<const double> x, double t,
                   Condition cond) {
  Vec in;
  in.reserve(m.input_width());
  in.insert(in.end(), x.begin(), x.end());
  in.push_back(t);
  if (cond.is_null()) {
    in.insert(in.end(), m.null_embedding.begin(), m.null_embedding.end());
  } else {
    const auto e = m.class_embeddings.row(cond.id());
    in.insert(in.end(), e.begin(), e.end());
  }
  return in;
}

void affine(const DenseLayer& layer, std::span<const double> in, Vec& out) {
  const std::size_t rows = layer.weight.rows;
  const std::size_t cols = layer.weight.cols;
  out.assign(rows, 0.0);
  const double* w = layer.weight.data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = layer.bias[r];
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * in[c];
    out[r] = acc;
  }
}

void fill_uniform(std::span<double> v, double scale, Rng& rng) {
  for (double& x : v) x = rng.uniform(-scale, scale);
}

}  // namespace

std::string_view to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  fail(ErrorKind::kInvalidArgument, "unknown activation '" + std::string(name) + "'");
}

std::size_t VelocityModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
  return n + class_embeddings.data.size() + null_embedding.size();
}

VelocityModel VelocityModel::zeros_like() const {
  VelocityModel z = *this;
  for (auto block : parameter_blocks(z)) std::fill(block.begin(), block.end(), 0.0);
  return z;
}

std::vector<std::span<double>> parameter_blocks(VelocityModel& m) {
  std::vector<std::span<double>> out;
  for (auto& l : m.layers) {
    out.emplace_back(l.weight.data);
    out.emplace_back(l.bias);
  }
  out.emplace_back(m.class_embeddings.data);
  out.emplace_back(m.null_embedding);
  return out;
}

std::vector<std::span<const double>> parameter_blocks(const VelocityModel& m) {
  std::vector<std::span<const double>> out;
  for (const auto& l : m.layers) {
    out.emplace_back(l.weight.data);
    out.emplace_back(l.bias);
  }
  out.emplace_back(m.class_embeddings.data);
  out.emplace_back(m.null_embedding);
  return out;
}

VelocityModel mlp_init(const std::vector<std::size_t>& dims, std::size_t num_classes,
                       std::size_t embed_dim, Activation activation, Rng& rng) {
  if (dims.size() < 2) {
    fail(ErrorKind::kInvalidArgument, "an MLP needs at least 2 layer sizes, got " +
                                          std::to_string(dims.size()));
  }
  for (std::size_t d : dims) {
    if (d == 0) fail(ErrorKind::kInvalidArgument, "layer sizes must be >= 1");
  }
  if (num_classes == 0) fail(ErrorKind::kInvalidArgument, "num_classes must be >= 1");
  if (embed_dim == 0) fail(ErrorKind::kInvalidArgument, "embed_dim must be >= 1");

  VelocityModel m;
  m.dims = dims;
  m.num_classes = num_classes;
  m.embed_dim = embed_dim;
  m.activation = activation;

  std::size_t fan_in = m.input_width();
  for (std::size_t i = 1; i < dims.size(); ++i) {
    DenseLayer layer{Tensor2(dims[i], fan_in), Vec(dims[i])};
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    fill_uniform(layer.weight.data, scale, rng);
    fill_uniform(layer.bias, scale, rng);
    m.layers.push_back(std::move(layer));
    fan_in = dims[i];
  }
  const double escale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  m.class_embeddings = Tensor2(num_classes, embed_dim);
  fill_uniform(m.class_embeddings.data, escale, rng);
  m.null_embedding.assign(embed_dim, 0.0);
  fill_uniform(m.null_embedding, escale, rng);
  return m;
}

Vec mlp_forward(const VelocityModel& model, std::span<const double> x, double t,
                Condition cond) {
  check_inputs(model, x, t, cond);
  g_forward.fetch_add(1, std::memory_order_relaxed);
  Vec h = assemble_input(model, x, t, cond);
  Vec z;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    affine(model.layers[l], h, z);
    if (l + 1 < model.layers.size()) {
      for (double& v : z) v = activate(model.activation, v);
    }
    h.swap(z);
  }
  return h;
}

Vec mlp_grad_accumulate(const VelocityModel& model, std::span<const double> x,
                        double t, Condition cond, std::span<const double> upstream,
                        VelocityModel& grads) {
  check_inputs(model, x, t, cond);
  if (upstream.size() != model.out_dim()) {
    fail(ErrorKind::kShapeMismatch, "upstream gradient has dimension " +
                                        std::to_string(upstream.size()) +
                                        ", model output is " +
                                        std::to_string(model.out_dim()));
  }
  if (grads.dims != model.dims || grads.num_classes != model.num_classes ||
      grads.embed_dim != model.embed_dim) {
    fail(ErrorKind::kShapeMismatch, "gradient accumulator shape differs from model");
  }
  g_backward.fetch_add(1, std::memory_order_relaxed);

  const std::size_t n_layers = model.layers.size();
  // acts[l] is the input to layer l; pre[l] its pre-activation output.
  std::vector<Vec> acts(n_layers);
  std::vector<Vec> pre(n_layers);
  acts[0] = assemble_input(model, x, t, cond);
  for (std::size_t l = 0; l < n_layers; ++l) {
    affine(model.layers[l], acts[l], pre[l]);
    if (l + 1 < n_layers) {
      acts[l + 1] = pre[l];
      for (double& v : acts[l + 1]) v = activate(model.activation, v);
    }
  }

  Vec delta(upstream.begin(), upstream.end());
  Vec back;
  for (std::size_t l = n_layers; l-- > 0;) {
    const DenseLayer& layer = model.layers[l];
    DenseLayer& g = grads.layers[l];
    const std::size_t rows = layer.weight.rows;
    const std::size_t cols = layer.weight.cols;
    back.assign(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      g.bias[r] += d;
      double* gw = g.weight.data.data() + r * cols;
      const double* w = layer.weight.data.data() + r * cols;
      const Vec& in = acts[l];
      for (std::size_t c = 0; c < cols; ++c) {
        gw[c] += d * in[c];
        back[c] += d * w[c];
      }
    }
    if (l > 0) {
      const Vec& z = pre[l - 1];
      delta.resize(cols);
      for (std::size_t c = 0; c < cols; ++c) {
        delta[c] = back[c] * activate_grad(model.activation, z[c]);
      }
    }
  }

  // `back` now holds d/d(input); the embedding slice follows x and t.
  const std::size_t offset = model.in_dim() + 1;
  std::span<double> e_grad = cond.is_null()
                                 ? std::span<double>(grads.null_embedding)
                                 : grads.class_embeddings.row(cond.id());
  for (std::size_t k = 0; k < model.embed_dim; ++k) e_grad[k] += back[offset + k];

  return pre.back();
}

VelocityModel mlp_grad(const VelocityModel& model, std::span<const double> x, double t,
                       Condition cond, std::span<const double> upstream) {
  VelocityModel grads = model.zeros_like();
  mlp_grad_accumulate(model, x, t, cond, upstream, grads);
  return grads;
}

PassCounters pass_counters() {
  return {g_forward.load(std::memory_order_relaxed),
          g_backward.load(std::memory_order_relaxed)};
}

void reset_pass_counters() {
  g_forward.store(0, std::memory_order_relaxed);
  g_backward.store(0, std::memory_order_relaxed);
}

AdamState AdamState::for_model(const VelocityModel& m, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  s.first_moment.assign(m.parameter_count(), 0.0);
  s.second_moment.assign(m.parameter_count(), 0.0);
  return s;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void adam_step(AdamState& state, VelocityModel& params, const VelocityModel& grads) {
  const AdamConfig& c = state.config;
  if (!(c.lr > 0.0)) fail(ErrorKind::kInvalidArgument, "Adam learning rate must be > 0");
  const std::size_t n = params.parameter_count();
  if (grads.parameter_count() != n || grads.dims != params.dims ||
      state.first_moment.size() != n || state.second_moment.size() != n) {
    fail(ErrorKind::kShapeMismatch, "Adam state, parameters and gradients differ in shape");
  }
  const auto g_blocks = parameter_blocks(grads);
  for (std::size_t b = 0; b < g_blocks.size(); ++b) {
    for (std::size_t i = 0; i < g_blocks[b].size(); ++i) {
      if (!std::isfinite(g_blocks[b][i])) {
        fail(ErrorKind::kNumeric, "non-finite gradient in parameter block " +
                                      std::to_string(b) + " at index " +
                                      std::to_string(i) + "; step aborted");
      }
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  auto p_blocks = parameter_blocks(params);
  std::size_t k = 0;
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    for (std::size_t i = 0; i < p_blocks[b].size(); ++i, ++k) {
      const double g = g_blocks[b][i];
      double& m = state.first_moment[k];
      double& v = state.second_moment[k];
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p_blocks[b][i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace spfm
