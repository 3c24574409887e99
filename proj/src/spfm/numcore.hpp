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

// Dense tensors, the conditioned velocity MLP with hand-written backprop,
// and Adam.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spfm/rng.hpp"

namespace spfm {

using Vec = std::vector<double>;

struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;  // row-major

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Tensor2&) const = default;
};

enum class Activation : std::uint8_t { kTanh = 0, kRelu = 1 };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

// Conditioning input: a class id, or the null condition of classifier-free
// guidance.
class Condition {
 public:
  static Condition null() { return Condition(); }
  static Condition label(std::size_t id) { return Condition(id); }

  bool is_null() const { return !id_.has_value(); }
  std::size_t id() const { return *id_; }

  bool operator==(const Condition&) const = default;

 private:
  Condition() = default;
  explicit Condition(std::size_t id) : id_(id) {}
  std::optional<std::size_t> id_;
};

struct DenseLayer {
  Tensor2 weight;  // out x in
  Vec bias;        // out

  bool operator==(const DenseLayer&) const = default;
};

// v_theta(x, t, c). The first layer consumes [x || t || embedding(c)].
// `dims` lists the x width, the hidden widths and the output width.
struct VelocityModel {
  std::vector<std::size_t> dims;
  std::size_t num_classes = 0;
  std::size_t embed_dim = 0;
  Activation activation = Activation::kTanh;

  std::vector<DenseLayer> layers;
  Tensor2 class_embeddings;  // num_classes x embed_dim
  Vec null_embedding;        // embed_dim

  std::size_t in_dim() const { return dims.front(); }
  std::size_t out_dim() const { return dims.back(); }
  std::size_t input_width() const { return dims.front() + 1 + embed_dim; }
  std::size_t parameter_count() const;

  // Same architecture, every parameter zero. Used as a gradient accumulator.
  VelocityModel zeros_like() const;

  bool operator==(const VelocityModel&) const = default;
};

// Visits parameter blocks in a fixed order: for each layer weight then bias,
// then class embeddings, then the null embedding.
std::vector<std::span<double>> parameter_blocks(VelocityModel& m);
std::vector<std::span<const double>> parameter_blocks(const VelocityModel& m);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; embeddings
// use fan_in = embed_dim.
VelocityModel mlp_init(const std::vector<std::size_t>& dims,
                       std::size_t num_classes, std::size_t embed_dim,
                       Activation activation, Rng& rng);

Vec mlp_forward(const VelocityModel& model, std::span<const double> x, double t,
                Condition cond);

// Accumulates d(upstream . v)/d(theta) into `grads` (same shape as model).
// Returns the forward output as a by-product.
Vec mlp_grad_accumulate(const VelocityModel& model, std::span<const double> x,
                        double t, Condition cond,
                        std::span<const double> upstream, VelocityModel& grads);

VelocityModel mlp_grad(const VelocityModel& model, std::span<const double> x,
                       double t, Condition cond, std::span<const double> upstream);

// Process-wide instrumentation counters.
struct PassCounters {
  std::uint64_t forward = 0;
  std::uint64_t backward = 0;
};
PassCounters pass_counters();
void reset_pass_counters();

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step_count = 0;
  Vec first_moment;
  Vec second_moment;

  static AdamState for_model(const VelocityModel& m, const AdamConfig& config);
  bool operator==(const AdamState&) const = default;
};

// One bias-corrected Adam update. Throws (and leaves both arguments
// untouched) if any gradient is non-finite.
void adam_step(AdamState& state, VelocityModel& params, const VelocityModel& grads);

bool all_finite(std::span<const double> v);

}  // namespace spfm
