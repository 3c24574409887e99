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

#include "spfm/flowmatch.hpp"

#include <string>

#include "spfm/error.hpp"

namespace spfm {

PairedDraw draw_from(std::span<const double> x0, std::span<const double> x1,
                     double t_prime) {
  if (x0.size() != x1.size()) {
    fail(ErrorKind::kShapeMismatch, "source and data vectors differ in dimension");
  }
  if (!all_finite(x0) || !all_finite(x1)) {
    fail(ErrorKind::kNumeric, "draw endpoints must be finite");
  }
  if (!(t_prime >= 0.0 && t_prime <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "interpolation time must lie in [0, 1]");
  }
  PairedDraw d;
  d.x0.assign(x0.begin(), x0.end());
  d.x1.assign(x1.begin(), x1.end());
  d.t_prime = t_prime;
  const std::size_t n = x1.size();
  d.x_t.resize(n);
  d.target.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Endpoint-exact form: t'=0 gives x0 and t'=1 gives x1 with no rounding.
    d.x_t[i] = (1.0 - t_prime) * x0[i] + t_prime * x1[i];
    d.target[i] = x1[i] - x0[i];
  }
  return d;
}

PairedDraw make_draw(std::span<const double> x1, const TimePolicy& policy, Rng& rng) {
  if (!all_finite(x1)) fail(ErrorKind::kNumeric, "data vector contains non-finite values");
  Vec x0(x1.size());
  for (double& v : x0) v = rng.normal();
  const double t = policy.kind == TimePolicy::Kind::kFixed ? policy.fixed_t : rng.uniform();
  return draw_from(x0, x1, t);
}

BranchEval evaluate_branch(const VelocityModel& model, const PairedDraw& draw,
                           Condition cond) {
  if (draw.target.size() != model.out_dim() || draw.x_t.size() != model.in_dim()) {
    fail(ErrorKind::kShapeMismatch, "draw dimension " + std::to_string(draw.x_t.size()) +
                                        " does not match model (" +
                                        std::to_string(model.in_dim()) + " -> " +
                                        std::to_string(model.out_dim()) + ")");
  }
  BranchEval out;
  out.residual = mlp_forward(model, draw.x_t, draw.t_prime, cond);
  for (std::size_t i = 0; i < out.residual.size(); ++i) {
    out.residual[i] -= draw.target[i];
    out.loss += out.residual[i] * out.residual[i];
  }
  return out;
}

double fm_loss(const VelocityModel& model, const PairedDraw& draw, Condition cond) {
  return evaluate_branch(model, draw, cond).loss;
}

LossPair loss_pair(const VelocityModel& model, const PairedDraw& draw,
                   std::size_t class_id) {
  return {fm_loss(model, draw, Condition::label(class_id)),
          fm_loss(model, draw, Condition::null())};
}

Vec cfg_velocity(const VelocityModel& model, std::span<const double> x, double t,
                 std::size_t class_id, double w) {
  if (!(w >= 0.0)) fail(ErrorKind::kInvalidArgument, "guidance scale must be >= 0");
  if (w == 1.0) return mlp_forward(model, x, t, Condition::label(class_id));
  if (w == 0.0) {
    if (class_id >= model.num_classes) {
      fail(ErrorKind::kInvalidArgument, "class id out of range");
    }
    return mlp_forward(model, x, t, Condition::null());
  }
  const Vec vc = mlp_forward(model, x, t, Condition::label(class_id));
  Vec out = mlp_forward(model, x, t, Condition::null());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * (vc[i] - out[i]);
  return out;
}

Vec integrate_euler(const VelocityModel& model, Condition cond, double w,
                    std::size_t steps, Vec x) {
  if (steps == 0) fail(ErrorKind::kInvalidArgument, "sample_ode needs at least 1 step");
  const double h = 1.0 / static_cast<double>(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * h;
    const Vec v = cond.is_null() ? mlp_forward(model, x, t, cond)
                                 : cfg_velocity(model, x, t, cond.id(), w);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += h * v[k];
    if (!all_finite(x)) {
      fail(ErrorKind::kNumeric, "non-finite state during ODE integration at step " +
                                    std::to_string(i));
    }
  }
  return x;
}

Vec sample_ode(const VelocityModel& model, Condition cond, double w, std::size_t steps,
               Rng& rng) {
  if (steps == 0) fail(ErrorKind::kInvalidArgument, "sample_ode needs at least 1 step");
  Vec x(model.in_dim());
  for (double& v : x) v = rng.normal();
  return integrate_euler(model, cond, w, steps, std::move(x));
}

}  // namespace spfm
