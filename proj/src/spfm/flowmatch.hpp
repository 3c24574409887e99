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

#pragma once

#include <cstddef>
#include <span>

#include "spfm/numcore.hpp"
#include "spfm/rng.hpp"

namespace spfm {

// How the interpolation time is chosen for each draw.
struct TimePolicy {
  enum class Kind { kFixed, kUniform };
  Kind kind = Kind::kFixed;
  double fixed_t = 0.5;

  static TimePolicy fixed(double t) { return {Kind::kFixed, t}; }
  static TimePolicy uniform() { return {Kind::kUniform, 0.5}; }
};

// One noise/data pairing on the straight path, shared by the conditional and
// unconditional losses.
struct PairedDraw {
  Vec x0;
  Vec x1;
  double t_prime = 0.0;
  Vec x_t;     // (1 - t') x0 + t' x1
  Vec target;  // x1 - x0
};

struct LossPair {
  double l_cond = 0.0;
  double l_uncond = 0.0;
};

PairedDraw make_draw(std::span<const double> x1, const TimePolicy& policy, Rng& rng);

// Deterministic construction from explicit endpoints.
PairedDraw draw_from(std::span<const double> x0, std::span<const double> x1,
                     double t_prime);

// Velocity residual v - (x1 - x0) and its squared norm for one branch.
struct BranchEval {
  double loss = 0.0;
  Vec residual;
};
BranchEval evaluate_branch(const VelocityModel& model, const PairedDraw& draw,
                           Condition cond);

// Squared L2 residual ||v(x_t, t', cond) - (x1 - x0)||^2, summed over
// components.
double fm_loss(const VelocityModel& model, const PairedDraw& draw, Condition cond);

// Conditional and unconditional losses on the same draw. Consumes no
// randomness; exactly two forward passes.
LossPair loss_pair(const VelocityModel& model, const PairedDraw& draw,
                   std::size_t class_id);

// v_null + w (v_cond - v_null). w = 1 and w = 0 return the corresponding
// branch bit-exactly.
Vec cfg_velocity(const VelocityModel& model, std::span<const double> x, double t,
                 std::size_t class_id, double w);

// Forward Euler from x(0) ~ N(0, I) to t = 1. A null condition integrates
// the unconditional field and ignores w.
Vec sample_ode(const VelocityModel& model, Condition cond, double w, std::size_t steps,
               Rng& rng);

// Same integrator from a caller-supplied starting point.
Vec integrate_euler(const VelocityModel& model, Condition cond, double w,
                    std::size_t steps, Vec x);

}  // namespace spfm
