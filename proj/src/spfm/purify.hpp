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

// Self-purifying routing: each labelled sample is scored by its conditional
// and unconditional flow-matching losses on one shared draw. Once warm-up is
// over, a sample whose conditional loss is strictly larger is trained only
// through the null condition for that step.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spfm/flowmatch.hpp"
#include "spfm/numcore.hpp"
#include "spfm/rng.hpp"
#include "spfm/synthdata.hpp"

namespace spfm {

enum class Verdict : std::uint8_t { kTrusted = 0, kSuspect = 1 };

// Steps are 1-based; routing is active only for step > warmup_steps.
Verdict route(const LossPair& losses, std::uint64_t step, std::uint64_t warmup_steps);

struct RoutingDecision {
  std::size_t sample_id = 0;
  Verdict verdict = Verdict::kTrusted;
  LossPair losses;
  std::uint64_t step = 0;
  // Suspect, or picked by label dropout.
  bool trained_unconditionally = false;
};

enum class TrainMode : std::uint8_t { kSpfm = 0, kVanilla = 1 };

struct PurifyConfig {
  std::uint64_t warmup_steps = 1000;
  TimePolicy t_policy = TimePolicy::fixed(0.5);
  std::size_t n_draws = 1;
  double p_drop = 0.1;
  TrainMode mode = TrainMode::kSpfm;
};

struct BatchOutcome {
  std::vector<RoutingDecision> decisions;
  double loss = 0.0;           // mean of the trained branch's loss
  double mean_l_cond = 0.0;
  double mean_l_uncond = 0.0;
  std::size_t suspect_count = 0;
  VelocityModel grads;         // d loss / d theta
};

// Per-sample loss pairs, routing and gradients for one optimizer step.
// Randomness (label dropout first, then the draws) comes from `rng` in
// sample order. In vanilla mode every verdict is Trusted.
BatchOutcome purify_batch(const VelocityModel& model, std::span<const Sample> batch,
                          std::uint64_t step, const PurifyConfig& config, Rng& rng);

struct LedgerEntry {
  std::uint64_t times_seen = 0;
  std::uint64_t times_flagged = 0;
  // Same counters restricted to steps >= window_begin.
  std::uint64_t window_seen = 0;
  std::uint64_t window_flagged = 0;

  bool operator==(const LedgerEntry&) const = default;
};

struct PurityLedger {
  std::vector<LedgerEntry> entries;  // indexed by sample id
  std::vector<std::uint64_t> suspects_per_step;
  std::uint64_t window_begin = 0;

  PurityLedger() = default;
  PurityLedger(std::size_t n_samples, std::uint64_t window_begin_step)
      : entries(n_samples), window_begin(window_begin_step) {}

  double flag_rate(std::size_t id) const;
  double window_flag_rate(std::size_t id) const;

  bool operator==(const PurityLedger&) const = default;
};

// Records one completed step. Duplicate or out-of-range ids are rejected
// before anything is modified.
void ledger_update(PurityLedger& ledger, std::span<const RoutingDecision> decisions);

// sample_id,times_seen,times_flagged,flag_rate,is_corrupted_ground_truth
std::string ledger_to_csv(const PurityLedger& ledger, const Dataset& ds);

// Post-hoc audit: mean of (l_cond - l_uncond) over n_draws fresh draws.
double spfm_margin(const VelocityModel& model, const Sample& sample,
                   const TimePolicy& policy, std::size_t n_draws, Rng& rng);

}  // namespace spfm
