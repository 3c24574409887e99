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

#include "spfm/purify.hpp"

#include <sstream>
#include <unordered_set>

#include "spfm/error.hpp"
#include "spfm/textio.hpp"

namespace spfm {

Verdict route(const LossPair& losses, std::uint64_t step, std::uint64_t warmup_steps) {
  if (step <= warmup_steps) return Verdict::kTrusted;
  return losses.l_cond > losses.l_uncond ? Verdict::kSuspect : Verdict::kTrusted;
}

BatchOutcome purify_batch(const VelocityModel& model, std::span<const Sample> batch,
                          std::uint64_t step, const PurifyConfig& config, Rng& rng) {
  if (batch.empty()) fail(ErrorKind::kInvalidArgument, "purify_batch needs a non-empty batch");
  if (config.n_draws == 0) fail(ErrorKind::kInvalidArgument, "n_draws must be >= 1");
  if (!(config.p_drop >= 0.0 && config.p_drop <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "p_drop must lie in [0, 1]");
  }

  BatchOutcome out;
  out.grads = model.zeros_like();
  out.decisions.reserve(batch.size());
  const double batch_n = static_cast<double>(batch.size());
  const double draws_n = static_cast<double>(config.n_draws);

  struct Evaluated {
    PairedDraw draw;
    BranchEval cond;
    BranchEval uncond;
  };
  std::vector<Evaluated> evals(config.n_draws);

  for (const Sample& s : batch) {
    if (s.label >= model.num_classes) {
      fail(ErrorKind::kInvalidArgument, "sample " + std::to_string(s.id) +
                                            " has no valid class label");
    }
    const bool dropped = rng.uniform() < config.p_drop;

    LossPair mean_pair;
    for (auto& e : evals) {
      e.draw = make_draw(s.x1, config.t_policy, rng);
      e.cond = evaluate_branch(model, e.draw, Condition::label(s.label));
      e.uncond = evaluate_branch(model, e.draw, Condition::null());
      mean_pair.l_cond += e.cond.loss / draws_n;
      mean_pair.l_uncond += e.uncond.loss / draws_n;
    }

    RoutingDecision d;
    d.sample_id = s.id;
    d.losses = mean_pair;
    d.step = step;
    d.verdict = config.mode == TrainMode::kSpfm
                    ? route(mean_pair, step, config.warmup_steps)
                    : Verdict::kTrusted;
    d.trained_unconditionally = dropped || d.verdict == Verdict::kSuspect;

    const Condition branch =
        d.trained_unconditionally ? Condition::null() : Condition::label(s.label);
    // d/dv ||v - target||^2 = 2 (v - target), averaged over draws and batch.
    const double scale = 2.0 / (batch_n * draws_n);
    Vec upstream;
    for (const auto& e : evals) {
      const BranchEval& chosen = d.trained_unconditionally ? e.uncond : e.cond;
      upstream.resize(chosen.residual.size());
      for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] = scale * chosen.residual[i];
      mlp_grad_accumulate(model, e.draw.x_t, e.draw.t_prime, branch, upstream, out.grads);
    }

    out.loss += (d.trained_unconditionally ? mean_pair.l_uncond : mean_pair.l_cond) / batch_n;
    out.mean_l_cond += mean_pair.l_cond / batch_n;
    out.mean_l_uncond += mean_pair.l_uncond / batch_n;
    if (d.verdict == Verdict::kSuspect) ++out.suspect_count;
    out.decisions.push_back(d);
  }
  return out;
}

double PurityLedger::flag_rate(std::size_t id) const {
  const auto& e = entries.at(id);
  return e.times_seen == 0 ? 0.0
                           : static_cast<double>(e.times_flagged) /
                                 static_cast<double>(e.times_seen);
}

double PurityLedger::window_flag_rate(std::size_t id) const {
  const auto& e = entries.at(id);
  return e.window_seen == 0 ? 0.0
                            : static_cast<double>(e.window_flagged) /
                                  static_cast<double>(e.window_seen);
}

void ledger_update(PurityLedger& ledger, std::span<const RoutingDecision> decisions) {
  std::unordered_set<std::size_t> ids;
  ids.reserve(decisions.size());
  for (const auto& d : decisions) {
    if (d.sample_id >= ledger.entries.size()) {
      fail(ErrorKind::kInvalidArgument, "sample id " + std::to_string(d.sample_id) +
                                            " is outside the ledger");
    }
    if (!ids.insert(d.sample_id).second) {
      fail(ErrorKind::kInvalidArgument, "sample id " + std::to_string(d.sample_id) +
                                            " appears twice in one step");
    }
  }
  std::uint64_t suspects = 0;
  for (const auto& d : decisions) {
    LedgerEntry& e = ledger.entries[d.sample_id];
    const bool flagged = d.verdict == Verdict::kSuspect;
    e.times_seen += 1;
    e.times_flagged += flagged ? 1 : 0;
    if (d.step >= ledger.window_begin) {
      e.window_seen += 1;
      e.window_flagged += flagged ? 1 : 0;
    }
    suspects += flagged ? 1 : 0;
  }
  ledger.suspects_per_step.push_back(suspects);
}

std::string ledger_to_csv(const PurityLedger& ledger, const Dataset& ds) {
  if (ds.samples.size() != ledger.entries.size()) {
    fail(ErrorKind::kInvalidArgument, "ledger and dataset cover different sample counts");
  }
  std::ostringstream os;
  os << "sample_id,times_seen,times_flagged,flag_rate,is_corrupted_ground_truth\n";
  for (std::size_t i = 0; i < ledger.entries.size(); ++i) {
    const auto& e = ledger.entries[i];
    os << i << ',' << e.times_seen << ',' << e.times_flagged << ','
       << format_double(ledger.flag_rate(i)) << ',' << (ds.samples[i].is_corrupted ? 1 : 0)
       << '\n';
  }
  return os.str();
}

double spfm_margin(const VelocityModel& model, const Sample& sample,
                   const TimePolicy& policy, std::size_t n_draws, Rng& rng) {
  if (n_draws == 0) fail(ErrorKind::kInvalidArgument, "n_draws must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < n_draws; ++i) {
    const PairedDraw draw = make_draw(sample.x1, policy, rng);
    const LossPair lp = loss_pair(model, draw, sample.label);
    sum += lp.l_cond - lp.l_uncond;
  }
  return sum / static_cast<double>(n_draws);
}

}  // namespace spfm
