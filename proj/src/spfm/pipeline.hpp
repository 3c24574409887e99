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

// File-level workflows behind the CLI subcommands. A run directory holds
//   config.json  resolved training config
//   data.csv     combined training set (subset A then B)
//   checkpoint.bin
//   metrics.csv
//   ledger.csv
//   eval.json    (after eval)

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spfm/evalkit.hpp"
#include "spfm/trainer.hpp"

namespace spfm {

using LogSink = std::function<void(int level, const std::string& message)>;
inline constexpr int kLogError = 0;
inline constexpr int kLogInfo = 1;
inline constexpr int kLogDebug = 2;

Dataset generate_from_json(const std::string& spec_json);

// Trains and writes the run directory. On failure the checkpoint and
// metrics of the last completed step are still written before rethrowing.
nlohmann::json train_to_dir(const TrainConfig& config, const std::filesystem::path& out_dir,
                            const LogSink& log = {});

// Fidelity reference for a config: subset A's generator spec, or the spec
// recorded in its dataset file.
std::optional<GeneratorSpec> reference_spec(const TrainConfig& config);

nlohmann::json eval_run(const std::filesystem::path& run_dir, const LogSink& log = {});

nlohmann::json report_runs(const std::vector<std::filesystem::path>& run_dirs,
                           const std::filesystem::path& out_dir);

struct AuditRow {
  std::size_t sample_id = 0;
  double margin = 0.0;  // mean of l_cond - l_uncond
  std::size_t label = 0;
  bool is_corrupted = false;
};

// Scores every sample and ranks by margin, descending (ties by id).
std::vector<AuditRow> purify_audit(const Checkpoint& cp, const Dataset& ds,
                                   std::size_t n_draws, std::uint64_t seed);
std::string audit_to_csv(const std::vector<AuditRow>& rows);
nlohmann::json audit_summary(const std::vector<AuditRow>& rows);

Tensor2 sample_points(const VelocityModel& model, Condition cond, std::size_t n, double w,
                      std::size_t steps, std::uint64_t seed);
std::string points_to_csv(const Tensor2& points);

}  // namespace spfm
