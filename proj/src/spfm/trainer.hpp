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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "spfm/numcore.hpp"
#include "spfm/purify.hpp"
#include "spfm/synthdata.hpp"

namespace spfm {

// A subset is either generated in-process or read from a dataset file.
using DataSource = std::variant<GeneratorSpec, std::filesystem::path>;

struct TrainConfig {
  std::size_t data_dim = 2;
  std::size_t num_classes = 4;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t embed_dim = 8;
  Activation activation = Activation::kTanh;

  std::uint64_t iterations = 10000;
  std::size_t batch_size = 32;
  std::uint64_t warmup_steps = 1000;
  TimePolicy t_policy = TimePolicy::fixed(0.5);
  std::size_t n_draws = 1;
  double p_drop = 0.1;
  TrainMode mode = TrainMode::kSpfm;
  AdamConfig adam;
  std::uint64_t seed = 0;
  DataSource data_a;
  DataSource data_b;
  std::uint64_t log_every = 50;
  bool record_wallclock = false;

  // Evaluation knobs, read by evalkit.
  double detection_window = 0.25;
  double detection_threshold = 0.5;
  double guidance_scale = 1.0;
  std::size_t ode_steps = 100;
  std::size_t eval_n_per_class = 200;

  TrainConfig();

  // Default subsets: an "easy" tight mixture and a "hard" wide, noisier one.
  static GeneratorSpec default_subset(Subset subset, std::size_t num_classes,
                                      std::uint64_t seed);

  nlohmann::json to_json() const;
  std::uint64_t hash() const;
  // Throws Error(kConfig) on a violated invariant.
  void validate() const;

  PurifyConfig purify_config() const;
  // First step whose decisions count toward the detection window.
  std::uint64_t detection_window_begin() const;
};

// Strict: unknown keys are rejected; missing keys keep their defaults.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig config_from_string(const std::string& text);
TrainConfig parse_config(const std::filesystem::path& path);

// Builds subset A then subset B, renumbered into one id space.
Dataset load_training_data(const TrainConfig& config);

struct MetricsRow {
  std::uint64_t step = 0;
  double mean_loss = 0.0;
  double mean_l_cond = 0.0;
  double mean_l_uncond = 0.0;
  std::uint64_t suspect_count = 0;
  std::uint64_t wallclock_ms = 0;

  bool operator==(const MetricsRow&) const = default;
};

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> metrics_from_csv(const std::string& text);

// Running sums between two logged rows.
struct MetricsWindow {
  double sum_loss = 0.0;
  double sum_l_cond = 0.0;
  double sum_l_uncond = 0.0;
  std::uint64_t suspects = 0;
  std::uint64_t steps = 0;

  bool operator==(const MetricsWindow&) const = default;
};

struct Checkpoint {
  TrainConfig config;
  VelocityModel model;
  AdamState optimizer;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  PurityLedger ledger;
  MetricsWindow window;
  std::vector<MetricsRow> metrics;
  std::uint64_t elapsed_ms = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_to_bytes(const Checkpoint& cp);
Checkpoint checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

class Trainer {
 public:
  Trainer(TrainConfig config, Dataset data);
  static Trainer resume(Checkpoint cp, Dataset data);

  // Runs optimizer steps up to and including `last_step` (capped at
  // config.iterations). On a numeric failure the trainer keeps the state of
  // the last completed step and rethrows.
  void run_until(std::uint64_t last_step);
  void run() { run_until(config_.iterations); }
  bool finished() const { return step_ >= config_.iterations; }

  Checkpoint checkpoint() const;

  const TrainConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }
  const VelocityModel& model() const { return model_; }
  const PurityLedger& ledger() const { return ledger_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }
  std::uint64_t step() const { return step_; }

 private:
  Trainer(TrainConfig config, Dataset data, bool fresh);
  void step_once();
  std::uint64_t elapsed_ms() const;

  TrainConfig config_;
  Dataset data_;
  // Heap-held so the batcher's references survive moves of the trainer.
  std::shared_ptr<const Dataset> subset_a_;
  std::shared_ptr<const Dataset> subset_b_;
  std::optional<MixedBatcher> batcher_;
  VelocityModel model_;
  AdamState optimizer_;
  PurityLedger ledger_;
  MetricsWindow window_;
  std::vector<MetricsRow> metrics_;
  std::uint64_t step_ = 0;
  std::uint64_t elapsed_before_ms_ = 0;
  std::chrono::steady_clock::time_point started_;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
  PurityLedger ledger;
  Dataset data;
};

TrainResult train(const TrainConfig& config);

}  // namespace spfm
