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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spfm/numcore.hpp"
#include "spfm/purify.hpp"
#include "spfm/synthdata.hpp"
#include "spfm/trainer.hpp"

namespace spfm {

struct DetectionReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  nlohmann::json to_json() const;
  static DetectionReport from_json(const nlohmann::json& j);
};

enum class RateSource { kTotal, kWindow };

// A sample is predicted corrupted iff its flag rate is strictly above the
// threshold.
DetectionReport detection_metrics(const PurityLedger& ledger, const Dataset& ds,
                                  double threshold, RateSource source = RateSource::kWindow);

DetectionReport detection_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                      std::size_t fn, double threshold);

struct FidelityReport {
  double class_consistency = 0.0;
  double energy_distance = 0.0;
  std::size_t samples_per_class = 0;

  nlohmann::json to_json() const;
  static FidelityReport from_json(const nlohmann::json& j);
};

// Index of the nearest point in `means`.
std::size_t nearest_mean(std::span<const double> x, const std::vector<Vec>& means);

// Generates n_per_class samples per class with the ODE sampler and returns
// the fraction whose nearest true mixture mean is the conditioning class.
double class_consistency(const VelocityModel& model, const GeneratorSpec& ref,
                         std::size_t n_per_class, double w, std::size_t steps, Rng& rng);

// V-statistic energy distance between two point sets (rows are points):
// 2 E|X-Y| - E|X-X'| - E|Y-Y'| over all ordered pairs.
double energy_distance(const Tensor2& x, const Tensor2& y);

// Consistency plus energy distance of the pooled generated set against a
// fresh clean draw from the reference mixture.
FidelityReport evaluate_fidelity(const VelocityModel& model, const GeneratorSpec& ref,
                                 std::size_t n_per_class, double w, std::size_t steps,
                                 std::uint64_t seed);

struct RunRecord {
  std::string mode;
  double rho = 0.0;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> metrics;
  DetectionReport detection;
  FidelityReport fidelity;
};

// summary.csv plus, per run i, suspects_<i>.svg and losses_<i>.svg.
std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& runs,
                                               const std::filesystem::path& out_dir);

std::string summary_csv(const std::vector<RunRecord>& runs);

struct Series {
  std::string name;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

// Static SVG 1.1 line chart.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

}  // namespace spfm
