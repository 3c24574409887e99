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

// Synthetic labelled data with injected, recorded label corruption.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spfm/numcore.hpp"
#include "spfm/rng.hpp"

namespace spfm {

enum class Subset : std::uint8_t { kA = 0, kB = 1 };

struct Sample {
  std::size_t id = 0;
  Vec x1;
  std::size_t label = 0;
  std::size_t true_label = 0;
  bool is_corrupted = false;
  Subset subset = Subset::kA;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_classes = 0;
  std::size_t data_dim = 0;
  nlohmann::json generator_spec = nlohmann::json::object();

  std::size_t size() const { return samples.size(); }
  std::size_t corrupted_count() const;
  bool operator==(const Dataset&) const = default;
};

struct NoiseSpec {
  double rho = 0.0;
  std::uint64_t seed = 0;
};

// Everything needed to regenerate one dataset file.
struct GeneratorSpec {
  std::string generator = "mixture";  // "mixture" | "moons"
  std::size_t num_classes = 4;
  std::size_t n_per_class = 250;
  double radius = 4.0;
  double sigma = 0.3;          // mixture spread, or moons noise
  double feature_noise = 0.0;  // extra isotropic additive noise
  double rho = 0.0;
  std::uint64_t seed = 0;
  Subset subset = Subset::kA;

  nlohmann::json to_json() const;
  // Strict: unknown keys are rejected.
  static GeneratorSpec from_json(const nlohmann::json& j);
};

Dataset gen_mixture(std::size_t num_classes, std::size_t n_per_class, double radius,
                    double sigma, Rng& rng);
Dataset gen_moons(std::size_t n_per_class, double noise_sigma, Rng& rng);

// True class means of gen_mixture: angle 2 pi k / K on the circle.
std::vector<Vec> mixture_means(std::size_t num_classes, double radius);

void add_feature_noise(Dataset& ds, double sigma, Rng& rng);

// Flips exactly round(rho * n) labels, chosen without replacement, each to a
// uniformly chosen different class.
Dataset inject_label_noise(const Dataset& ds, const NoiseSpec& spec);

// Generator + feature noise + label noise, fully determined by the spec.
Dataset generate(const GeneratorSpec& spec);

// Concatenates two subsets, renumbering ids so they are unique.
Dataset concat(const Dataset& a, const Dataset& b);

// Fixed 1:1 subset ratio. Each half is a chunk of a per-epoch permutation of
// its subset; the trailing partial chunk of an epoch is skipped, so a half
// never repeats a sample unless the subset is smaller than the half. The
// batch at a given step is a pure function of (seed, step).
class MixedBatcher {
 public:
  MixedBatcher(const Dataset& a, const Dataset& b, std::size_t batch_size,
               std::uint64_t seed);

  std::vector<Sample> batch_at(std::uint64_t step_index) const;
  std::vector<Sample> next() { return batch_at(cursor_++); }

  std::uint64_t cursor() const { return cursor_; }
  void seek(std::uint64_t cursor) { cursor_ = cursor; }
  std::size_t batch_size() const { return batch_size_; }

 private:
  struct Half {
    const Dataset* ds;
    std::uint64_t tag;
    mutable std::uint64_t cached_epoch = UINT64_MAX;
    mutable std::vector<std::size_t> cached_perm;
  };
  const std::vector<std::size_t>& permutation(const Half& h, std::uint64_t epoch) const;
  void fill(const Half& h, std::uint64_t step, std::vector<Sample>& out) const;

  Half a_;
  Half b_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t cursor_ = 0;
};

// Plain-text dataset file: a header "n,dim,K,<generator spec JSON, CSV-quoted>"
// then "id,x_0..x_{dim-1},label,true_label,is_corrupted,subset" per sample.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
std::string dataset_to_string(const Dataset& ds);
Dataset dataset_from_string(const std::string& text);

}  // namespace spfm
