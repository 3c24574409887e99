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

#include "spfm/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "spfm/error.hpp"
#include "spfm/textio.hpp"

namespace spfm {

namespace {

constexpr std::uint64_t kLabelNoiseSubstream = 0x4c4e;    // "LN"
constexpr std::uint64_t kFeatureNoiseSubstream = 0x464e;  // "FN"

std::string subset_name(Subset s) { return s == Subset::kA ? "A" : "B"; }

Subset parse_subset(std::string_view s) {
  if (s == "A") return Subset::kA;
  if (s == "B") return Subset::kB;
  fail(ErrorKind::kFormat, "subset must be 'A' or 'B', got '" + std::string(s) + "'");
}

}  // namespace

std::size_t Dataset::corrupted_count() const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const Sample& s) { return s.is_corrupted; }));
}

nlohmann::json GeneratorSpec::to_json() const {
  return {{"generator", generator},       {"num_classes", num_classes},
          {"n_per_class", n_per_class},   {"radius", radius},
          {"sigma", sigma},               {"feature_noise", feature_noise},
          {"rho", rho},                   {"seed", seed},
          {"subset", subset_name(subset)}};
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "generator spec must be a JSON object");
  GeneratorSpec s;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "generator") s.generator = value.get<std::string>();
      else if (key == "num_classes") s.num_classes = value.get<std::size_t>();
      else if (key == "n_per_class") s.n_per_class = value.get<std::size_t>();
      else if (key == "radius") s.radius = value.get<double>();
      else if (key == "sigma") s.sigma = value.get<double>();
      else if (key == "feature_noise") s.feature_noise = value.get<double>();
      else if (key == "rho") s.rho = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else if (key == "subset") s.subset = parse_subset(value.get<std::string>());
      else fail(ErrorKind::kConfig, "unknown generator spec key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kConfig, "generator spec key '" + key + "': " + e.what());
    }
  }
  if (s.generator != "mixture" && s.generator != "moons") {
    fail(ErrorKind::kConfig, "unknown generator '" + s.generator + "'");
  }
  if (s.generator == "moons") s.num_classes = 2;
  if (s.num_classes < 2) fail(ErrorKind::kConfig, "num_classes must be >= 2");
  if (s.sigma < 0.0 || s.feature_noise < 0.0) {
    fail(ErrorKind::kConfig, "sigma and feature_noise must be >= 0");
  }
  if (!(s.rho >= 0.0 && s.rho <= 1.0)) fail(ErrorKind::kConfig, "rho must lie in [0, 1]");
  return s;
}

std::vector<Vec> mixture_means(std::size_t num_classes, double radius) {
  std::vector<Vec> means;
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(num_classes);
    means.push_back({radius * std::cos(angle), radius * std::sin(angle)});
  }
  return means;
}

Dataset gen_mixture(std::size_t num_classes, std::size_t n_per_class, double radius,
                    double sigma, Rng& rng) {
  if (num_classes < 2) fail(ErrorKind::kInvalidArgument, "mixture needs K >= 2");
  if (sigma < 0.0) fail(ErrorKind::kInvalidArgument, "sigma must be >= 0");
  Dataset ds;
  ds.num_classes = num_classes;
  ds.data_dim = 2;
  ds.generator_spec = {{"generator", "mixture"}, {"num_classes", num_classes},
                       {"n_per_class", n_per_class}, {"radius", radius},
                       {"sigma", sigma}, {"seed", rng.seed()}};
  const auto means = mixture_means(num_classes, radius);
  ds.samples.reserve(num_classes * n_per_class);
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Sample s;
      s.id = ds.samples.size();
      const double dx = rng.normal();
      const double dy = rng.normal();
      s.x1 = {means[k][0] + sigma * dx, means[k][1] + sigma * dy};
      s.label = s.true_label = k;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Dataset gen_moons(std::size_t n_per_class, double noise_sigma, Rng& rng) {
  if (noise_sigma < 0.0) fail(ErrorKind::kInvalidArgument, "noise_sigma must be >= 0");
  Dataset ds;
  ds.num_classes = 2;
  ds.data_dim = 2;
  ds.generator_spec = {{"generator", "moons"}, {"n_per_class", n_per_class},
                       {"sigma", noise_sigma}, {"seed", rng.seed()}};
  const double denom = n_per_class > 1 ? static_cast<double>(n_per_class - 1) : 1.0;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double theta = std::numbers::pi * static_cast<double>(i) / denom;
      Sample s;
      s.id = ds.samples.size();
      if (k == 0) {
        s.x1 = {std::cos(theta), std::sin(theta)};
      } else {
        s.x1 = {1.0 - std::cos(theta), 0.5 - std::sin(theta)};
      }
      const double dx = rng.normal();
      const double dy = rng.normal();
      s.x1[0] += noise_sigma * dx;
      s.x1[1] += noise_sigma * dy;
      s.label = s.true_label = k;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

void add_feature_noise(Dataset& ds, double sigma, Rng& rng) {
  if (sigma < 0.0) fail(ErrorKind::kInvalidArgument, "feature noise must be >= 0");
  if (sigma == 0.0) return;
  for (auto& s : ds.samples) {
    for (double& v : s.x1) v += sigma * rng.normal();
  }
}

Dataset inject_label_noise(const Dataset& ds, const NoiseSpec& spec) {
  if (!(spec.rho >= 0.0 && spec.rho <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "rho must lie in [0, 1]");
  }
  if (ds.num_classes < 2) fail(ErrorKind::kInvalidArgument, "label noise needs K >= 2");
  Dataset out = ds;
  const std::size_t n = out.samples.size();
  const auto count = static_cast<std::size_t>(std::llround(spec.rho * static_cast<double>(n)));
  Rng rng(spec.seed, StreamId::kData, kLabelNoiseSubstream);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
    Sample& s = out.samples[idx[i]];
    const auto r = static_cast<std::size_t>(rng.below(out.num_classes - 1));
    s.label = r < s.label ? r : r + 1;
    s.is_corrupted = s.label != s.true_label;
  }
  return out;
}

Dataset generate(const GeneratorSpec& spec) {
  const std::uint64_t sub = static_cast<std::uint64_t>(spec.subset);
  Rng rng(spec.seed, StreamId::kData, sub);
  Dataset ds = spec.generator == "moons"
                   ? gen_moons(spec.n_per_class, spec.sigma, rng)
                   : gen_mixture(spec.num_classes, spec.n_per_class, spec.radius,
                                 spec.sigma, rng);
  Rng feature_rng(spec.seed, StreamId::kData, kFeatureNoiseSubstream + sub);
  add_feature_noise(ds, spec.feature_noise, feature_rng);
  // Derive the label-noise seed from the spec seed and subset so A and B are
  // corrupted independently.
  ds = inject_label_noise(ds, {spec.rho, splitmix64(spec.seed ^ (sub + 1))});
  for (auto& s : ds.samples) s.subset = spec.subset;
  GeneratorSpec recorded = spec;
  recorded.num_classes = ds.num_classes;
  ds.generator_spec = recorded.to_json();
  return ds;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.data_dim != b.data_dim) {
    fail(ErrorKind::kShapeMismatch, "cannot combine datasets of different dimension");
  }
  Dataset out;
  out.num_classes = std::max(a.num_classes, b.num_classes);
  out.data_dim = a.data_dim;
  out.generator_spec = {{"a", a.generator_spec}, {"b", b.generator_spec}};
  out.samples.reserve(a.size() + b.size());
  for (const auto* part : {&a, &b}) {
    for (const auto& s : part->samples) {
      out.samples.push_back(s);
      out.samples.back().id = out.samples.size() - 1;
    }
  }
  return out;
}

MixedBatcher::MixedBatcher(const Dataset& a, const Dataset& b, std::size_t batch_size,
                           std::uint64_t seed)
    : a_{&a, 0, UINT64_MAX, {}}, b_{&b, 1, UINT64_MAX, {}}, batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0 || batch_size % 2 != 0) {
    fail(ErrorKind::kInvalidArgument, "batch_size must be a positive even number, got " +
                                          std::to_string(batch_size));
  }
  if (a.samples.empty() || b.samples.empty()) {
    fail(ErrorKind::kInvalidArgument, "both subsets must be non-empty");
  }
}

const std::vector<std::size_t>& MixedBatcher::permutation(const Half& h,
                                                          std::uint64_t epoch) const {
  if (h.cached_epoch != epoch) {
    const std::size_t n = h.ds->samples.size();
    h.cached_perm.resize(n);
    std::iota(h.cached_perm.begin(), h.cached_perm.end(), 0);
    Rng rng(seed_, StreamId::kData, splitmix64(h.tag) ^ epoch);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(h.cached_perm[i - 1], h.cached_perm[j]);
    }
    h.cached_epoch = epoch;
  }
  return h.cached_perm;
}

void MixedBatcher::fill(const Half& h, std::uint64_t step, std::vector<Sample>& out) const {
  const std::size_t half = batch_size_ / 2;
  const std::size_t n = h.ds->samples.size();
  if (n >= half) {
    const std::uint64_t per_epoch = n / half;
    const std::uint64_t epoch = step / per_epoch;
    const std::size_t start = static_cast<std::size_t>(step % per_epoch) * half;
    const auto& perm = permutation(h, epoch);
    for (std::size_t i = 0; i < half; ++i) out.push_back(h.ds->samples[perm[start + i]]);
    return;
  }
  // Subset smaller than half a batch: walk consecutive epochs, recycling.
  for (std::size_t i = 0; i < half; ++i) {
    const std::uint64_t pos = step * half + i;
    const auto& perm = permutation(h, pos / n);
    out.push_back(h.ds->samples[perm[pos % n]]);
  }
}

std::vector<Sample> MixedBatcher::batch_at(std::uint64_t step_index) const {
  std::vector<Sample> out;
  out.reserve(batch_size_);
  fill(a_, step_index, out);
  fill(b_, step_index, out);
  return out;
}

std::string dataset_to_string(const Dataset& ds) {
  std::ostringstream os;
  os << ds.samples.size() << ',' << ds.data_dim << ',' << ds.num_classes << ','
     << csv_quote(ds.generator_spec.dump()) << '\n';
  for (const auto& s : ds.samples) {
    os << s.id;
    for (double v : s.x1) os << ',' << format_double(v);
    os << ',' << s.label << ',' << s.true_label << ',' << (s.is_corrupted ? 1 : 0) << ','
       << subset_name(s.subset) << '\n';
  }
  return os.str();
}

Dataset dataset_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kFormat, "dataset file is empty");
  const auto header = split_csv_line(line);
  if (header.size() != 4) fail(ErrorKind::kFormat, "dataset header must have 4 fields");
  Dataset ds;
  const auto n = static_cast<std::size_t>(parse_uint(header[0]));
  ds.data_dim = static_cast<std::size_t>(parse_uint(header[1]));
  ds.num_classes = static_cast<std::size_t>(parse_uint(header[2]));
  try {
    ds.generator_spec = nlohmann::json::parse(header[3]);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("dataset header spec is not JSON: ") + e.what());
  }
  const std::size_t width = ds.data_dim + 5;
  ds.samples.reserve(n);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != width) {
      fail(ErrorKind::kFormat, "dataset row " + std::to_string(ds.samples.size()) +
                                   " has " + std::to_string(f.size()) + " fields, expected " +
                                   std::to_string(width));
    }
    Sample s;
    s.id = static_cast<std::size_t>(parse_uint(f[0]));
    for (std::size_t d = 0; d < ds.data_dim; ++d) s.x1.push_back(parse_double(f[1 + d]));
    s.label = static_cast<std::size_t>(parse_uint(f[1 + ds.data_dim]));
    s.true_label = static_cast<std::size_t>(parse_uint(f[2 + ds.data_dim]));
    s.is_corrupted = parse_uint(f[3 + ds.data_dim]) != 0;
    s.subset = parse_subset(f[4 + ds.data_dim]);
    if (s.label >= ds.num_classes || s.true_label >= ds.num_classes) {
      fail(ErrorKind::kFormat, "label out of range in row " + std::to_string(ds.samples.size()));
    }
    if (s.is_corrupted != (s.label != s.true_label)) {
      fail(ErrorKind::kFormat, "corruption flag inconsistent with labels for sample " +
                                   std::to_string(s.id));
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != n) {
    fail(ErrorKind::kFormat, "dataset header declares " + std::to_string(n) +
                                 " samples but file holds " + std::to_string(ds.samples.size()));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file(path, dataset_to_string(ds));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_string(read_file(path));
}

}  // namespace spfm
