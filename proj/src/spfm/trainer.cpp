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

#include "spfm/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "spfm/error.hpp"
#include "spfm/textio.hpp"

namespace spfm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

TrainConfig::TrainConfig()
    : data_a(default_subset(Subset::kA, 4, 0)), data_b(default_subset(Subset::kB, 4, 0)) {}

GeneratorSpec TrainConfig::default_subset(Subset subset, std::size_t num_classes,
                                          std::uint64_t seed) {
  GeneratorSpec g;
  g.generator = "mixture";
  g.num_classes = num_classes;
  g.n_per_class = 250;
  g.radius = 4.0;
  g.sigma = subset == Subset::kA ? 0.2 : 0.6;
  g.feature_noise = subset == Subset::kA ? 0.0 : 0.1;
  g.rho = 0.0;
  g.seed = seed;
  g.subset = subset;
  return g;
}

namespace {

json source_to_json(const DataSource& src) {
  if (const auto* spec = std::get_if<GeneratorSpec>(&src)) return spec->to_json();
  return std::get<std::filesystem::path>(src).generic_string();
}

std::string mode_name(TrainMode m) { return m == TrainMode::kSpfm ? "spfm" : "vanilla"; }

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

json TrainConfig::to_json() const {
  json j;
  j["data_dim"] = data_dim;
  j["num_classes"] = num_classes;
  j["hidden_dims"] = hidden_dims;
  j["embed_dim"] = embed_dim;
  j["activation"] = std::string(to_string(activation));
  j["iterations"] = iterations;
  j["batch_size"] = batch_size;
  j["warmup_steps"] = warmup_steps;
  j["t_policy"] = t_policy.kind == TimePolicy::Kind::kFixed ? "fixed" : "uniform";
  j["t_fixed"] = t_policy.fixed_t;
  j["n_draws"] = n_draws;
  j["p_drop"] = p_drop;
  j["mode"] = mode_name(mode);
  j["lr"] = adam.lr;
  j["beta1"] = adam.beta1;
  j["beta2"] = adam.beta2;
  j["eps"] = adam.eps;
  j["seed"] = seed;
  j["data"] = {{"a", source_to_json(data_a)}, {"b", source_to_json(data_b)}};
  j["log_every"] = log_every;
  j["record_wallclock"] = record_wallclock;
  j["detection_window"] = detection_window;
  j["detection_threshold"] = detection_threshold;
  j["guidance_scale"] = guidance_scale;
  j["ode_steps"] = ode_steps;
  j["eval_n_per_class"] = eval_n_per_class;
  return j;
}

std::uint64_t TrainConfig::hash() const { return fnv1a(to_json().dump()); }

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::kConfig, "invalid config: " + what); };
  if (data_dim == 0) bad("data_dim must be >= 1");
  if (num_classes < 2) bad("num_classes must be >= 2");
  if (embed_dim == 0) bad("embed_dim must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h == 0) bad("hidden_dims entries must be >= 1");
  }
  if (iterations == 0) bad("iterations must be >= 1");
  if (batch_size == 0 || batch_size % 2 != 0) {
    bad("batch_size must be a positive even number (got " + std::to_string(batch_size) + ")");
  }
  if (mode == TrainMode::kSpfm && iterations <= warmup_steps) {
    bad("iterations (" + std::to_string(iterations) + ") must exceed warmup_steps (" +
        std::to_string(warmup_steps) + ") in spfm mode");
  }
  if (!(t_policy.fixed_t >= 0.0 && t_policy.fixed_t <= 1.0)) bad("t_fixed must lie in [0, 1]");
  if (n_draws == 0) bad("n_draws must be >= 1");
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) bad("p_drop must lie in [0, 1]");
  if (!(adam.lr > 0.0)) bad("lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    bad("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) bad("eps must be > 0");
  if (log_every == 0) bad("log_every must be >= 1");
  if (!(detection_window > 0.0 && detection_window <= 1.0)) bad("detection_window must lie in (0, 1]");
  if (!(detection_threshold >= 0.0 && detection_threshold <= 1.0)) {
    bad("detection_threshold must lie in [0, 1]");
  }
  if (!(guidance_scale >= 0.0)) bad("guidance_scale must be >= 0");
  if (ode_steps == 0) bad("ode_steps must be >= 1");
  if (eval_n_per_class == 0) bad("eval_n_per_class must be >= 1");
}

PurifyConfig TrainConfig::purify_config() const {
  PurifyConfig p;
  p.warmup_steps = warmup_steps;
  p.t_policy = t_policy;
  p.n_draws = n_draws;
  p.p_drop = p_drop;
  p.mode = mode;
  return p;
}

std::uint64_t TrainConfig::detection_window_begin() const {
  const auto window = static_cast<std::uint64_t>(
      std::llround(detection_window * static_cast<double>(iterations)));
  return iterations - window + 1;
}

namespace {

DataSource parse_source(const json& v, Subset subset, const TrainConfig& cfg) {
  if (v.is_string()) return std::filesystem::path(v.get<std::string>());
  if (!v.is_object()) fail(ErrorKind::kConfig, "data sources must be a path or a generator object");
  json spec = v;
  if (!spec.contains("seed")) spec["seed"] = cfg.seed;
  if (!spec.contains("num_classes") && spec.value("generator", "mixture") == "mixture") {
    spec["num_classes"] = cfg.num_classes;
  }
  spec["subset"] = subset == Subset::kA ? "A" : "B";
  return GeneratorSpec::from_json(spec);
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, "config key '" + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "config must be a JSON object");
  TrainConfig c;
  const json* data = nullptr;
  for (const auto& [key, v] : j.items()) {
    if (key == "data_dim") c.data_dim = get_as<std::size_t>(v, key);
    else if (key == "num_classes") c.num_classes = get_as<std::size_t>(v, key);
    else if (key == "hidden_dims") c.hidden_dims = get_as<std::vector<std::size_t>>(v, key);
    else if (key == "embed_dim") c.embed_dim = get_as<std::size_t>(v, key);
    else if (key == "activation") {
      try {
        c.activation = parse_activation(get_as<std::string>(v, key));
      } catch (const Error& e) {
        fail(ErrorKind::kConfig, e.what());
      }
    } else if (key == "iterations") c.iterations = get_as<std::uint64_t>(v, key);
    else if (key == "batch_size") c.batch_size = get_as<std::size_t>(v, key);
    else if (key == "warmup_steps") c.warmup_steps = get_as<std::uint64_t>(v, key);
    else if (key == "t_policy") {
      const auto p = get_as<std::string>(v, key);
      if (p == "fixed") c.t_policy.kind = TimePolicy::Kind::kFixed;
      else if (p == "uniform") c.t_policy.kind = TimePolicy::Kind::kUniform;
      else fail(ErrorKind::kConfig, "t_policy must be 'fixed' or 'uniform'");
    } else if (key == "t_fixed") c.t_policy.fixed_t = get_as<double>(v, key);
    else if (key == "n_draws") c.n_draws = get_as<std::size_t>(v, key);
    else if (key == "p_drop") c.p_drop = get_as<double>(v, key);
    else if (key == "mode") {
      const auto m = get_as<std::string>(v, key);
      if (m == "spfm") c.mode = TrainMode::kSpfm;
      else if (m == "vanilla") c.mode = TrainMode::kVanilla;
      else fail(ErrorKind::kConfig, "mode must be 'spfm' or 'vanilla'");
    } else if (key == "lr") c.adam.lr = get_as<double>(v, key);
    else if (key == "beta1") c.adam.beta1 = get_as<double>(v, key);
    else if (key == "beta2") c.adam.beta2 = get_as<double>(v, key);
    else if (key == "eps") c.adam.eps = get_as<double>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "data") data = &v;
    else if (key == "log_every") c.log_every = get_as<std::uint64_t>(v, key);
    else if (key == "record_wallclock") c.record_wallclock = get_as<bool>(v, key);
    else if (key == "detection_window") c.detection_window = get_as<double>(v, key);
    else if (key == "detection_threshold") c.detection_threshold = get_as<double>(v, key);
    else if (key == "guidance_scale") c.guidance_scale = get_as<double>(v, key);
    else if (key == "ode_steps") c.ode_steps = get_as<std::size_t>(v, key);
    else if (key == "eval_n_per_class") c.eval_n_per_class = get_as<std::size_t>(v, key);
    else fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  }

  c.data_a = TrainConfig::default_subset(Subset::kA, c.num_classes, c.seed);
  c.data_b = TrainConfig::default_subset(Subset::kB, c.num_classes, c.seed);
  if (data != nullptr) {
    if (!data->is_object()) fail(ErrorKind::kConfig, "config key 'data' must be an object");
    for (const auto& [key, v] : data->items()) {
      if (key == "a") c.data_a = parse_source(v, Subset::kA, c);
      else if (key == "b") c.data_b = parse_source(v, Subset::kB, c);
      else fail(ErrorKind::kConfig, "unknown config key 'data." + key + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig config_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

TrainConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::kIo, "config file '" + path.string() + "' does not exist");
  }
  TrainConfig c = config_from_string(read_file(path));
  // Dataset paths are relative to the config file.
  const auto base = path.parent_path();
  for (DataSource* src : {&c.data_a, &c.data_b}) {
    if (auto* p = std::get_if<std::filesystem::path>(src); p && p->is_relative()) {
      *p = base / *p;
    }
  }
  return c;
}

Dataset load_training_data(const TrainConfig& config) {
  auto load = [&](const DataSource& src, Subset subset) {
    Dataset ds = std::holds_alternative<GeneratorSpec>(src)
                     ? generate(std::get<GeneratorSpec>(src))
                     : load_dataset(std::get<std::filesystem::path>(src));
    for (auto& s : ds.samples) s.subset = subset;
    if (ds.data_dim != config.data_dim) {
      fail(ErrorKind::kConfig, "subset data_dim " + std::to_string(ds.data_dim) +
                                   " differs from config data_dim " +
                                   std::to_string(config.data_dim));
    }
    if (ds.num_classes != config.num_classes) {
      fail(ErrorKind::kConfig, "subset has " + std::to_string(ds.num_classes) +
                                   " classes, config expects " +
                                   std::to_string(config.num_classes));
    }
    if (ds.samples.size() < config.batch_size / 2) {
      fail(ErrorKind::kConfig, "each subset needs at least batch_size/2 samples");
    }
    return ds;
  };
  return concat(load(config.data_a, Subset::kA), load(config.data_b, Subset::kB));
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "step,mean_loss,mean_l_cond,mean_l_uncond,suspect_count,wallclock_ms\n";
  for (const auto& r : rows) {
    os << r.step << ',' << format_double(r.mean_loss) << ',' << format_double(r.mean_l_cond)
       << ',' << format_double(r.mean_l_uncond) << ',' << r.suspect_count << ','
       << r.wallclock_ms << '\n';
  }
  return os.str();
}

std::vector<MetricsRow> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,", 0) != 0) {
    fail(ErrorKind::kFormat, "metrics CSV is missing its header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) fail(ErrorKind::kFormat, "metrics row must have 6 fields");
    rows.push_back({parse_uint(f[0]), parse_double(f[1]), parse_double(f[2]),
                    parse_double(f[3]), parse_uint(f[4]), parse_uint(f[5])});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoint encoding: little-endian, fixed field order (see README).

namespace {

constexpr char kMagic[8] = {'S', 'P', 'F', 'M', 'C', 'K', 'P', 'T'};
constexpr char kTrailer[8] = {'S', 'P', 'F', 'M', 'E', 'N', 'D', '\0'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : buf_(b) {}

  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) fail(ErrorKind::kFormat, "checkpoint is truncated");
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t elem_size) {
    const std::uint64_t n = u64();
    if (n > (buf_.size() - pos_) / elem_size) fail(ErrorKind::kFormat, "checkpoint is truncated");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = count(1);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void f64s_into(std::span<double> out) {
    const std::size_t n = count(8);
    if (n != out.size()) fail(ErrorKind::kFormat, "checkpoint parameter block has wrong size");
    for (double& x : out) x = f64();
  }
  Vec f64s() {
    Vec v(count(8));
    for (double& x : v) x = f64();
    return v;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_to_bytes(const Checkpoint& cp) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(cp.step);
  w.u64(cp.config_hash);
  w.str(cp.config.to_json().dump());

  const VelocityModel& m = cp.model;
  w.u8(static_cast<std::uint8_t>(m.activation));
  w.u64(m.num_classes);
  w.u64(m.embed_dim);
  w.u64(m.dims.size());
  for (std::size_t d : m.dims) w.u64(d);
  for (auto block : parameter_blocks(m)) w.f64s(block);

  const AdamState& a = cp.optimizer;
  w.f64(a.config.lr);
  w.f64(a.config.beta1);
  w.f64(a.config.beta2);
  w.f64(a.config.eps);
  w.u64(a.step_count);
  w.f64s(a.first_moment);
  w.f64s(a.second_moment);

  w.u64(cp.ledger.window_begin);
  w.u64(cp.ledger.entries.size());
  for (const auto& e : cp.ledger.entries) {
    w.u64(e.times_seen);
    w.u64(e.times_flagged);
    w.u64(e.window_seen);
    w.u64(e.window_flagged);
  }
  w.u64(cp.ledger.suspects_per_step.size());
  for (auto s : cp.ledger.suspects_per_step) w.u64(s);

  w.f64(cp.window.sum_loss);
  w.f64(cp.window.sum_l_cond);
  w.f64(cp.window.sum_l_uncond);
  w.u64(cp.window.suspects);
  w.u64(cp.window.steps);

  w.u64(cp.metrics.size());
  for (const auto& r : cp.metrics) {
    w.u64(r.step);
    w.f64(r.mean_loss);
    w.f64(r.mean_l_cond);
    w.f64(r.mean_l_uncond);
    w.u64(r.suspect_count);
    w.u64(r.wallclock_ms);
  }
  w.u64(cp.elapsed_ms);
  w.raw(kTrailer, sizeof kTrailer);
  return w.take();
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  if (bytes.size() < sizeof magic + 4) {
    fail(ErrorKind::kVersion, "not a checkpoint: header too short");
  }
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    fail(ErrorKind::kVersion, "not a checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kVersion, "unsupported checkpoint version " + std::to_string(version) +
                                  " (expected " + std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint cp;
  cp.step = r.u64();
  cp.config_hash = r.u64();
  cp.config = config_from_string(r.str());
  if (cp.config.hash() != cp.config_hash) {
    fail(ErrorKind::kFormat, "checkpoint config hash does not match its config");
  }

  VelocityModel& m = cp.model;
  const std::uint8_t act = r.u8();
  if (act > 1) fail(ErrorKind::kFormat, "checkpoint has unknown activation tag");
  m.activation = static_cast<Activation>(act);
  m.num_classes = r.u64();
  m.embed_dim = r.u64();
  m.dims.resize(r.count(8));
  for (auto& d : m.dims) d = r.u64();
  if (m.dims.size() < 2 || m.num_classes == 0 || m.embed_dim == 0) {
    fail(ErrorKind::kFormat, "checkpoint model header is inconsistent");
  }
  std::size_t fan_in = m.dims.front() + 1 + m.embed_dim;
  for (std::size_t i = 1; i < m.dims.size(); ++i) {
    m.layers.push_back({Tensor2(m.dims[i], fan_in), Vec(m.dims[i])});
    fan_in = m.dims[i];
  }
  m.class_embeddings = Tensor2(m.num_classes, m.embed_dim);
  m.null_embedding.assign(m.embed_dim, 0.0);
  for (auto block : parameter_blocks(m)) r.f64s_into(block);

  AdamState& a = cp.optimizer;
  a.config.lr = r.f64();
  a.config.beta1 = r.f64();
  a.config.beta2 = r.f64();
  a.config.eps = r.f64();
  a.step_count = r.u64();
  a.first_moment = r.f64s();
  a.second_moment = r.f64s();
  if (a.first_moment.size() != m.parameter_count() ||
      a.second_moment.size() != m.parameter_count()) {
    fail(ErrorKind::kFormat, "checkpoint optimizer state does not match the model");
  }

  cp.ledger.window_begin = r.u64();
  cp.ledger.entries.resize(r.count(32));
  for (auto& e : cp.ledger.entries) {
    e.times_seen = r.u64();
    e.times_flagged = r.u64();
    e.window_seen = r.u64();
    e.window_flagged = r.u64();
  }
  cp.ledger.suspects_per_step.resize(r.count(8));
  for (auto& s : cp.ledger.suspects_per_step) s = r.u64();

  cp.window.sum_loss = r.f64();
  cp.window.sum_l_cond = r.f64();
  cp.window.sum_l_uncond = r.f64();
  cp.window.suspects = r.u64();
  cp.window.steps = r.u64();

  cp.metrics.resize(r.count(48));
  for (auto& row : cp.metrics) {
    row.step = r.u64();
    row.mean_loss = r.f64();
    row.mean_l_cond = r.f64();
    row.mean_l_uncond = r.f64();
    row.suspect_count = r.u64();
    row.wallclock_ms = r.u64();
  }
  cp.elapsed_ms = r.u64();
  char trailer[8];
  r.raw(trailer, sizeof trailer);
  if (std::memcmp(trailer, kTrailer, sizeof trailer) != 0 || !r.at_end()) {
    fail(ErrorKind::kFormat, "checkpoint trailer is missing or corrupted");
  }
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  write_file(path, checkpoint_to_bytes(cp));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(read_file(path));
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::shared_ptr<const Dataset> select_subset(const Dataset& all, Subset subset) {
  auto out = std::make_shared<Dataset>();
  out->num_classes = all.num_classes;
  out->data_dim = all.data_dim;
  for (const auto& s : all.samples) {
    if (s.subset == subset) out->samples.push_back(s);
  }
  return out;
}

}  // namespace

Trainer::Trainer(TrainConfig config, Dataset data, bool /*fresh*/)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  for (std::size_t i = 0; i < data_.samples.size(); ++i) {
    if (data_.samples[i].id != i) {
      fail(ErrorKind::kInvalidArgument, "training data ids must be 0..n-1 in order");
    }
  }
  subset_a_ = select_subset(data_, Subset::kA);
  subset_b_ = select_subset(data_, Subset::kB);
  batcher_.emplace(*subset_a_, *subset_b_, config_.batch_size, config_.seed);
  started_ = std::chrono::steady_clock::now();
}

Trainer::Trainer(TrainConfig config, Dataset data) : Trainer(std::move(config), std::move(data), true) {
  std::vector<std::size_t> dims{config_.data_dim};
  dims.insert(dims.end(), config_.hidden_dims.begin(), config_.hidden_dims.end());
  dims.push_back(config_.data_dim);
  Rng init_rng(config_.seed, StreamId::kInit);
  model_ = mlp_init(dims, config_.num_classes, config_.embed_dim, config_.activation, init_rng);
  optimizer_ = AdamState::for_model(model_, config_.adam);
  ledger_ = PurityLedger(data_.samples.size(), config_.detection_window_begin());
}

Trainer Trainer::resume(Checkpoint cp, Dataset data) {
  if (cp.config.hash() != cp.config_hash) {
    fail(ErrorKind::kFormat, "checkpoint config hash mismatch");
  }
  Trainer t(std::move(cp.config), std::move(data), false);
  if (cp.ledger.entries.size() != t.data_.samples.size()) {
    fail(ErrorKind::kInvalidArgument, "checkpoint ledger does not match the training data");
  }
  t.model_ = std::move(cp.model);
  t.optimizer_ = std::move(cp.optimizer);
  t.ledger_ = std::move(cp.ledger);
  t.window_ = cp.window;
  t.metrics_ = std::move(cp.metrics);
  t.step_ = cp.step;
  t.elapsed_before_ms_ = cp.elapsed_ms;
  return t;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint cp;
  cp.config = config_;
  cp.model = model_;
  cp.optimizer = optimizer_;
  cp.step = step_;
  cp.config_hash = config_.hash();
  cp.ledger = ledger_;
  cp.window = window_;
  cp.metrics = metrics_;
  cp.elapsed_ms = elapsed_ms();
  return cp;
}

std::uint64_t Trainer::elapsed_ms() const {
  if (!config_.record_wallclock) return 0;
  const auto now = std::chrono::steady_clock::now();
  return elapsed_before_ms_ + static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(now - started_).count());
}

void Trainer::step_once() {
  const std::uint64_t step = step_ + 1;
  const std::vector<Sample> batch = batcher_->batch_at(step - 1);
  Rng rng(config_.seed, StreamId::kTrain, step);
  BatchOutcome out = purify_batch(model_, batch, step, config_.purify_config(), rng);
  if (!std::isfinite(out.loss)) {
    fail(ErrorKind::kNumeric, "non-finite training loss at step " + std::to_string(step));
  }
  try {
    adam_step(optimizer_, model_, out.grads);
  } catch (const Error& e) {
    fail(e.kind(), "step " + std::to_string(step) + ": " + e.what());
  }
  ledger_update(ledger_, out.decisions);

  window_.sum_loss += out.loss;
  window_.sum_l_cond += out.mean_l_cond;
  window_.sum_l_uncond += out.mean_l_uncond;
  window_.suspects += out.suspect_count;
  window_.steps += 1;
  step_ = step;

  if (step % config_.log_every == 0 || step == config_.iterations) {
    const double n = static_cast<double>(window_.steps);
    MetricsRow row;
    row.step = step;
    row.mean_loss = window_.sum_loss / n;
    row.mean_l_cond = window_.sum_l_cond / n;
    row.mean_l_uncond = window_.sum_l_uncond / n;
    row.suspect_count = window_.suspects;
    row.wallclock_ms = elapsed_ms();
    metrics_.push_back(row);
    window_ = {};
  }
}

void Trainer::run_until(std::uint64_t last_step) {
  last_step = std::min(last_step, config_.iterations);
  while (step_ < last_step) step_once();
}

TrainResult train(const TrainConfig& config) {
  Trainer trainer(config, load_training_data(config));
  trainer.run();
  TrainResult r;
  r.checkpoint = trainer.checkpoint();
  r.metrics = trainer.metrics();
  r.ledger = trainer.ledger();
  r.data = trainer.data();
  return r;
}

}  // namespace spfm
