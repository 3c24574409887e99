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

#include "spfm/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "spfm/error.hpp"
#include "spfm/textio.hpp"

namespace spfm {

using nlohmann::json;

namespace {

void emit(const LogSink& log, int level, const std::string& msg) {
  if (log) log(level, msg);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    fail(ErrorKind::kIo, "cannot create directory '" + dir.string() + "'");
  }
}

void write_run_files(const Trainer& t, const std::filesystem::path& dir) {
  save_checkpoint(t.checkpoint(), dir / "checkpoint.bin");
  write_file(dir / "metrics.csv", metrics_to_csv(t.metrics()));
  write_file(dir / "ledger.csv", ledger_to_csv(t.ledger(), t.data()));
}

std::string mode_name(TrainMode m) { return m == TrainMode::kSpfm ? "spfm" : "vanilla"; }

double corrupted_fraction(const Dataset& ds) {
  return ds.samples.empty() ? 0.0
                            : static_cast<double>(ds.corrupted_count()) /
                                  static_cast<double>(ds.samples.size());
}

}  // namespace

Dataset generate_from_json(const std::string& spec_json) {
  json j;
  try {
    j = json::parse(spec_json);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, std::string("generator spec is not valid JSON: ") + e.what());
  }
  return generate(GeneratorSpec::from_json(j));
}

json train_to_dir(const TrainConfig& config, const std::filesystem::path& out_dir,
                  const LogSink& log) {
  ensure_dir(out_dir);
  Dataset data = load_training_data(config);
  write_file(out_dir / "config.json", config.to_json().dump(2) + "\n");
  write_file(out_dir / "data.csv", dataset_to_string(data));
  emit(log, kLogInfo, "training " + mode_name(config.mode) + " for " +
                          std::to_string(config.iterations) + " steps on " +
                          std::to_string(data.size()) + " samples (" +
                          std::to_string(data.corrupted_count()) + " corrupted)");

  Trainer trainer(config, std::move(data));
  std::size_t logged = 0;
  try {
    while (!trainer.finished()) {
      trainer.run_until(trainer.step() + config.log_every);
      for (; logged < trainer.metrics().size(); ++logged) {
        const auto& r = trainer.metrics()[logged];
        emit(log, kLogDebug, "step " + std::to_string(r.step) + " loss " +
                                 format_double(r.mean_loss) + " suspects " +
                                 std::to_string(r.suspect_count));
      }
    }
  } catch (const Error& e) {
    emit(log, kLogError, std::string(e.what()) + "; keeping checkpoint at step " +
                             std::to_string(trainer.step()));
    write_run_files(trainer, out_dir);
    throw;
  }
  write_run_files(trainer, out_dir);

  std::uint64_t suspects = 0;
  for (auto s : trainer.ledger().suspects_per_step) suspects += s;
  json summary = {{"run_dir", out_dir.generic_string()},
                  {"mode", mode_name(config.mode)},
                  {"steps", trainer.step()},
                  {"final_mean_loss",
                   trainer.metrics().empty() ? 0.0 : trainer.metrics().back().mean_loss},
                  {"total_suspects", suspects}};
  emit(log, kLogInfo, "training finished: " + summary.dump());
  return summary;
}

std::optional<GeneratorSpec> reference_spec(const TrainConfig& config) {
  GeneratorSpec spec;
  if (const auto* g = std::get_if<GeneratorSpec>(&config.data_a)) {
    spec = *g;
  } else {
    const Dataset ds = load_dataset(std::get<std::filesystem::path>(config.data_a));
    try {
      spec = GeneratorSpec::from_json(ds.generator_spec);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  if (spec.generator != "mixture") return std::nullopt;
  return spec;
}

json eval_run(const std::filesystem::path& run_dir, const LogSink& log) {
  const Checkpoint cp = load_checkpoint(run_dir / "checkpoint.bin");
  const Dataset data = load_dataset(run_dir / "data.csv");
  const TrainConfig& cfg = cp.config;

  const DetectionReport det = detection_metrics(cp.ledger, data, cfg.detection_threshold);
  json out = {{"mode", mode_name(cfg.mode)},
              {"rho", corrupted_fraction(data)},
              {"seed", cfg.seed},
              {"step", cp.step},
              {"detection", det.to_json()},
              {"fidelity", nullptr}};

  if (const auto ref = reference_spec(cfg)) {
    const FidelityReport fid = evaluate_fidelity(cp.model, *ref, cfg.eval_n_per_class,
                                                 cfg.guidance_scale, cfg.ode_steps, cfg.seed);
    out["fidelity"] = fid.to_json();
  } else {
    emit(log, kLogInfo, "reference data is not a Gaussian mixture; fidelity skipped");
  }
  write_file(run_dir / "eval.json", out.dump(2) + "\n");
  return out;
}

json report_runs(const std::vector<std::filesystem::path>& run_dirs,
                 const std::filesystem::path& out_dir) {
  std::vector<RunRecord> runs;
  for (const auto& dir : run_dirs) {
    json ev;
    try {
      ev = json::parse(read_file(dir / "eval.json"));
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, "eval.json in '" + dir.string() + "' is malformed: " + e.what());
    }
    RunRecord r;
    try {
      r.mode = ev.at("mode").get<std::string>();
      r.rho = ev.at("rho").get<double>();
      r.seed = ev.at("seed").get<std::uint64_t>();
      r.detection = DetectionReport::from_json(ev.at("detection"));
      if (!ev.at("fidelity").is_null()) r.fidelity = FidelityReport::from_json(ev.at("fidelity"));
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, "eval.json in '" + dir.string() + "' is incomplete: " + e.what());
    }
    r.metrics = metrics_from_csv(read_file(dir / "metrics.csv"));
    runs.push_back(std::move(r));
  }
  const auto files = emit_report(runs, out_dir);
  json written = json::array();
  for (const auto& f : files) written.push_back(f.generic_string());
  return {{"runs", runs.size()}, {"files", written}};
}

std::vector<AuditRow> purify_audit(const Checkpoint& cp, const Dataset& ds,
                                   std::size_t n_draws, std::uint64_t seed) {
  if (ds.data_dim != cp.model.in_dim() || ds.num_classes != cp.model.num_classes) {
    fail(ErrorKind::kShapeMismatch, "dataset does not match the checkpoint's model");
  }
  std::vector<AuditRow> rows;
  rows.reserve(ds.samples.size());
  for (const Sample& s : ds.samples) {
    // One stream per sample keeps scores independent of dataset order.
    Rng rng(seed, StreamId::kSample, 0x41554449ULL ^ splitmix64(s.id));
    rows.push_back({s.id, spfm_margin(cp.model, s, cp.config.t_policy, n_draws, rng), s.label,
                    s.is_corrupted});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const AuditRow& a, const AuditRow& b) {
    if (a.margin != b.margin) return a.margin > b.margin;
    return a.sample_id < b.sample_id;
  });
  return rows;
}

std::string audit_to_csv(const std::vector<AuditRow>& rows) {
  std::ostringstream os;
  os << "rank,sample_id,margin,label,is_corrupted\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << i + 1 << ',' << rows[i].sample_id << ',' << format_double(rows[i].margin) << ','
       << rows[i].label << ',' << (rows[i].is_corrupted ? 1 : 0) << '\n';
  }
  return os.str();
}

json audit_summary(const std::vector<AuditRow>& rows) {
  double sum_c = 0.0, sum_k = 0.0;
  std::size_t n_c = 0, n_k = 0, positive = 0;
  for (const auto& r : rows) {
    if (r.is_corrupted) sum_c += r.margin, ++n_c;
    else sum_k += r.margin, ++n_k;
    positive += r.margin > 0.0 ? 1 : 0;
  }
  return {{"samples", rows.size()},
          {"positive_margin", positive},
          {"corrupted", n_c},
          {"mean_margin_corrupted", n_c ? sum_c / static_cast<double>(n_c) : 0.0},
          {"mean_margin_clean", n_k ? sum_k / static_cast<double>(n_k) : 0.0}};
}

Tensor2 sample_points(const VelocityModel& model, Condition cond, std::size_t n, double w,
                      std::size_t steps, std::uint64_t seed) {
  Tensor2 out(n, model.in_dim());
  Rng rng(seed, StreamId::kSample, cond.is_null() ? 0xffffULL : cond.id());
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = sample_ode(model, cond, w, steps, rng);
    std::copy(x.begin(), x.end(), out.row(i).begin());
  }
  return out;
}

std::string points_to_csv(const Tensor2& points) {
  std::ostringstream os;
  for (std::size_t c = 0; c < points.cols; ++c) os << (c ? "," : "") << "x_" << c;
  os << '\n';
  for (std::size_t r = 0; r < points.rows; ++r) {
    for (std::size_t c = 0; c < points.cols; ++c) {
      os << (c ? "," : "") << format_double(points(r, c));
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace spfm
